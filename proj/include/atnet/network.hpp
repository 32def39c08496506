#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "atnet/kernels.hpp"
#include "atnet/rng.hpp"
#include "atnet/tensor.hpp"

namespace atnet {

/// Raised when a loss or gradient is NaN/Inf.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Multi-scale residual block: 1x1 entry conv (m->n), ReLU, split into scale_groups
/// channel groups, hierarchical 3x3 convs across groups, 1x1 exit conv (n->n), plus
/// a shortcut (identity when m == n, 1x1 conv otherwise).
struct Res2BlockLayer {
    int in_channels = 0;
    int out_channels = 0;
    int scale_groups = 4;
};

/// 3x3 conv (padding 1) followed by ReLU.
struct Conv3x3Layer {
    int in_channels = 0;
    int out_channels = 0;
};

/// 2x2 average pooling.
struct DownsampleLayer {};
/// 2x spatial upsampling (mode set on the NetworkSpec).
struct UpsampleLayer {};

using LayerSpec = std::variant<Res2BlockLayer, Conv3x3Layer, DownsampleLayer, UpsampleLayer>;

enum class OutputActivation { sigmoid, none };

enum class ForwardMode { train, eval_deterministic, eval_mc_dropout };

struct NetworkSpec {
    std::string name;
    int input_channels = 3;
    std::vector<LayerSpec> layers;
    double dropout_rate = 0.1;
    /// Dropout after every parameterized layer except the output layer.
    bool dropout_everywhere = false;
    UpsampleMode upsample = UpsampleMode::bilinear;
    OutputActivation output = OutputActivation::sigmoid;

    int output_channels() const;
    int downsample_count() const;
    /// Spatial dims of the input must be divisible by this.
    int spatial_divisor() const;
    /// Throws InvalidArgument on channel incompatibility or bad block parameters.
    void validate() const;
    /// True when mode applies a dropout mask after layer index.
    bool dropout_after(std::size_t layer_index, ForwardMode mode) const;

    /// Single-line text form, stored in checkpoints and compared on load.
    std::string descriptor() const;
    static NetworkSpec from_descriptor(const std::string& text);

    bool operator==(const NetworkSpec& other) const { return descriptor() == other.descriptor(); }
};

inline constexpr double kDefaultDropoutRate = 0.1;

/// Prior network: eleven-layer Res2Block UNet, 3 -> 3 channels, dropout everywhere.
NetworkSpec build_atnet1_spec(double dropout_rate = kDefaultDropoutRate);
/// Restoration network over (degraded image, prior) with 3 + prior_channels inputs.
NetworkSpec build_atnet_spec(int prior_channels = 3);

struct ParameterTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;

    bool operator==(const ParameterTensor&) const = default;
};

/// Named learnable arrays in a fixed order. Values are float32, matching the
/// checkpoint encoding, so a save/load round trip is lossless.
class ParameterStore {
public:
    void add(std::string name, std::vector<int> shape, std::vector<float> values);

    const ParameterTensor& get(const std::string& name) const;
    ParameterTensor& get(const std::string& name);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;

    std::vector<ParameterTensor>& tensors() { return tensors_; }
    const std::vector<ParameterTensor>& tensors() const { return tensors_; }
    std::size_t size() const { return tensors_.size(); }
    std::size_t scalar_count() const;

    bool operator==(const ParameterStore& other) const { return tensors_ == other.tensors_; }

private:
    std::vector<ParameterTensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// Names and shapes of every parameter the spec needs, in store order.
std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const NetworkSpec& spec);

/// Fan-in scaled uniform init: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ParameterStore init_parameters(const NetworkSpec& spec, std::uint64_t seed);
/// Every value set to zero (useful for identity fixtures).
ParameterStore zero_parameters(const NetworkSpec& spec);
/// Throws InvalidArgument unless names and shapes match the spec exactly.
void check_parameters(const NetworkSpec& spec, const ParameterStore& params);

/// Gradient arrays aligned with a ParameterStore (same order, same sizes).
struct Gradients {
    std::vector<std::vector<double>> values;

    static Gradients zeros_like(const ParameterStore& params);
    void add(const Gradients& other);
    void scale(double factor);
    bool all_finite() const;
};

// Intermediate values recorded by a forward pass, consumed by backward().
struct Res2BlockTape {
    Tensor input;
    Tensor entry_pre;
    std::vector<Tensor> group_inputs;
    std::vector<Tensor> group_pre;
    Tensor concat;
};

struct LayerTape {
    Tensor input;
    Tensor pre_activation;  // Conv3x3 only
    Res2BlockTape block;    // Res2Block only
    Tensor dropout_mask;    // empty when no dropout
};

struct ForwardTape {
    std::vector<LayerTape> layers;
    Tensor output;
};

/// Sequential forward. In train/eval_mc_dropout modes, layers selected by
/// NetworkSpec::dropout_after get an inverted-dropout mask drawn from rng
/// (Bernoulli(1 - rate) / (1 - rate)). rng may be null when no mask is needed.
Tensor forward(const NetworkSpec& spec, const ParameterStore& params, const Tensor& input, ForwardMode mode,
               SeededRng* rng, ForwardTape* tape = nullptr);

/// Reverse pass over a recorded tape. Accumulates parameter gradients into grads and
/// returns the gradient with respect to the network input. Dropout masks are reused
/// from the tape.
Tensor backward(const NetworkSpec& spec, const ParameterStore& params, const ForwardTape& tape,
                const Tensor& grad_output, Gradients& grads);

/// Loss closure: returns the scalar loss and writes dLoss/dOutput.
using LossClosure = std::function<double(const Tensor& output, Tensor& grad_output)>;

struct GradientResult {
    double loss = 0.0;
    Tensor output;
    Gradients grads;
    Tensor input_grad;
};

/// Forward with tape, loss, reverse pass. Throws NumericalError on a non-finite loss.
GradientResult compute_gradients(const NetworkSpec& spec, const ParameterStore& params, const Tensor& input,
                                 ForwardMode mode, SeededRng* rng, const LossClosure& loss);

// Single-layer entry points, exposed for tests and gradient checks.
Tensor res2block_forward(const Res2BlockLayer& layer, const ParameterStore& params, const std::string& prefix,
                         const Tensor& input, Res2BlockTape* tape = nullptr);
Tensor res2block_backward(const Res2BlockLayer& layer, const ParameterStore& params, const std::string& prefix,
                          const Res2BlockTape& tape, const Tensor& grad_output, Gradients& grads);

/// Parameter name prefix of layer index i ("L<i>").
std::string layer_prefix(std::size_t index);

}  // namespace atnet
