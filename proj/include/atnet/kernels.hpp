#pragma once

#include <span>

#include "atnet/tensor.hpp"

namespace atnet {

enum class UpsampleMode { bilinear, nearest };

/// Stride-1 square convolution with zero padding kernel/2. Weight layout is
/// [out][in][ky][kx]; bias has one entry per output channel.
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// OpenMP kernels used by the network. Every output element is produced by exactly
// one thread with a fixed summation order, so results do not depend on the thread
// count.
namespace kernels {

Tensor conv2d(const Tensor& input, std::span<const double> weight, std::span<const double> bias, const ConvShape& shape);
Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight, const ConvShape& shape);
/// Accumulates into grad_weight and grad_bias.
void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, const ConvShape& shape,
                            std::span<double> grad_weight, std::span<double> grad_bias);

Tensor avg_pool2x(const Tensor& input);
Tensor avg_pool2x_backward(const Tensor& grad_output);

/// Bilinear uses half-pixel centers (source = (dst + 0.5) / 2 - 0.5, clamped to the border).
Tensor upsample2x(const Tensor& input, UpsampleMode mode);
Tensor upsample2x_backward(const Tensor& grad_output, UpsampleMode mode);

}  // namespace kernels

// Serial, loop-per-definition versions of the same kernels. Kept for tests and
// the benchmark; not used on the training path.
namespace kernels::reference {

Tensor conv2d(const Tensor& input, std::span<const double> weight, std::span<const double> bias, const ConvShape& shape);
Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight, const ConvShape& shape);
void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, const ConvShape& shape,
                            std::span<double> grad_weight, std::span<double> grad_bias);

Tensor avg_pool2x(const Tensor& input);
Tensor avg_pool2x_backward(const Tensor& grad_output);

Tensor upsample2x(const Tensor& input, UpsampleMode mode);
Tensor upsample2x_backward(const Tensor& grad_output, UpsampleMode mode);

}  // namespace kernels::reference

/// Sets the OpenMP worker cap. Values < 1 leave the runtime default.
void set_worker_threads(int threads);

}  // namespace atnet
