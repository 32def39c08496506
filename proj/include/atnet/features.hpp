#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "atnet/network.hpp"

namespace atnet {

/// Deep-feature provider for the perceptual loss and the d_VGG metric.
/// Implementations own their preprocessing and must be deterministic.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    /// Name of the tap point the features come from (e.g. "pool3").
    virtual std::string tap() const = 0;
    virtual Tensor features(const Tensor& image) const = 0;
    /// Vector-Jacobian product: dL/dimage given dL/dfeatures evaluated at image.
    virtual Tensor backward(const Tensor& image, const Tensor& grad_features) const = 0;
};

/// F(x) = x. Turns the perceptual loss into plain MSE; used to check loss plumbing.
class IdentityExtractor final : public FeatureExtractor {
public:
    std::string tap() const override { return "identity"; }
    Tensor features(const Tensor& image) const override { return image; }
    Tensor backward(const Tensor&, const Tensor& grad_features) const override { return grad_features; }
};

enum class FeatureTap { pool3, pool5 };

/// Conv3x3+ReLU / average-pool stack truncated after the third or fifth pooling.
/// Weights come either from a checkpoint file holding a pretrained descriptor
/// (conv/downsample layers only) or from a fixed seeded random init.
class ConvFeatureExtractor final : public FeatureExtractor {
public:
    ConvFeatureExtractor(const NetworkSpec& full_spec, const ParameterStore& full_params, FeatureTap tap);

    static ConvFeatureExtractor random_descriptor(std::uint64_t seed, FeatureTap tap);
    static ConvFeatureExtractor from_weights_file(const std::filesystem::path& path, FeatureTap tap);

    std::string tap() const override { return tap_ == FeatureTap::pool3 ? "pool3" : "pool5"; }
    Tensor features(const Tensor& image) const override;
    Tensor backward(const Tensor& image, const Tensor& grad_features) const override;

    const NetworkSpec& spec() const { return spec_; }
    const ParameterStore& params() const { return params_; }

private:
    FeatureTap tap_;
    NetworkSpec spec_;
    ParameterStore params_;
};

/// Five conv/pool stages with 3 -> 16 -> 32 -> 64 -> 64 -> 64 channels.
NetworkSpec random_descriptor_spec();

/// Builds the extractor named by a weights path, falling back to the seeded random
/// descriptor when the path is empty.
std::shared_ptr<const FeatureExtractor> make_feature_extractor(const std::filesystem::path& weights, std::uint64_t seed,
                                                               FeatureTap tap);

}  // namespace atnet
