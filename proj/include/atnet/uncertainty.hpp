#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "atnet/image.hpp"
#include "atnet/network.hpp"
#include "atnet/rng.hpp"

namespace atnet {

inline constexpr int kDefaultMcSamples = 10;

/// Outputs of S forward passes of the prior network, each with its own dropout mask.
struct McSampleSet {
    std::vector<Tensor> samples;
    std::vector<std::uint64_t> seeds;

    int count() const { return static_cast<int>(samples.size()); }
};

enum class VarianceReduction { per_channel, channel_mean };

/// Per-pixel variance of the MC samples, C x H x W (C = 1 after channel_mean).
struct UncertaintyMap {
    Tensor values;
    VarianceReduction reduction = VarianceReduction::per_channel;
};

/// The prior network and its weights.
struct PriorNetwork {
    NetworkSpec spec;
    ParameterStore params;
};

/// S passes in eval_mc_dropout mode; pass i draws masks from derive_seed(rng.seed(), {i}).
/// The caller's rng is not advanced.
McSampleSet mc_forward_samples(const PriorNetwork& net, const Tensor& degraded, int samples, const SeededRng& rng);

/// Population variance (divide by S). Computed as a two-pass sum of squared
/// deviations taken relative to the first sample, so identical samples give exactly 0.
UncertaintyMap variance_map(const McSampleSet& set, VarianceReduction reduction = VarianceReduction::per_channel);

struct PriorEstimate {
    UncertaintyMap prior;
    Tensor mean_prediction;
};

PriorEstimate estimate_prior(const PriorNetwork& net, const Tensor& degraded, int samples, const SeededRng& rng,
                             VarianceReduction reduction = VarianceReduction::per_channel);

/// Sample mean of the set.
Tensor sample_mean(const McSampleSet& set);

/// Raw map: "ATUMAP01" | u32 height | u32 width | u32 channels | f32 values (H x W x C order), little-endian.
void save_uncertainty_map(const UncertaintyMap& map, const std::filesystem::path& path);
UncertaintyMap load_uncertainty_map(const std::filesystem::path& path);

/// 8-bit grayscale preview: channel mean, then per-map min-max normalization.
/// A constant map renders black.
Image uncertainty_preview(const UncertaintyMap& map);

}  // namespace atnet
