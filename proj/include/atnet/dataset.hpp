#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "atnet/synth.hpp"
#include "atnet/tensor.hpp"

namespace atnet {

struct TrainingPair {
    Tensor degraded;
    Tensor clean;
};

/// Center crop so both sides are multiples of divisor.
Image center_crop_to_multiple(const Image& img, int divisor);

/// Degraded/clean pairs listed in a manifest, center-cropped to the network's
/// spatial divisor. Pairs are decoded on first access and kept in memory.
class PairDataset {
public:
    PairDataset(std::vector<ManifestRecord> records, int divisor);
    static PairDataset from_manifest(const std::filesystem::path& manifest, int divisor);

    std::size_t size() const { return records_.size(); }
    const TrainingPair& get(std::size_t index);
    const ManifestRecord& record(std::size_t index) const { return records_.at(index); }

private:
    std::vector<ManifestRecord> records_;
    int divisor_;
    std::vector<std::optional<TrainingPair>> cache_;
};

/// Seeded epoch shuffling. Iteration t reads positions [t*B, (t+1)*B) of the
/// concatenated epoch permutations, so the order depends only on (seed, t).
class EpochSampler {
public:
    EpochSampler(std::uint64_t seed, std::size_t dataset_size);

    std::vector<std::size_t> batch(std::uint64_t iteration, int batch_size);
    const std::vector<std::size_t>& permutation(std::uint64_t epoch);

private:
    std::uint64_t seed_;
    std::size_t size_;
    std::map<std::uint64_t, std::vector<std::size_t>> epochs_;
};

}  // namespace atnet
