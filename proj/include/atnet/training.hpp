#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "atnet/checkpoint.hpp"
#include "atnet/dataset.hpp"
#include "atnet/loss.hpp"
#include "atnet/optimizer.hpp"
#include "atnet/uncertainty.hpp"

namespace atnet {

inline constexpr std::uint64_t kPriorIterations = 200'000;
inline constexpr std::uint64_t kRestorationIterations = 1'500'000;
inline constexpr int kDefaultBatchSize = 10;

enum class Stage { prior, restoration };

struct TrainRun {
    Stage stage = Stage::prior;
    int batch_size = kDefaultBatchSize;
    std::uint64_t max_iters = kPriorIterations;
    std::uint64_t seed = 0;
    /// Intermediate checkpoint cadence in iterations; 0 writes only the final one.
    std::uint64_t checkpoint_every = 0;
    std::filesystem::path manifest;
    /// Empty: train in memory, write nothing.
    std::filesystem::path output_dir;
    AdamConfig adam;
    /// Decoder upsampling of the trained network.
    UpsampleMode upsample = UpsampleMode::bilinear;
    /// Record measured wall time in the loss log. Off by default so logs are
    /// byte-comparable across reruns (wall_ms is then written as 0).
    bool log_wall_time = false;

    void validate() const;
};

/// Stage-2 prior settings.
struct PriorSettings {
    int samples = kDefaultMcSamples;
    int prior_channels = 3;
    /// Each example's prior depends only on (seed, example index), so caching it is
    /// exact; disabling recomputes it on every visit.
    bool cache = true;
};

struct LossRecord {
    std::uint64_t iter = 0;
    LossValue loss;
    double wall_ms = 0.0;
    bool skipped = false;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> losses;
};

/// Seed of the MC-dropout prior for dataset example `index` during stage 2 / evaluation.
std::uint64_t prior_seed(std::uint64_t run_seed, std::uint64_t index);

/// Stacks the degraded image and its prior into the restoration network input.
Tensor restoration_input(const Tensor& degraded, const UncertaintyMap& prior);

/// Stage 1: the prior network learns degraded -> clean with dropout active.
/// Resumes from `resume` (parameters, optimizer state, iteration) when given.
TrainResult train_prior_network(const TrainRun& run, const LossConfig& loss_cfg, double dropout_rate,
                                const std::optional<Checkpoint>& resume = std::nullopt);

/// Stage 2: the restoration network learns (degraded, prior) -> clean, with priors
/// from the frozen stage-1 network.
TrainResult train_restoration_network(const TrainRun& run, const Checkpoint& prior_ckpt, const PriorSettings& prior,
                                      const LossConfig& loss_cfg,
                                      const std::optional<Checkpoint>& resume = std::nullopt);

/// One line of the loss log.
std::string format_loss_record(const LossRecord& record);

}  // namespace atnet
