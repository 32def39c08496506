#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atnet/checkpoint.hpp"
#include "atnet/image.hpp"
#include "atnet/network.hpp"
#include "atnet/rng.hpp"
#include "atnet/tensor.hpp"

namespace atnet::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

Image random_image(int h, int w, int c, std::uint64_t seed);
/// Smooth image (sum of a few random sinusoids), values well inside (0, 1).
Image smooth_image(int h, int w, int c, std::uint64_t seed);
Tensor random_tensor(int c, int h, int w, std::uint64_t seed, double scale = 1.0);

std::string read_file(const std::filesystem::path& path);
/// Every regular file below dir, keyed by relative path, with its bytes.
std::vector<std::pair<std::string, std::string>> snapshot_tree(const std::filesystem::path& dir);

struct GradCheck {
    std::size_t params_checked = 0;
    std::size_t inputs_checked = 0;
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t kinks = 0;       // points re-probed at a smaller step
    std::size_t unresolved = 0;  // points whose one-sided differences never agreed
};

/// Central finite differences of L = sum(w * forward(x)) against backward().
/// Samples `param_samples` scalars (at least one per tensor) and `input_samples`
/// input positions. Dropout masks are held fixed by reseeding per evaluation.
/// A point whose step straddles a kink is re-probed at h/4, h/16, ... down to 1e-7.
GradCheck check_gradients(const NetworkSpec& spec, const ParameterStore& params, const Tensor& input, ForwardMode mode,
                          std::uint64_t seed, std::size_t param_samples, std::size_t input_samples,
                          double h = 1e-4);

/// Relative error with an absolute floor so that two near-zero values compare equal.
double relative_error(double a, double b);

/// The end-to-end toy run: 4 smooth 64x64 images, default degradation, both
/// training stages for `iters` iterations at batch 4.
struct SmokeRun {
    std::filesystem::path manifest;
    std::filesystem::path prior_dir;
    std::filesystem::path restore_dir;
    Checkpoint prior;
    Checkpoint restoration;
    double prior_first_loss = 0.0;
    double prior_last_loss = 0.0;
    double restore_first_loss = 0.0;
    double restore_last_loss = 0.0;
};

inline constexpr std::uint64_t kSmokeSeed = 2021;

SmokeRun run_smoke(const std::filesystem::path& root, std::uint64_t iters, std::uint64_t seed = kSmokeSeed);

}  // namespace atnet::test
