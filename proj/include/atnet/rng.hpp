#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace atnet {

/// Mixes a parent seed with a path of child indices (splitmix64 finalizer per step).
/// Used everywhere a parallel or per-item stream is needed, so results never
/// depend on execution order.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

/// Seeded random stream. The engine is mt19937_64, whose output sequence is fixed
/// by the C++ standard; the uniform and normal conversions are implemented here
/// rather than through <random> distributions, which are implementation-defined.
///
/// Single owner: fork() a child instead of sharing one instance across tasks.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). Rejection sampled, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller (no cached second value, so draws stay aligned).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    SeededRng fork(std::uint64_t index) const { return SeededRng(derive_seed(seed_, {index})); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace atnet
