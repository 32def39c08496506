#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atnet/image.hpp"
#include "atnet/rng.hpp"

namespace atnet {

/// Per-pixel displacement in pixels. Sampling convention: output(p) = input(p + d(p)).
struct DeformationField {
    int height = 0;
    int width = 0;
    std::vector<double> dx;
    std::vector<double> dy;

    DeformationField() = default;
    DeformationField(int h, int w) : height(h), width(w), dx(static_cast<std::size_t>(h) * w, 0.0), dy(dx) {}

    double max_magnitude() const;
    bool operator==(const DeformationField&) const = default;
};

/// Normalized odd-sized blur kernel, row-major size x size.
struct PsfKernel {
    int size = 1;
    std::vector<double> weights{1.0};

    double at(int v, int u) const { return weights[static_cast<std::size_t>(v) * size + u]; }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct DegradationConfig {
    int n_warp_centers = 32;
    Range warp_strength{0.5, 4.0};
    Range warp_falloff_sigma{8.0, 24.0};
    Range psf_sigma{0.5, 3.0};
    double noise_sigma = 0.01;
    /// Ablation switch: deform before blurring instead of G(H(x)).
    bool warp_first = false;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument on reversed or negative ranges.
    void validate() const;
};

/// Returns a config whose degrade() is the identity map.
DegradationConfig identity_degradation(std::uint64_t seed = 0);

DeformationField sample_deformation_field(const DegradationConfig& cfg, int height, int width, SeededRng& rng);

/// Bilinear resampling at p + d(p), coordinates clamped to the border, output clamped to [0, 1].
Image warp_image(const Image& img, const DeformationField& field);

/// 2 * ceil(3 sigma) + 1.
int psf_size_for_sigma(double sigma);
PsfKernel make_gaussian_psf(double sigma, int size);

/// Per-channel 2-D correlation with edge-replicated borders.
Image convolve2d(const Image& img, const PsfKernel& kernel);

struct Degradation {
    Image degraded;
    DeformationField field;
    PsfKernel psf;
    double psf_sigma = 0.0;
};

/// y = clamp(G(H(x)) + noise). Draw order from rng: psf sigma, then the field, then noise.
Degradation degrade(const Image& clean, const DegradationConfig& cfg, SeededRng& rng);

struct ManifestRecord {
    std::filesystem::path clean;     // absolute (resolved against the manifest directory)
    std::filesystem::path degraded;  // absolute
    std::uint64_t seed = 0;
    double psf_sigma = 0.0;
};

/// JSON-lines manifest; paths stored relative to the manifest's directory.
void write_manifest(const std::filesystem::path& manifest_path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest_path);

/// Seed of pair (image_index, pair_index) for a dataset generated from cfg.
std::uint64_t pair_seed(const DegradationConfig& cfg, std::uint64_t image_index, std::uint64_t pair_index);

/// Degrades every image in clean_dir pairs_per_image times into out_dir/degraded/ and
/// writes out_dir/manifest.jsonl. Returns the manifest path.
std::filesystem::path generate_dataset(const std::filesystem::path& clean_dir, const std::filesystem::path& out_dir,
                                       const DegradationConfig& cfg, int pairs_per_image);

}  // namespace atnet
