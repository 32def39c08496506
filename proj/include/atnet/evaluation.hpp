#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atnet/checkpoint.hpp"
#include "atnet/features.hpp"
#include "atnet/image.hpp"
#include "atnet/uncertainty.hpp"

namespace atnet {

/// Mean squared distance between deep features of a and b.
double d_vgg(const Image& a, const Image& b, const FeatureExtractor& extractor);

/// Loaded prior + restoration networks.
struct RestorationModels {
    PriorNetwork prior;
    NetworkSpec restoration_spec;
    ParameterStore restoration_params;

    static RestorationModels from_checkpoints(const Checkpoint& prior_ckpt, const Checkpoint& restoration_ckpt);
    VarianceReduction reduction() const;
};

struct Restoration {
    Image restored;
    UncertaintyMap prior;
};

/// Edge-pads the image to the networks' spatial divisor, estimates the prior with
/// `samples` MC passes, runs the restoration network deterministically and crops back.
Restoration restore_image(const RestorationModels& models, const Image& degraded, int samples, const SeededRng& rng);

/// Prior only (same padding rules).
UncertaintyMap estimate_image_prior(const PriorNetwork& prior, const Image& degraded, int samples, const SeededRng& rng,
                                    VarianceReduction reduction = VarianceReduction::per_channel);

struct MetricRow {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double d_vgg = 0.0;
};

struct MetricSummary {
    std::size_t count = 0;
    /// Mean over finite PSNR rows; rows with the infinite sentinel are counted separately.
    double psnr = 0.0;
    std::size_t psnr_infinite = 0;
    double ssim = 0.0;
    double d_vgg = 0.0;
};

MetricSummary summarize(const std::vector<MetricRow>& rows);

struct TopKResult {
    std::vector<int> ks;
    /// Percent of probes whose identity is among the K most similar gallery vectors.
    std::vector<double> accuracy;
    std::size_t probes = 0;
};

struct MetricsReport {
    std::vector<MetricRow> restored;
    /// Degraded input scored against the clean image.
    std::vector<MetricRow> baseline;
    MetricSummary restored_summary;
    MetricSummary baseline_summary;
    std::optional<TopKResult> topk_restored;
    std::optional<TopKResult> topk_baseline;
    std::map<std::string, std::string> config;

    std::string to_json() const;
    std::string to_table() const;
};

/// For every manifest pair: prior from the MC passes (seed prior_seed(seed, index)),
/// deterministic restoration, and PSNR/SSIM/d_VGG against the clean image, together
/// with the same metrics for the unrestored input.
MetricsReport evaluate_restoration(const std::filesystem::path& manifest, const Checkpoint& prior_ckpt,
                                   const Checkpoint& restoration_ckpt, int samples, std::uint64_t seed,
                                   const FeatureExtractor& extractor);

// ---------------------------------------------------------------------------
// Identity retrieval

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Unit-norm embedding. Deterministic.
    virtual std::vector<double> embed(const Image& img) const = 0;
};

/// Deterministic stand-in for a face descriptor: grayscale image sampled on a
/// grid x grid lattice, linearly projected to `dim` and L2-normalized.
class ProjectionEmbedding final : public EmbeddingProvider {
public:
    ProjectionEmbedding(int grid, int dim, std::vector<double> weights);

    static ProjectionEmbedding random(std::uint64_t seed, int grid = 16, int dim = 64);
    /// JSON file {"grid": g, "dim": d, "weights": [d * g * g numbers, row-major]}.
    static ProjectionEmbedding from_file(const std::filesystem::path& path);

    std::vector<double> embed(const Image& img) const override;

private:
    int grid_;
    int dim_;
    std::vector<double> weights_;
};

/// Gallery vectors in insertion order, each tagged with its identity label.
struct Gallery {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> vectors;

    void add(std::string label, std::vector<double> vector);
    bool has_label(const std::string& label) const;
    std::size_t size() const { return vectors.size(); }

    /// Layout: dir/<identity>/<images>. Identities and images in sorted order.
    static Gallery from_directory(const std::filesystem::path& dir, const EmbeddingProvider& provider);
};

struct LabeledImage {
    std::string label;
    Image image;
};

/// Images under dir/<identity>/, sorted.
std::vector<LabeledImage> load_labeled_images(const std::filesystem::path& dir);

/// Top-K retrieval by cosine similarity; ties keep gallery insertion order.
TopKResult topk_from_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& probes,
                                const Gallery& gallery, const std::vector<int>& ks = {1, 3, 5});
TopKResult topk_identification(const std::vector<LabeledImage>& probes, const Gallery& gallery,
                               const EmbeddingProvider& provider, const std::vector<int>& ks = {1, 3, 5});

}  // namespace atnet
