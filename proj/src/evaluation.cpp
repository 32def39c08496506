#include "atnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "atnet/metrics.hpp"
#include "atnet/synth.hpp"
#include "atnet/training.hpp"

namespace atnet {

namespace fs = std::filesystem;

double d_vgg(const Image& a, const Image& b, const FeatureExtractor& extractor) {
    require_same_shape(a, b, "d_vgg");
    const Tensor fa = extractor.features(to_tensor(a));
    const Tensor fb = extractor.features(to_tensor(b));
    if (!fa.same_shape(fb)) throw InvalidArgument("d_vgg: feature shapes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const double d = fa.data[i] - fb.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(fa.size());
}

// ---------------------------------------------------------------------------
// Restoration

RestorationModels RestorationModels::from_checkpoints(const Checkpoint& prior_ckpt, const Checkpoint& restoration_ckpt) {
    if (prior_ckpt.spec.input_channels != 3 || prior_ckpt.spec.output_channels() != 3)
        throw CheckpointError("prior checkpoint does not hold a 3->3 channel network");
    const int prior_channels = restoration_ckpt.spec.input_channels - 3;
    if (prior_channels != 1 && prior_channels != 3)
        throw CheckpointError("restoration checkpoint expects " + std::to_string(restoration_ckpt.spec.input_channels) +
                              " input channels; need 4 or 6");
    return {{prior_ckpt.spec, prior_ckpt.params}, restoration_ckpt.spec, restoration_ckpt.params};
}

VarianceReduction RestorationModels::reduction() const {
    return restoration_spec.input_channels == 4 ? VarianceReduction::channel_mean : VarianceReduction::per_channel;
}

namespace {

Tensor padded_input(const Image& img, int divisor) {
    if (img.channels != 3) throw InvalidArgument("restoration expects an RGB image");
    validate_pipeline_image(img);
    const Tensor t = to_tensor(img);
    return pad_replicate(t, round_up(t.height, divisor), round_up(t.width, divisor));
}

}  // namespace

UncertaintyMap estimate_image_prior(const PriorNetwork& prior, const Image& degraded, int samples, const SeededRng& rng,
                                    VarianceReduction reduction) {
    const Tensor input = padded_input(degraded, prior.spec.spatial_divisor());
    UncertaintyMap map = estimate_prior(prior, input, samples, rng, reduction).prior;
    map.values = crop(map.values, degraded.height, degraded.width);
    return map;
}

Restoration restore_image(const RestorationModels& models, const Image& degraded, int samples, const SeededRng& rng) {
    const int divisor = std::max(models.prior.spec.spatial_divisor(), models.restoration_spec.spatial_divisor());
    const Tensor input = padded_input(degraded, divisor);
    UncertaintyMap prior = estimate_prior(models.prior, input, samples, rng, models.reduction()).prior;
    const Tensor out = forward(models.restoration_spec, models.restoration_params, restoration_input(input, prior),
                               ForwardMode::eval_deterministic, nullptr);
    prior.values = crop(prior.values, degraded.height, degraded.width);
    return {clamp01(to_image(crop(out, degraded.height, degraded.width))), std::move(prior)};
}

// ---------------------------------------------------------------------------
// Metrics report

MetricSummary summarize(const std::vector<MetricRow>& rows) {
    MetricSummary s;
    s.count = rows.size();
    std::size_t finite = 0;
    for (const auto& r : rows) {
        if (std::isinf(r.psnr)) {
            ++s.psnr_infinite;
        } else {
            s.psnr += r.psnr;
            ++finite;
        }
        s.ssim += r.ssim;
        s.d_vgg += r.d_vgg;
    }
    s.psnr = finite ? s.psnr / finite : kPsnrInfinite;
    if (!rows.empty()) {
        s.ssim /= rows.size();
        s.d_vgg /= rows.size();
    }
    return s;
}

namespace {

nlohmann::ordered_json metric_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

nlohmann::ordered_json rows_json(const std::vector<MetricRow>& rows, const MetricSummary& s) {
    nlohmann::ordered_json j;
    j["mean"] = {{"count", s.count},
                 {"psnr", metric_json(s.psnr)},
                 {"psnr_infinite", s.psnr_infinite},
                 {"ssim", s.ssim},
                 {"d_vgg", s.d_vgg}};
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"id", r.id}, {"psnr", metric_json(r.psnr)}, {"ssim", r.ssim}, {"d_vgg", r.d_vgg}});
    return j;
}

nlohmann::ordered_json topk_json(const TopKResult& t) {
    nlohmann::ordered_json j;
    j["probes"] = t.probes;
    for (std::size_t i = 0; i < t.ks.size(); ++i) j["top" + std::to_string(t.ks[i])] = t.accuracy[i];
    return j;
}

std::string fixed(double v, int precision) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

std::string general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["config"] = config;
    j["restored"] = rows_json(restored, restored_summary);
    j["baseline"] = rows_json(baseline, baseline_summary);
    if (topk_restored) j["topk_restored"] = topk_json(*topk_restored);
    if (topk_baseline) j["topk_baseline"] = topk_json(*topk_baseline);
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %8s %8s %10s %6s\n", "method", "PSNR", "SSIM", "d_VGG", "n");
    os << line;
    auto row = [&](const char* name, const MetricSummary& s) {
        std::snprintf(line, sizeof(line), "%-22s %8s %8s %10s %6zu\n", name, fixed(s.psnr, 2).c_str(),
                      fixed(s.ssim, 3).c_str(), general(s.d_vgg).c_str(), s.count);
        os << line;
    };
    row("turbulence-distorted", baseline_summary);
    row("restored", restored_summary);
    if (restored_summary.psnr_infinite || baseline_summary.psnr_infinite) {
        os << "(PSNR means exclude " << restored_summary.psnr_infinite << " restored / "
           << baseline_summary.psnr_infinite << " distorted rows with infinite PSNR)\n";
    }
    if (topk_restored || topk_baseline) {
        os << '\n';
        const TopKResult& ref = topk_restored ? *topk_restored : *topk_baseline;
        std::snprintf(line, sizeof(line), "%-22s", "identification");
        os << line;
        for (int k : ref.ks) {
            std::snprintf(line, sizeof(line), " %8s", ("Top-" + std::to_string(k)).c_str());
            os << line;
        }
        os << '\n';
        auto topk_row = [&](const char* name, const std::optional<TopKResult>& t) {
            if (!t) return;
            std::snprintf(line, sizeof(line), "%-22s", name);
            os << line;
            for (double a : t->accuracy) {
                std::snprintf(line, sizeof(line), " %8s", fixed(a, 2).c_str());
                os << line;
            }
            os << '\n';
        };
        topk_row("turbulence-distorted", topk_baseline);
        topk_row("restored", topk_restored);
    }
    return os.str();
}

MetricsReport evaluate_restoration(const fs::path& manifest, const Checkpoint& prior_ckpt,
                                   const Checkpoint& restoration_ckpt, int samples, std::uint64_t seed,
                                   const FeatureExtractor& extractor) {
    const auto models = RestorationModels::from_checkpoints(prior_ckpt, restoration_ckpt);
    const auto records = read_manifest(manifest);
    if (records.empty()) throw InvalidArgument("manifest " + manifest.string() + " has no pairs");
    MetricsReport report;
    const fs::path base = fs::absolute(manifest).parent_path();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const Image degraded = load_image(r.degraded);
        const Image clean = load_image(r.clean);
        require_same_shape(degraded, clean, ("pair " + r.degraded.string()).c_str());
        const Restoration out = restore_image(models, degraded, samples, SeededRng(prior_seed(seed, i)));
        const std::string id = fs::relative(r.degraded, base).generic_string();
        report.restored.push_back({id, psnr(out.restored, clean), ssim(out.restored, clean),
                                   d_vgg(out.restored, clean, extractor)});
        report.baseline.push_back({id, psnr(degraded, clean), ssim(degraded, clean), d_vgg(degraded, clean, extractor)});
    }
    report.restored_summary = summarize(report.restored);
    report.baseline_summary = summarize(report.baseline);
    report.config = {{"mc_samples", std::to_string(samples)},
                     {"seed", std::to_string(seed)},
                     {"prior_network", prior_ckpt.spec.descriptor()},
                     {"prior_step", std::to_string(prior_ckpt.step)},
                     {"restoration_network", restoration_ckpt.spec.descriptor()},
                     {"restoration_step", std::to_string(restoration_ckpt.step)},
                     {"feature_tap", extractor.tap()}};
    return report;
}

// ---------------------------------------------------------------------------
// Identity retrieval

ProjectionEmbedding::ProjectionEmbedding(int grid, int dim, std::vector<double> weights)
    : grid_(grid), dim_(dim), weights_(std::move(weights)) {
    if (grid < 1 || dim < 1 || weights_.size() != static_cast<std::size_t>(dim) * grid * grid)
        throw InvalidArgument("ProjectionEmbedding: weights must hold dim * grid * grid values");
}

ProjectionEmbedding ProjectionEmbedding::random(std::uint64_t seed, int grid, int dim) {
    SeededRng rng(seed);
    std::vector<double> w(static_cast<std::size_t>(dim) * grid * grid);
    for (double& v : w) v = rng.normal();
    return ProjectionEmbedding(grid, dim, std::move(w));
}

ProjectionEmbedding ProjectionEmbedding::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing embedding weights: " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        return ProjectionEmbedding(j.at("grid").get<int>(), j.at("dim").get<int>(),
                                   j.at("weights").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad embedding weights file " + path.string() + ": " + e.what());
    }
}

std::vector<double> ProjectionEmbedding::embed(const Image& img) const {
    validate_image(img);
    // Grayscale, bilinear-sampled at grid cell centers.
    std::vector<double> cells(static_cast<std::size_t>(grid_) * grid_);
    for (int gy = 0; gy < grid_; ++gy) {
        for (int gx = 0; gx < grid_; ++gx) {
            const double sy = std::clamp((gy + 0.5) * img.height / grid_ - 0.5, 0.0, img.height - 1.0);
            const double sx = std::clamp((gx + 0.5) * img.width / grid_ - 0.5, 0.0, img.width - 1.0);
            const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
            const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
            const double fy = sy - y0, fx = sx - x0;
            double v = 0.0;
            for (int c = 0; c < img.channels; ++c) {
                v += (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
                     fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
            }
            cells[static_cast<std::size_t>(gy) * grid_ + gx] = v / img.channels;
        }
    }
    std::vector<double> out(dim_, 0.0);
    for (int d = 0; d < dim_; ++d) {
        const double* row = weights_.data() + static_cast<std::size_t>(d) * cells.size();
        out[d] = std::inner_product(cells.begin(), cells.end(), row, 0.0);
    }
    const double norm = std::sqrt(std::inner_product(out.begin(), out.end(), out.begin(), 0.0));
    if (norm == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        out[0] = 1.0;
        return out;
    }
    for (double& v : out) v /= norm;
    return out;
}

void Gallery::add(std::string label, std::vector<double> vector) {
    if (!vectors.empty() && vector.size() != vectors.front().size())
        throw InvalidArgument("gallery vectors must share one dimension");
    labels.push_back(std::move(label));
    vectors.push_back(std::move(vector));
}

bool Gallery::has_label(const std::string& label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::vector<LabeledImage> load_labeled_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("missing directory: " + dir.string());
    std::vector<fs::path> identities;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) identities.push_back(entry.path());
    std::sort(identities.begin(), identities.end());
    std::vector<LabeledImage> out;
    for (const auto& id : identities) {
        for (const auto& file : list_image_files(id)) out.push_back({id.filename().string(), load_image(file)});
    }
    return out;
}

Gallery Gallery::from_directory(const fs::path& dir, const EmbeddingProvider& provider) {
    Gallery g;
    for (auto& item : load_labeled_images(dir)) g.add(item.label, provider.embed(item.image));
    if (g.size() == 0) throw InvalidArgument("gallery " + dir.string() + " holds no images");
    return g;
}

TopKResult topk_from_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& probes,
                                const Gallery& gallery, const std::vector<int>& ks) {
    if (gallery.size() == 0) throw InvalidArgument("topk: empty gallery");
    for (int k : ks)
        if (k < 1) throw InvalidArgument("topk: K must be >= 1");
    TopKResult result;
    result.ks = ks;
    result.accuracy.assign(ks.size(), 0.0);
    result.probes = probes.size();
    std::vector<std::size_t> hits(ks.size(), 0);
    std::vector<std::size_t> order(gallery.size());
    std::vector<double> sim(gallery.size());
    for (const auto& [label, vec] : probes) {
        if (!gallery.has_label(label)) throw InvalidArgument("probe label '" + label + "' not in gallery");
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (gallery.vectors[g].size() != vec.size()) throw InvalidArgument("topk: embedding dimension mismatch");
            sim[g] = std::inner_product(vec.begin(), vec.end(), gallery.vectors[g].begin(), 0.0);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
        // Rank of the first gallery vector carrying the probe's label.
        std::size_t first_hit = order.size();
        for (std::size_t r = 0; r < order.size(); ++r)
            if (gallery.labels[order[r]] == label) {
                first_hit = r;
                break;
            }
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (first_hit < static_cast<std::size_t>(ks[i])) ++hits[i];
    }
    if (!probes.empty())
        for (std::size_t i = 0; i < ks.size(); ++i) result.accuracy[i] = 100.0 * hits[i] / probes.size();
    return result;
}

TopKResult topk_identification(const std::vector<LabeledImage>& probes, const Gallery& gallery,
                               const EmbeddingProvider& provider, const std::vector<int>& ks) {
    std::vector<std::pair<std::string, std::vector<double>>> embedded;
    embedded.reserve(probes.size());
    for (const auto& p : probes) embedded.emplace_back(p.label, provider.embed(p.image));
    return topk_from_embeddings(embedded, gallery, ks);
}

}  // namespace atnet
