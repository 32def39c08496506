#include "atnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace atnet {

namespace fs = std::filesystem;

double DeformationField::max_magnitude() const {
    double m = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) m = std::max(m, std::hypot(dx[i], dy[i]));
    return m;
}

namespace {

void check_range(const Range& r, const char* name) {
    if (!(r.lo >= 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.hi)) {
        throw InvalidArgument(std::string("degradation config: ") + name + " range must satisfy 0 <= lo <= hi");
    }
}

int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

}  // namespace

void DegradationConfig::validate() const {
    if (n_warp_centers < 0) throw InvalidArgument("degradation config: n_warp_centers must be >= 0");
    check_range(warp_strength, "warp_strength");
    check_range(warp_falloff_sigma, "warp_falloff_sigma");
    check_range(psf_sigma, "psf_sigma");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw InvalidArgument("degradation config: noise_sigma must be >= 0");
}

DegradationConfig identity_degradation(std::uint64_t seed) {
    DegradationConfig cfg;
    cfg.n_warp_centers = 0;
    cfg.warp_strength = {0.0, 0.0};
    cfg.psf_sigma = {0.0, 0.0};
    cfg.noise_sigma = 0.0;
    cfg.seed = seed;
    return cfg;
}

DeformationField sample_deformation_field(const DegradationConfig& cfg, int height, int width, SeededRng& rng) {
    cfg.validate();
    if (height < kMinPipelineSide || width < kMinPipelineSide)
        throw InvalidArgument("sample_deformation_field: image must be at least 8x8");
    DeformationField field(height, width);
    for (int n = 0; n < cfg.n_warp_centers; ++n) {
        const double cx = rng.uniform(0.0, width);
        const double cy = rng.uniform(0.0, height);
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double magnitude = rng.uniform(cfg.warp_strength.lo, cfg.warp_strength.hi);
        const double sigma = rng.uniform(cfg.warp_falloff_sigma.lo, cfg.warp_falloff_sigma.hi);
        if (sigma <= 0.0 || magnitude == 0.0) continue;
        const double ux = magnitude * std::cos(angle);
        const double uy = magnitude * std::sin(angle);
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double g = std::exp(-r2 * inv);
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                field.dx[i] += ux * g;
                field.dy[i] += uy * g;
            }
        }
    }
    const double bound = cfg.warp_strength.hi;
    for (std::size_t i = 0; i < field.dx.size(); ++i) {
        const double m = std::hypot(field.dx[i], field.dy[i]);
        if (m > bound) {
            // Slightly under 1 so the rescaled magnitude cannot round above the bound.
            const double s = m > 0.0 ? bound / m * (1.0 - 1e-14) : 0.0;
            field.dx[i] *= s;
            field.dy[i] *= s;
        }
    }
    return field;
}

Image warp_image(const Image& img, const DeformationField& field) {
    validate_image(img);
    if (field.height != img.height || field.width != img.width)
        throw InvalidArgument("warp_image: field shape does not match image");
    const int h = img.height, w = img.width, ch = img.channels;
    Image out(h, w, ch);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double sx = std::clamp(x + field.dx[i], 0.0, static_cast<double>(w - 1));
            const double sy = std::clamp(y + field.dy[i], 0.0, static_cast<double>(h - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < ch; ++c) {
                const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
                const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
                out.at(y, x, c) = std::clamp((1.0 - fy) * top + fy * bottom, 0.0, 1.0);
            }
        }
    }
    return out;
}

int psf_size_for_sigma(double sigma) {
    return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
}

PsfKernel make_gaussian_psf(double sigma, int size) {
    if (size < 1 || size % 2 == 0) throw InvalidArgument("make_gaussian_psf: size must be odd and >= 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("make_gaussian_psf: sigma must be >= 0");
    PsfKernel k;
    k.size = size;
    k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);
    const int r = size / 2;
    if (sigma == 0.0) {
        k.weights[static_cast<std::size_t>(r) * size + r] = 1.0;
        return k;
    }
    double total = 0.0;
    for (int v = 0; v < size; ++v) {
        for (int u = 0; u < size; ++u) {
            const double du = u - r, dv = v - r;
            const double wgt = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            k.weights[static_cast<std::size_t>(v) * size + u] = wgt;
            total += wgt;
        }
    }
    for (double& wgt : k.weights) wgt /= total;
    return k;
}

Image convolve2d(const Image& img, const PsfKernel& kernel) {
    validate_image(img);
    if (kernel.size % 2 == 0 || kernel.weights.size() != static_cast<std::size_t>(kernel.size) * kernel.size)
        throw InvalidArgument("convolve2d: malformed kernel");
    if (kernel.size > img.height || kernel.size > img.width)
        throw InvalidArgument("convolve2d: kernel " + std::to_string(kernel.size) + " larger than image");
    const int h = img.height, w = img.width, ch = img.channels, r = kernel.size / 2;
    Image out(h, w, ch);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int v = 0; v < kernel.size; ++v) {
                    const int sy = clamp_index(y + v - r, h);
                    for (int u = 0; u < kernel.size; ++u) {
                        acc += kernel.at(v, u) * img.at(sy, clamp_index(x + u - r, w), c);
                    }
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

Degradation degrade(const Image& clean, const DegradationConfig& cfg, SeededRng& rng) {
    validate_pipeline_image(clean);
    cfg.validate();
    Degradation result;
    result.psf_sigma = rng.uniform(cfg.psf_sigma.lo, cfg.psf_sigma.hi);
    int size = psf_size_for_sigma(result.psf_sigma);
    const int max_size = std::min(clean.height, clean.width);
    if (size > max_size) size = max_size % 2 ? max_size : max_size - 1;
    result.psf = make_gaussian_psf(result.psf_sigma, size);
    result.field = sample_deformation_field(cfg, clean.height, clean.width, rng);

    Image y = cfg.warp_first ? convolve2d(clamp01(warp_image(clean, result.field)), result.psf)
                             : warp_image(clamp01(convolve2d(clean, result.psf)), result.field);
    if (cfg.noise_sigma > 0.0) {
        for (double& v : y.data) v += rng.normal(0.0, cfg.noise_sigma);
    }
    result.degraded = clamp01(std::move(y));
    return result;
}

std::uint64_t pair_seed(const DegradationConfig& cfg, std::uint64_t image_index, std::uint64_t pair_index) {
    return derive_seed(cfg.seed, {image_index, pair_index});
}

void write_manifest(const fs::path& manifest_path, const std::vector<ManifestRecord>& records) {
    const fs::path base = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + manifest_path.string());
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["clean"] = fs::relative(r.clean, base).generic_string();
        j["degraded"] = fs::relative(r.degraded, base).generic_string();
        j["seed"] = r.seed;
        j["psf_sigma"] = r.psf_sigma;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("error writing manifest " + manifest_path.string());
}

std::vector<ManifestRecord> read_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("missing manifest: " + manifest_path.string());
    const fs::path base = fs::absolute(manifest_path).parent_path();
    std::vector<ManifestRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestRecord r;
            r.clean = (base / j.at("clean").get<std::string>()).lexically_normal();
            r.degraded = (base / j.at("degraded").get<std::string>()).lexically_normal();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.psf_sigma = j.at("psf_sigma").get<double>();
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("manifest " + manifest_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

fs::path generate_dataset(const fs::path& clean_dir, const fs::path& out_dir, const DegradationConfig& cfg,
                          int pairs_per_image) {
    cfg.validate();
    if (pairs_per_image < 1) throw InvalidArgument("generate_dataset: pairs_per_image must be >= 1");
    const auto files = list_image_files(clean_dir);
    if (files.empty()) throw IoError("no loadable images in " + clean_dir.string());

    std::error_code ec;
    fs::create_directories(out_dir / "degraded", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "degraded").string() + ": " + ec.message());

    const int total = static_cast<int>(files.size()) * pairs_per_image;
    std::vector<ManifestRecord> records(total);
    std::vector<std::exception_ptr> errors(total);

#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < total; ++k) {
        const int i = k / pairs_per_image;
        const int j = k % pairs_per_image;
        try {
            const Image clean = load_image(files[i]);
            SeededRng rng(pair_seed(cfg, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
            const Degradation d = degrade(clean, cfg, rng);
            char name[64];
            std::snprintf(name, sizeof(name), "%05d_%02d.png", i, j);
            const fs::path degraded = fs::absolute(out_dir / "degraded" / (files[i].stem().string() + "_" + name));
            save_image(d.degraded, degraded);
            records[k] = {fs::absolute(files[i]), degraded, rng.seed(), d.psf_sigma};
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const fs::path manifest = out_dir / "manifest.jsonl";
    write_manifest(manifest, records);
    return manifest;
}

}  // namespace atnet
