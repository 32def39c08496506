#include "atnet/uncertainty.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace atnet {

McSampleSet mc_forward_samples(const PriorNetwork& net, const Tensor& degraded, int samples, const SeededRng& rng) {
    if (samples < 2) throw InvalidArgument("mc_forward_samples: need at least 2 samples, got " + std::to_string(samples));
    McSampleSet set;
    set.samples.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        SeededRng pass_rng(derive_seed(rng.seed(), {static_cast<std::uint64_t>(i)}));
        set.seeds.push_back(pass_rng.seed());
        set.samples.push_back(forward(net.spec, net.params, degraded, ForwardMode::eval_mc_dropout, &pass_rng));
    }
    return set;
}

Tensor sample_mean(const McSampleSet& set) {
    if (set.samples.empty()) throw InvalidArgument("sample_mean: empty sample set");
    Tensor mean(set.samples[0].channels, set.samples[0].height, set.samples[0].width);
    for (const auto& s : set.samples) {
        if (!s.same_shape(mean)) throw InvalidArgument("sample set shapes differ");
        add_inplace(mean, s);
    }
    for (double& v : mean.data) v /= set.count();
    return mean;
}

UncertaintyMap variance_map(const McSampleSet& set, VarianceReduction reduction) {
    const int s = set.count();
    if (s < 2) throw InvalidArgument("variance_map: need at least 2 samples");
    const Tensor& first = set.samples[0];
    for (const auto& t : set.samples)
        if (!t.same_shape(first)) throw InvalidArgument("variance_map: sample shapes differ");

    Tensor var(first.channels, first.height, first.width);
    for (std::size_t k = 0; k < first.size(); ++k) {
        double mean_shift = 0.0;
        for (const auto& t : set.samples) mean_shift += t.data[k] - first.data[k];
        mean_shift /= s;
        double acc = 0.0;
        for (const auto& t : set.samples) {
            const double d = (t.data[k] - first.data[k]) - mean_shift;
            acc += d * d;
        }
        var.data[k] = acc / s;
    }

    UncertaintyMap map;
    map.reduction = reduction;
    if (reduction == VarianceReduction::per_channel) {
        map.values = std::move(var);
        return map;
    }
    map.values = Tensor(1, var.height, var.width);
    for (int c = 0; c < var.channels; ++c) {
        const auto plane = var.plane(c);
        for (std::size_t k = 0; k < plane.size(); ++k) map.values.data[k] += plane[k];
    }
    for (double& v : map.values.data) v /= var.channels;
    return map;
}

PriorEstimate estimate_prior(const PriorNetwork& net, const Tensor& degraded, int samples, const SeededRng& rng,
                             VarianceReduction reduction) {
    const McSampleSet set = mc_forward_samples(net, degraded, samples, rng);
    return {variance_map(set, reduction), sample_mean(set)};
}

namespace {
constexpr char kMagic[8] = {'A', 'T', 'U', 'M', 'A', 'P', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}
}  // namespace

void save_uncertainty_map(const UncertaintyMap& map, const std::filesystem::path& path) {
    const Tensor& t = map.values;
    std::string bytes(kMagic, sizeof(kMagic));
    put_u32(bytes, static_cast<std::uint32_t>(t.height));
    put_u32(bytes, static_cast<std::uint32_t>(t.width));
    put_u32(bytes, static_cast<std::uint32_t>(t.channels));
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x)
            for (int c = 0; c < t.channels; ++c) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(t.at(c, y, x))));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

UncertaintyMap load_uncertainty_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing file: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("not an uncertainty map: " + path.string());
    const int h = static_cast<int>(get_u32(bytes, 8));
    const int w = static_cast<int>(get_u32(bytes, 12));
    const int c = static_cast<int>(get_u32(bytes, 16));
    if (bytes.size() != 20 + 4ull * h * w * c) throw IoError("uncertainty map size mismatch: " + path.string());
    UncertaintyMap map;
    map.reduction = c == 1 ? VarianceReduction::channel_mean : VarianceReduction::per_channel;
    map.values = Tensor(c, h, w);
    std::size_t pos = 20;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch, pos += 4) map.values.at(ch, y, x) = std::bit_cast<float>(get_u32(bytes, pos));
    return map;
}

Image uncertainty_preview(const UncertaintyMap& map) {
    const Tensor& t = map.values;
    Image img(t.height, t.width, 1);
    for (int c = 0; c < t.channels; ++c) {
        const auto plane = t.plane(c);
        for (std::size_t k = 0; k < plane.size(); ++k) img.data[k] += plane[k] / t.channels;
    }
    const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
    const double min = *lo, range = *hi - *lo;
    for (double& v : img.data) v = range > 0.0 ? std::clamp((v - min) / range, 0.0, 1.0) : 0.0;
    return img;
}

}  // namespace atnet
