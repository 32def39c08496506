#include "atnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace atnet {

double mean_squared_error(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

// Valid-mode separable filtering of one plane: output is (h - n + 1) x (w - n + 1).
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& taps) {
    const int n = static_cast<int>(taps.size());
    const int ow = w - n + 1;
    const int oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += taps[k] * plane[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& options) {
    require_same_shape(a, b, "ssim");
    const int n = options.window;
    if (n < 1 || n % 2 == 0) throw InvalidArgument("ssim window must be odd and positive");
    if (a.height < n || a.width < n) {
        throw InvalidArgument("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                              " is smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
    }

    std::vector<double> taps(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = i - n / 2;
        taps[i] = std::exp(-(u * u) / (2.0 * options.sigma * options.sigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;

    const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
    const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
    const int h = a.height, w = a.width;
    const std::size_t plane_size = static_cast<std::size_t>(h) * w;

    double channel_sum = 0.0;
    std::vector<double> pa(plane_size), pb(plane_size), paa(plane_size), pbb(plane_size), pab(plane_size);
    for (int c = 0; c < a.channels; ++c) {
        for (std::size_t i = 0; i < plane_size; ++i) {
            const double va = a.data[i * a.channels + c];
            const double vb = b.data[i * a.channels + c];
            pa[i] = va;
            pb[i] = vb;
            paa[i] = va * va;
            pbb[i] = vb * vb;
            pab[i] = va * vb;
        }
        const auto mu_a = filter_valid(pa, h, w, taps);
        const auto mu_b = filter_valid(pb, h, w, taps);
        const auto e_aa = filter_valid(paa, h, w, taps);
        const auto e_bb = filter_valid(pbb, h, w, taps);
        const auto e_ab = filter_valid(pab, h, w, taps);

        double sum = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double var_a = e_aa[i] - ma * ma;
            const double var_b = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        channel_sum += sum / static_cast<double>(mu_a.size());
    }
    return channel_sum / a.channels;
}

std::string format_metric(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace atnet
