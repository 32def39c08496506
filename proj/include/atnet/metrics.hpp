#pragma once

#include <limits>
#include <string>

#include "atnet/image.hpp"

namespace atnet {

/// PSNR of identical images. Serialized as "inf".
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

double mean_squared_error(const Image& a, const Image& b);

/// 10 log10(1 / MSE), peak value 1.0. Returns kPsnrInfinite when MSE is zero.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean local SSIM over the valid window positions, averaged over channels.
/// Requires min(H, W) >= window.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

/// "inf" for the infinite sentinel, otherwise shortest round-trip decimal.
std::string format_metric(double value);

}  // namespace atnet
