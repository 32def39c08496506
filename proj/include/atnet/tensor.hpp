#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "atnet/image.hpp"

namespace atnet {

/// Single-sample feature map, channel-major (C x H x W). Network activations and
/// gradients live in this layout; Image is converted at the network boundary.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }

    std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }
    bool operator==(const Tensor&) const = default;
};

Tensor to_tensor(const Image& img);
/// Requires 1 or 3 channels. Values are copied as-is; callers clamp when needed.
Image to_image(const Tensor& t);

/// Stacks channel groups: result has a.channels + b.channels channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [first, first + count).
Tensor slice_channels(const Tensor& t, int first, int count);

void add_inplace(Tensor& dst, const Tensor& src);

double max_abs_difference(const Tensor& a, const Tensor& b);

/// Pads bottom/right by replicating the last row/column up to (height, width).
Tensor pad_replicate(const Tensor& t, int height, int width);
/// Adjoint of pad_replicate: folds the padded region's gradient back onto the edge.
Tensor pad_replicate_backward(const Tensor& grad_padded, int height, int width);
/// Top-left (height, width) window.
Tensor crop(const Tensor& t, int height, int width);

/// Smallest multiple of divisor that is >= n.
inline int round_up(int n, int divisor) { return (n + divisor - 1) / divisor * divisor; }

}  // namespace atnet
