#include "atnet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace atnet {

Tensor to_tensor(const Image& img) {
    Tensor t(img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) t.at(c, y, x) = img.at(y, x, c);
    return t;
}

Image to_image(const Tensor& t) {
    Image img(t.height, t.width, t.channels);
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x)
            for (int c = 0; c < t.channels; ++c) img.at(y, x, c) = t.at(c, y, x);
    return img;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height != b.height || a.width != b.width) throw InvalidArgument("concat_channels: spatial mismatch");
    Tensor out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

Tensor slice_channels(const Tensor& t, int first, int count) {
    if (first < 0 || count < 0 || first + count > t.channels) throw InvalidArgument("slice_channels: out of range");
    Tensor out(count, t.height, t.width);
    const auto begin = t.data.begin() + static_cast<std::ptrdiff_t>(first * t.plane_size());
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(count * t.plane_size()), out.data.begin());
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    if (!dst.same_shape(src)) throw InvalidArgument("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InvalidArgument("max_abs_difference: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace atnet

namespace atnet {

Tensor pad_replicate(const Tensor& t, int height, int width) {
    if (height < t.height || width < t.width) throw InvalidArgument("pad_replicate: target smaller than tensor");
    Tensor out(t.channels, height, width);
    for (int c = 0; c < t.channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(c, y, x) = t.at(c, std::min(y, t.height - 1), std::min(x, t.width - 1));
    return out;
}

Tensor pad_replicate_backward(const Tensor& grad_padded, int height, int width) {
    Tensor out(grad_padded.channels, height, width);
    for (int c = 0; c < grad_padded.channels; ++c)
        for (int y = 0; y < grad_padded.height; ++y)
            for (int x = 0; x < grad_padded.width; ++x)
                out.at(c, std::min(y, height - 1), std::min(x, width - 1)) += grad_padded.at(c, y, x);
    return out;
}

Tensor crop(const Tensor& t, int height, int width) {
    if (height > t.height || width > t.width) throw InvalidArgument("crop: window larger than tensor");
    Tensor out(t.channels, height, width);
    for (int c = 0; c < t.channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(c, y, x) = t.at(c, y, x);
    return out;
}

}  // namespace atnet
