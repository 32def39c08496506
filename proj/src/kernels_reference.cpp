#include <cmath>

#include "atnet/kernels.hpp"

namespace atnet::kernels::reference {

namespace {

void check_conv(const Tensor& t, int expected_channels, std::span<const double> weight, const ConvShape& shape) {
    if (t.channels != expected_channels) throw InvalidArgument("conv2d: channel mismatch");
    if (weight.size() != shape.weight_count()) throw InvalidArgument("conv2d: weight size mismatch");
    if (shape.kernel % 2 == 0) throw InvalidArgument("conv2d: kernel must be odd");
}

double bilinear_source(int dst, int src_size, int& i0, int& i1) {
    double s = (dst + 0.5) / 2.0 - 0.5;
    if (s < 0.0) s = 0.0;
    i0 = static_cast<int>(std::floor(s));
    if (i0 > src_size - 1) i0 = src_size - 1;
    i1 = i0 + 1 < src_size ? i0 + 1 : src_size - 1;
    return s - i0;
}

}  // namespace

Tensor conv2d(const Tensor& input, std::span<const double> weight, std::span<const double> bias, const ConvShape& shape) {
    check_conv(input, shape.in_channels, weight, shape);
    const int k = shape.kernel, pad = k / 2, h = input.height, w = input.width;
    Tensor out(shape.out_channels, h, w);
    for (int co = 0; co < shape.out_channels; ++co)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = bias.empty() ? 0.0 : bias[co];
                for (int ci = 0; ci < shape.in_channels; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int sy = y + ky - pad, sx = x + kx - pad;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            acc += weight[((static_cast<std::size_t>(co) * shape.in_channels + ci) * k + ky) * k + kx] *
                                   input.at(ci, sy, sx);
                        }
                out.at(co, y, x) = acc;
            }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight, const ConvShape& shape) {
    check_conv(grad_output, shape.out_channels, weight, shape);
    const int k = shape.kernel, pad = k / 2, h = grad_output.height, w = grad_output.width;
    Tensor grad_in(shape.in_channels, h, w);
    for (int co = 0; co < shape.out_channels; ++co)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < shape.in_channels; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int sy = y + ky - pad, sx = x + kx - pad;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            grad_in.at(ci, sy, sx) +=
                                weight[((static_cast<std::size_t>(co) * shape.in_channels + ci) * k + ky) * k + kx] *
                                grad_output.at(co, y, x);
                        }
    return grad_in;
}

void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, const ConvShape& shape,
                            std::span<double> grad_weight, std::span<double> grad_bias) {
    if (input.channels != shape.in_channels || grad_output.channels != shape.out_channels)
        throw InvalidArgument("conv2d_backward_params: channel mismatch");
    const int k = shape.kernel, pad = k / 2, h = input.height, w = input.width;
    for (int co = 0; co < shape.out_channels; ++co)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double g = grad_output.at(co, y, x);
                if (!grad_bias.empty()) grad_bias[co] += g;
                for (int ci = 0; ci < shape.in_channels; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int sy = y + ky - pad, sx = x + kx - pad;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            grad_weight[((static_cast<std::size_t>(co) * shape.in_channels + ci) * k + ky) * k + kx] +=
                                g * input.at(ci, sy, sx);
                        }
            }
}

Tensor avg_pool2x(const Tensor& input) {
    if (input.height % 2 || input.width % 2) throw InvalidArgument("avg_pool2x: odd spatial dims");
    Tensor out(input.channels, input.height / 2, input.width / 2);
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = (input.at(c, 2 * y, 2 * x) + input.at(c, 2 * y, 2 * x + 1) +
                                   input.at(c, 2 * y + 1, 2 * x) + input.at(c, 2 * y + 1, 2 * x + 1)) /
                                  4.0;
    return out;
}

Tensor avg_pool2x_backward(const Tensor& grad_output) {
    Tensor grad_in(grad_output.channels, grad_output.height * 2, grad_output.width * 2);
    for (int c = 0; c < grad_in.channels; ++c)
        for (int y = 0; y < grad_in.height; ++y)
            for (int x = 0; x < grad_in.width; ++x) grad_in.at(c, y, x) = grad_output.at(c, y / 2, x / 2) / 4.0;
    return grad_in;
}

Tensor upsample2x(const Tensor& input, UpsampleMode mode) {
    Tensor out(input.channels, input.height * 2, input.width * 2);
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                if (mode == UpsampleMode::nearest) {
                    out.at(c, y, x) = input.at(c, y / 2, x / 2);
                    continue;
                }
                int y0, y1, x0, x1;
                const double ty = bilinear_source(y, input.height, y0, y1);
                const double tx = bilinear_source(x, input.width, x0, x1);
                out.at(c, y, x) = (1 - ty) * ((1 - tx) * input.at(c, y0, x0) + tx * input.at(c, y0, x1)) +
                                  ty * ((1 - tx) * input.at(c, y1, x0) + tx * input.at(c, y1, x1));
            }
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_output, UpsampleMode mode) {
    if (grad_output.height % 2 || grad_output.width % 2) throw InvalidArgument("upsample2x_backward: odd dims");
    Tensor grad_in(grad_output.channels, grad_output.height / 2, grad_output.width / 2);
    for (int c = 0; c < grad_output.channels; ++c)
        for (int y = 0; y < grad_output.height; ++y)
            for (int x = 0; x < grad_output.width; ++x) {
                const double g = grad_output.at(c, y, x);
                if (mode == UpsampleMode::nearest) {
                    grad_in.at(c, y / 2, x / 2) += g;
                    continue;
                }
                int y0, y1, x0, x1;
                const double ty = bilinear_source(y, grad_in.height, y0, y1);
                const double tx = bilinear_source(x, grad_in.width, x0, x1);
                grad_in.at(c, y0, x0) += g * (1 - ty) * (1 - tx);
                grad_in.at(c, y0, x1) += g * (1 - ty) * tx;
                grad_in.at(c, y1, x0) += g * ty * (1 - tx);
                grad_in.at(c, y1, x1) += g * ty * tx;
            }
    return grad_in;
}

}  // namespace atnet::kernels::reference
