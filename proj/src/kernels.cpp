#include "atnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

namespace atnet {

void set_worker_threads(int threads) {
    if (threads >= 1) omp_set_num_threads(threads);
}

namespace kernels {

namespace {

void check_conv(const Tensor& t, int expected_channels, std::span<const double> weight, const ConvShape& shape) {
    if (t.channels != expected_channels) throw InvalidArgument("conv2d: channel mismatch");
    if (weight.size() != shape.weight_count()) throw InvalidArgument("conv2d: weight size mismatch");
    if (shape.kernel != 1 && shape.kernel != 3) throw InvalidArgument("conv2d: only 1x1 and 3x3 kernels are supported");
}

// Eight independent partial sums so the loop vectorizes without reassociation flags.
double dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// out[x] += t0 * in[x - 1] + t1 * in[x] + t2 * in[x + 1], zero outside [0, w).
void accumulate_row3(double* out, const double* in, double t0, double t1, double t2, int w) {
    if (w == 1) {
        out[0] += t1 * in[0];
        return;
    }
    out[0] += t1 * in[0] + t2 * in[1];
    for (int x = 1; x < w - 1; ++x) out[x] += t0 * in[x - 1] + t1 * in[x] + t2 * in[x + 1];
    out[w - 1] += t0 * in[w - 2] + t1 * in[w - 1];
}

// out[i] += sum_j coeff[j] * src[j][i], four sources at a time.
void accumulate_planes(double* out, const double* const* src, const double* coeff, int count, std::size_t n) {
    int j = 0;
    for (; j + 4 <= count; j += 4) {
        const double c0 = coeff[j], c1 = coeff[j + 1], c2 = coeff[j + 2], c3 = coeff[j + 3];
        const double *s0 = src[j], *s1 = src[j + 1], *s2 = src[j + 2], *s3 = src[j + 3];
        for (std::size_t i = 0; i < n; ++i) out[i] += (c0 * s0[i] + c1 * s1[i]) + (c2 * s2[i] + c3 * s3[i]);
    }
    for (; j < count; ++j) {
        const double c = coeff[j];
        const double* s = src[j];
        for (std::size_t i = 0; i < n; ++i) out[i] += c * s[i];
    }
}

struct BilinearTap {
    int i0, i1;
    double t;
};

std::vector<BilinearTap> bilinear_taps(int dst_size, int src_size) {
    std::vector<BilinearTap> taps(dst_size);
    for (int d = 0; d < dst_size; ++d) {
        double s = (d + 0.5) / 2.0 - 0.5;
        if (s < 0.0) s = 0.0;
        int i0 = std::min(static_cast<int>(std::floor(s)), src_size - 1);
        int i1 = i0 + 1 < src_size ? i0 + 1 : src_size - 1;
        taps[d] = {i0, i1, s - i0};
    }
    return taps;
}

}  // namespace

Tensor conv2d(const Tensor& input, std::span<const double> weight, std::span<const double> bias, const ConvShape& shape) {
    check_conv(input, shape.in_channels, weight, shape);
    const int h = input.height, w = input.width, cin = shape.in_channels;
    const std::size_t n = input.plane_size();
    Tensor out(shape.out_channels, h, w);

    std::vector<const double*> in_planes(cin);
    for (int ci = 0; ci < cin; ++ci) in_planes[ci] = input.data.data() + ci * n;

#pragma omp parallel for schedule(static)
    for (int co = 0; co < shape.out_channels; ++co) {
        double* o = out.data.data() + co * n;
        std::fill(o, o + n, bias.empty() ? 0.0 : bias[co]);
        if (shape.kernel == 1) {
            accumulate_planes(o, in_planes.data(), weight.data() + static_cast<std::size_t>(co) * cin, cin, n);
            continue;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* wk = weight.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
            const double* ip = in_planes[ci];
            for (int y = 0; y < h; ++y) {
                double* orow = o + static_cast<std::size_t>(y) * w;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    accumulate_row3(orow, ip + static_cast<std::size_t>(sy) * w, wk[ky * 3], wk[ky * 3 + 1],
                                    wk[ky * 3 + 2], w);
                }
            }
        }
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight, const ConvShape& shape) {
    check_conv(grad_output, shape.out_channels, weight, shape);
    const int h = grad_output.height, w = grad_output.width, cin = shape.in_channels, cout = shape.out_channels;
    const std::size_t n = grad_output.plane_size();
    Tensor grad_in(cin, h, w);

    std::vector<const double*> go_planes(cout);
    for (int co = 0; co < cout; ++co) go_planes[co] = grad_output.data.data() + co * n;

#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
        double* gi = grad_in.data.data() + ci * n;
        if (shape.kernel == 1) {
            std::vector<double> coeff(cout);
            for (int co = 0; co < cout; ++co) coeff[co] = weight[static_cast<std::size_t>(co) * cin + ci];
            accumulate_planes(gi, go_planes.data(), coeff.data(), cout, n);
            continue;
        }
        for (int co = 0; co < cout; ++co) {
            const double* wk = weight.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
            const double* gp = go_planes[co];
            for (int y = 0; y < h; ++y) {
                double* girow = gi + static_cast<std::size_t>(y) * w;
                // Input row y receives from output rows y - ky + 1 through tap ky, with the row flipped.
                for (int ky = 0; ky < 3; ++ky) {
                    const int oy = y - ky + 1;
                    if (oy < 0 || oy >= h) continue;
                    accumulate_row3(girow, gp + static_cast<std::size_t>(oy) * w, wk[ky * 3 + 2], wk[ky * 3 + 1],
                                    wk[ky * 3], w);
                }
            }
        }
    }
    return grad_in;
}

void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, const ConvShape& shape,
                            std::span<double> grad_weight, std::span<double> grad_bias) {
    if (input.channels != shape.in_channels || grad_output.channels != shape.out_channels ||
        !(input.height == grad_output.height && input.width == grad_output.width))
        throw InvalidArgument("conv2d_backward_params: shape mismatch");
    if (grad_weight.size() != shape.weight_count()) throw InvalidArgument("conv2d_backward_params: weight size");
    const int h = input.height, w = input.width, cin = shape.in_channels;
    const std::size_t n = input.plane_size();

#pragma omp parallel for schedule(static)
    for (int co = 0; co < shape.out_channels; ++co) {
        const double* go = grad_output.data.data() + co * n;
        if (!grad_bias.empty()) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += go[i];
            grad_bias[co] += s;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* ip = input.data.data() + ci * n;
            double* gw = grad_weight.data() + (static_cast<std::size_t>(co) * cin + ci) * shape.kernel * shape.kernel;
            if (shape.kernel == 1) {
                gw[0] += dot(go, ip, n);
                continue;
            }
            for (int ky = 0; ky < 3; ++ky) {
                const int y_begin = std::max(0, 1 - ky), y_end = std::min(h, h + 1 - ky);
                double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0;
                for (int y = y_begin; y < y_end; ++y) {
                    const double* grow = go + static_cast<std::size_t>(y) * w;
                    const double* irow = ip + static_cast<std::size_t>(y + ky - 1) * w;
                    // tap kx reads input column x + kx - 1
                    if (w > 1) {
                        acc0 += dot(grow + 1, irow, w - 1);
                        acc2 += dot(grow, irow + 1, w - 1);
                    }
                    acc1 += dot(grow, irow, w);
                }
                gw[ky * 3] += acc0;
                gw[ky * 3 + 1] += acc1;
                gw[ky * 3 + 2] += acc2;
            }
        }
    }
}

Tensor avg_pool2x(const Tensor& input) {
    if (input.height % 2 || input.width % 2) throw InvalidArgument("avg_pool2x: odd spatial dims");
    Tensor out(input.channels, input.height / 2, input.width / 2);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y) {
            const double* r0 = &input.data[(static_cast<std::size_t>(c) * input.height + 2 * y) * input.width];
            const double* r1 = r0 + input.width;
            double* o = &out.data[(static_cast<std::size_t>(c) * out.height + y) * out.width];
            for (int x = 0; x < out.width; ++x) o[x] = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) / 4.0;
        }
    return out;
}

Tensor avg_pool2x_backward(const Tensor& grad_output) {
    Tensor grad_in(grad_output.channels, grad_output.height * 2, grad_output.width * 2);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < grad_in.channels; ++c)
        for (int y = 0; y < grad_in.height; ++y) {
            const double* g = &grad_output.data[(static_cast<std::size_t>(c) * grad_output.height + y / 2) * grad_output.width];
            double* o = &grad_in.data[(static_cast<std::size_t>(c) * grad_in.height + y) * grad_in.width];
            for (int x = 0; x < grad_in.width; ++x) o[x] = g[x / 2] / 4.0;
        }
    return grad_in;
}

Tensor upsample2x(const Tensor& input, UpsampleMode mode) {
    Tensor out(input.channels, input.height * 2, input.width * 2);
    const auto ty = bilinear_taps(out.height, input.height);
    const auto tx = bilinear_taps(out.width, input.width);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y) {
            double* o = &out.data[(static_cast<std::size_t>(c) * out.height + y) * out.width];
            if (mode == UpsampleMode::nearest) {
                const double* r = &input.data[(static_cast<std::size_t>(c) * input.height + y / 2) * input.width];
                for (int x = 0; x < out.width; ++x) o[x] = r[x / 2];
                continue;
            }
            const double* r0 = &input.data[(static_cast<std::size_t>(c) * input.height + ty[y].i0) * input.width];
            const double* r1 = &input.data[(static_cast<std::size_t>(c) * input.height + ty[y].i1) * input.width];
            const double a = ty[y].t;
            for (int x = 0; x < out.width; ++x) {
                const double b = tx[x].t;
                o[x] = (1 - a) * ((1 - b) * r0[tx[x].i0] + b * r0[tx[x].i1]) + a * ((1 - b) * r1[tx[x].i0] + b * r1[tx[x].i1]);
            }
        }
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_output, UpsampleMode mode) {
    if (grad_output.height % 2 || grad_output.width % 2) throw InvalidArgument("upsample2x_backward: odd dims");
    Tensor grad_in(grad_output.channels, grad_output.height / 2, grad_output.width / 2);
    const auto ty = bilinear_taps(grad_output.height, grad_in.height);
    const auto tx = bilinear_taps(grad_output.width, grad_in.width);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < grad_output.channels; ++c) {
        double* gi = &grad_in.data[static_cast<std::size_t>(c) * grad_in.plane_size()];
        for (int y = 0; y < grad_output.height; ++y) {
            const double* g = &grad_output.data[(static_cast<std::size_t>(c) * grad_output.height + y) * grad_output.width];
            if (mode == UpsampleMode::nearest) {
                double* r = gi + static_cast<std::size_t>(y / 2) * grad_in.width;
                for (int x = 0; x < grad_output.width; ++x) r[x / 2] += g[x];
                continue;
            }
            double* r0 = gi + static_cast<std::size_t>(ty[y].i0) * grad_in.width;
            double* r1 = gi + static_cast<std::size_t>(ty[y].i1) * grad_in.width;
            const double a = ty[y].t;
            for (int x = 0; x < grad_output.width; ++x) {
                const double b = tx[x].t;
                r0[tx[x].i0] += g[x] * (1 - a) * (1 - b);
                r0[tx[x].i1] += g[x] * (1 - a) * b;
                r1[tx[x].i0] += g[x] * a * (1 - b);
                r1[tx[x].i1] += g[x] * a * b;
            }
        }
    }
    return grad_in;
}

}  // namespace kernels

}  // namespace atnet
