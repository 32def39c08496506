#include "atnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace atnet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool is_parameterized(const LayerSpec& layer) {
    return std::holds_alternative<Res2BlockLayer>(layer) || std::holds_alternative<Conv3x3Layer>(layer);
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<double>& grad_of(Gradients& grads, const ParameterStore& params, const std::string& name) {
    return grads.values[params.index_of(name)];
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// grad * (pre > 0), in place.
void relu_backward_inplace(Tensor& grad, const Tensor& pre) {
    for (std::size_t i = 0; i < grad.data.size(); ++i)
        if (!(pre.data[i] > 0.0)) grad.data[i] = 0.0;
}

void copy_group(const Tensor& src, int src_first, Tensor& dst, int dst_first, int count) {
    const std::size_t n = src.plane_size();
    std::copy(src.data.begin() + static_cast<std::ptrdiff_t>(src_first * n),
              src.data.begin() + static_cast<std::ptrdiff_t>((src_first + count) * n),
              dst.data.begin() + static_cast<std::ptrdiff_t>(dst_first * n));
}

Tensor conv(const Tensor& x, const ParameterStore& params, const std::string& name, int in, int out, int k) {
    const auto w = to_double(params.get(name + ".w").values);
    const auto b = to_double(params.get(name + ".b").values);
    return kernels::conv2d(x, w, b, ConvShape{in, out, k});
}

// Accumulates parameter gradients of conv `name` and returns dL/dx.
Tensor conv_backward(const Tensor& x, const Tensor& grad_out, const ParameterStore& params, Gradients& grads,
                     const std::string& name, int in, int out, int k, bool need_input_grad = true) {
    const ConvShape shape{in, out, k};
    kernels::conv2d_backward_params(x, grad_out, shape, grad_of(grads, params, name + ".w"),
                                    grad_of(grads, params, name + ".b"));
    if (!need_input_grad) return {};
    const auto w = to_double(params.get(name + ".w").values);
    return kernels::conv2d_backward_input(grad_out, w, shape);
}

void add_conv_layout(std::vector<std::pair<std::string, std::vector<int>>>& layout, const std::string& name, int in,
                     int out, int k) {
    layout.push_back({name + ".w", {out, in, k, k}});
    layout.push_back({name + ".b", {out}});
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string layer_prefix(std::size_t index) { return "L" + std::to_string(index); }

// ---------------------------------------------------------------------------
// NetworkSpec

int NetworkSpec::output_channels() const {
    int channels = input_channels;
    for (const auto& layer : layers) {
        std::visit(Overloaded{[&](const Res2BlockLayer& l) { channels = l.out_channels; },
                              [&](const Conv3x3Layer& l) { channels = l.out_channels; }, [](const auto&) {}},
                   layer);
    }
    return channels;
}

int NetworkSpec::downsample_count() const {
    return static_cast<int>(std::count_if(layers.begin(), layers.end(), [](const LayerSpec& l) {
        return std::holds_alternative<DownsampleLayer>(l);
    }));
}

int NetworkSpec::spatial_divisor() const { return 1 << downsample_count(); }

void NetworkSpec::validate() const {
    if (input_channels < 1) throw InvalidArgument("network " + name + ": input_channels must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw InvalidArgument("network " + name + ": dropout_rate must be in [0,1)");
    int channels = input_channels;
    int depth = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string where = "network " + name + " layer " + std::to_string(i);
        std::visit(Overloaded{[&](const Res2BlockLayer& l) {
                                  if (l.in_channels != channels)
                                      throw InvalidArgument(where + ": expects " + std::to_string(l.in_channels) +
                                                            " channels, previous layer emits " +
                                                            std::to_string(channels));
                                  if (l.out_channels < 1 || l.scale_groups < 1 || l.out_channels % l.scale_groups != 0)
                                      throw InvalidArgument(where + ": out_channels " + std::to_string(l.out_channels) +
                                                            " not divisible by scale_groups " +
                                                            std::to_string(l.scale_groups));
                                  channels = l.out_channels;
                              },
                              [&](const Conv3x3Layer& l) {
                                  if (l.in_channels != channels)
                                      throw InvalidArgument(where + ": expects " + std::to_string(l.in_channels) +
                                                            " channels, previous layer emits " +
                                                            std::to_string(channels));
                                  if (l.out_channels < 1) throw InvalidArgument(where + ": bad out_channels");
                                  channels = l.out_channels;
                              },
                              [&](const DownsampleLayer&) { ++depth; },
                              [&](const UpsampleLayer&) {
                                  if (--depth < 0) throw InvalidArgument(where + ": upsample without downsample");
                              }},
                   layers[i]);
    }
}

bool NetworkSpec::dropout_after(std::size_t layer_index, ForwardMode mode) const {
    if (mode == ForwardMode::eval_deterministic || dropout_rate <= 0.0 || !dropout_everywhere) return false;
    if (layer_index >= layers.size() || !is_parameterized(layers[layer_index])) return false;
    for (std::size_t j = layer_index + 1; j < layers.size(); ++j)
        if (is_parameterized(layers[j])) return true;
    return false;  // output layer
}

std::string NetworkSpec::descriptor() const {
    std::ostringstream os;
    os << "name=" << name << ";in=" << input_channels << ";dropout=" << format_double(dropout_rate)
       << ";everywhere=" << (dropout_everywhere ? 1 : 0)
       << ";upsample=" << (upsample == UpsampleMode::bilinear ? "bilinear" : "nearest")
       << ";output=" << (output == OutputActivation::sigmoid ? "sigmoid" : "none") << ";layers=";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) os << ',';
        std::visit(Overloaded{[&](const Res2BlockLayer& l) {
                                  os << 'R' << l.in_channels << '.' << l.out_channels << '.' << l.scale_groups;
                              },
                              [&](const Conv3x3Layer& l) { os << 'C' << l.in_channels << '.' << l.out_channels; },
                              [&](const DownsampleLayer&) { os << 'D'; }, [&](const UpsampleLayer&) { os << 'U'; }},
                   layers[i]);
    }
    return os.str();
}

NetworkSpec NetworkSpec::from_descriptor(const std::string& text) {
    NetworkSpec spec;
    std::map<std::string, std::string> fields;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw InvalidArgument("bad network descriptor field: " + item);
        fields[item.substr(0, eq)] = item.substr(eq + 1);
    }
    try {
        spec.name = fields.at("name");
        spec.input_channels = std::stoi(fields.at("in"));
        spec.dropout_rate = std::stod(fields.at("dropout"));
        spec.dropout_everywhere = fields.at("everywhere") == "1";
        spec.upsample = fields.at("upsample") == "nearest" ? UpsampleMode::nearest : UpsampleMode::bilinear;
        spec.output = fields.at("output") == "none" ? OutputActivation::none : OutputActivation::sigmoid;
        std::istringstream ls(fields.at("layers"));
        std::string tok;
        while (std::getline(ls, tok, ',')) {
            if (tok == "D") {
                spec.layers.emplace_back(DownsampleLayer{});
            } else if (tok == "U") {
                spec.layers.emplace_back(UpsampleLayer{});
            } else if (!tok.empty() && (tok[0] == 'R' || tok[0] == 'C')) {
                std::vector<int> nums;
                std::istringstream ns(tok.substr(1));
                std::string n;
                while (std::getline(ns, n, '.')) nums.push_back(std::stoi(n));
                if (tok[0] == 'R' && nums.size() == 3)
                    spec.layers.emplace_back(Res2BlockLayer{nums[0], nums[1], nums[2]});
                else if (tok[0] == 'C' && nums.size() == 2)
                    spec.layers.emplace_back(Conv3x3Layer{nums[0], nums[1]});
                else
                    throw InvalidArgument("bad layer token " + tok);
            } else {
                throw InvalidArgument("bad layer token " + tok);
            }
        }
    } catch (const std::out_of_range&) {
        throw InvalidArgument("incomplete network descriptor: " + text);
    } catch (const std::invalid_argument&) {
        throw InvalidArgument("bad network descriptor: " + text);
    }
    spec.validate();
    return spec;
}

NetworkSpec build_atnet1_spec(double dropout_rate) {
    NetworkSpec spec;
    spec.name = "atnet1";
    spec.input_channels = 3;
    spec.dropout_rate = dropout_rate;
    spec.dropout_everywhere = true;
    spec.layers = {
        Res2BlockLayer{3, 64, 4},  DownsampleLayer{},          Res2BlockLayer{64, 64, 4}, DownsampleLayer{},
        Res2BlockLayer{64, 64, 4}, Res2BlockLayer{64, 64, 4},  Res2BlockLayer{64, 64, 4}, Res2BlockLayer{64, 64, 4},
        Res2BlockLayer{64, 64, 4}, UpsampleLayer{},            Res2BlockLayer{64, 64, 4}, UpsampleLayer{},
        Res2BlockLayer{64, 16, 4}, Res2BlockLayer{16, 3, 3},
    };
    spec.validate();
    return spec;
}

NetworkSpec build_atnet_spec(int prior_channels) {
    if (prior_channels != 1 && prior_channels != 3)
        throw InvalidArgument("build_atnet_spec: prior_channels must be 1 or 3, got " + std::to_string(prior_channels));
    NetworkSpec spec;
    spec.name = "atnet";
    spec.input_channels = 3 + prior_channels;
    spec.dropout_rate = 0.0;
    spec.dropout_everywhere = false;
    spec.layers = {
        Conv3x3Layer{3 + prior_channels, 16}, Res2BlockLayer{16, 64, 4}, DownsampleLayer{},
        Res2BlockLayer{64, 64, 4},            DownsampleLayer{},         Res2BlockLayer{64, 64, 4},
        Res2BlockLayer{64, 64, 4},            Res2BlockLayer{64, 64, 4}, Res2BlockLayer{64, 64, 4},
        Res2BlockLayer{64, 64, 4},            UpsampleLayer{},           Res2BlockLayer{64, 64, 4},
        UpsampleLayer{},                      Res2BlockLayer{64, 3, 3},
    };
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Parameters

void ParameterStore::add(std::string name, std::vector<int> shape, std::vector<float> values) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    if (count != values.size()) throw InvalidArgument("parameter " + name + ": value count does not match shape");
    if (index_.count(name)) throw InvalidArgument("duplicate parameter " + name);
    index_[name] = tensors_.size();
    tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
}

std::size_t ParameterStore::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter " + name);
    return it->second;
}

const ParameterTensor& ParameterStore::get(const std::string& name) const { return tensors_[index_of(name)]; }
ParameterTensor& ParameterStore::get(const std::string& name) { return tensors_[index_of(name)]; }

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.values.size();
    return n;
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const NetworkSpec& spec) {
    std::vector<std::pair<std::string, std::vector<int>>> layout;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const std::string p = layer_prefix(i);
        std::visit(Overloaded{[&](const Res2BlockLayer& l) {
                                  const int width = l.out_channels / l.scale_groups;
                                  add_conv_layout(layout, p + ".entry", l.in_channels, l.out_channels, 1);
                                  for (int j = 1; j < l.scale_groups; ++j)
                                      add_conv_layout(layout, p + ".group" + std::to_string(j), width, width, 3);
                                  add_conv_layout(layout, p + ".exit", l.out_channels, l.out_channels, 1);
                                  if (l.in_channels != l.out_channels)
                                      add_conv_layout(layout, p + ".shortcut", l.in_channels, l.out_channels, 1);
                              },
                              [&](const Conv3x3Layer& l) {
                                  add_conv_layout(layout, p + ".conv", l.in_channels, l.out_channels, 3);
                              },
                              [](const auto&) {}},
                   spec.layers[i]);
    }
    return layout;
}

ParameterStore init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParameterStore store;
    const auto layout = parameter_layout(spec);
    for (std::size_t t = 0; t < layout.size(); ++t) {
        const auto& [name, shape] = layout[t];
        // Biases share the fan-in of the weight tensor that precedes them.
        const auto& weight_shape = shape.size() == 1 ? layout[t - 1].second : shape;
        const double fan_in = static_cast<double>(weight_shape[1]) * weight_shape[2] * weight_shape[3];
        const double bound = 1.0 / std::sqrt(fan_in);
        SeededRng rng(derive_seed(seed, {t}));
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        std::vector<float> values(count);
        for (float& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
        store.add(name, shape, std::move(values));
    }
    return store;
}

ParameterStore zero_parameters(const NetworkSpec& spec) {
    ParameterStore store;
    for (const auto& [name, shape] : parameter_layout(spec)) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        store.add(name, shape, std::vector<float>(count, 0.0f));
    }
    return store;
}

void check_parameters(const NetworkSpec& spec, const ParameterStore& params) {
    const auto layout = parameter_layout(spec);
    if (layout.size() != params.size())
        throw InvalidArgument("parameter store has " + std::to_string(params.size()) + " tensors, network " +
                              spec.name + " needs " + std::to_string(layout.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& t = params.tensors()[i];
        if (t.name != layout[i].first || t.shape != layout[i].second)
            throw InvalidArgument("parameter " + t.name + " does not match network " + spec.name + " (expected " +
                                  layout[i].first + ")");
    }
}

Gradients Gradients::zeros_like(const ParameterStore& params) {
    Gradients g;
    g.values.reserve(params.size());
    for (const auto& t : params.tensors()) g.values.emplace_back(t.values.size(), 0.0);
    return g;
}

void Gradients::add(const Gradients& other) {
    if (other.values.size() != values.size()) throw InvalidArgument("Gradients::add: layout mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = 0; j < values[i].size(); ++j) values[i][j] += other.values[i][j];
}

void Gradients::scale(double factor) {
    for (auto& v : values)
        for (double& x : v) x *= factor;
}

bool Gradients::all_finite() const {
    for (const auto& v : values)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Res2Block

Tensor res2block_forward(const Res2BlockLayer& layer, const ParameterStore& params, const std::string& prefix,
                         const Tensor& input, Res2BlockTape* tape) {
    const int m = layer.in_channels, n = layer.out_channels, s = layer.scale_groups;
    if (input.channels != m)
        throw InvalidArgument(prefix + ": Res2Block expects " + std::to_string(m) + " channels, got " +
                              std::to_string(input.channels));
    if (s < 1 || n % s != 0) throw InvalidArgument(prefix + ": out_channels not divisible by scale_groups");
    const int width = n / s;

    Tensor entry_pre = conv(input, params, prefix + ".entry", m, n, 1);
    const Tensor h = relu(entry_pre);
    Tensor concat(n, input.height, input.width);
    copy_group(h, 0, concat, 0, width);

    Tensor prev = slice_channels(h, 0, width);
    for (int j = 1; j < s; ++j) {
        Tensor group_in = slice_channels(h, j * width, width);
        add_inplace(group_in, prev);
        Tensor pre = conv(group_in, params, prefix + ".group" + std::to_string(j), width, width, 3);
        prev = relu(pre);
        copy_group(prev, 0, concat, j * width, width);
        if (tape) {
            tape->group_inputs.push_back(std::move(group_in));
            tape->group_pre.push_back(std::move(pre));
        }
    }

    Tensor out = conv(concat, params, prefix + ".exit", n, n, 1);
    if (m != n) {
        add_inplace(out, conv(input, params, prefix + ".shortcut", m, n, 1));
    } else {
        add_inplace(out, input);
    }
    if (tape) {
        tape->input = input;
        tape->entry_pre = std::move(entry_pre);
        tape->concat = std::move(concat);
    }
    return out;
}

Tensor res2block_backward(const Res2BlockLayer& layer, const ParameterStore& params, const std::string& prefix,
                          const Res2BlockTape& tape, const Tensor& grad_output, Gradients& grads) {
    const int m = layer.in_channels, n = layer.out_channels, s = layer.scale_groups;
    const int width = n / s;

    const Tensor grad_concat = conv_backward(tape.concat, grad_output, params, grads, prefix + ".exit", n, n, 1);
    Tensor grad_input = m != n ? conv_backward(tape.input, grad_output, params, grads, prefix + ".shortcut", m, n, 1)
                               : grad_output;

    Tensor grad_h(n, tape.input.height, tape.input.width);
    // Gradient reaching y_{j} through the input of group j + 1.
    Tensor carry(width, tape.input.height, tape.input.width);
    for (int j = s - 1; j >= 1; --j) {
        Tensor grad_y = slice_channels(grad_concat, j * width, width);
        add_inplace(grad_y, carry);
        relu_backward_inplace(grad_y, tape.group_pre[j - 1]);
        carry = conv_backward(tape.group_inputs[j - 1], grad_y, params, grads, prefix + ".group" + std::to_string(j),
                              width, width, 3);
        copy_group(carry, 0, grad_h, j * width, width);
    }
    Tensor grad_first = slice_channels(grad_concat, 0, width);
    add_inplace(grad_first, carry);
    copy_group(grad_first, 0, grad_h, 0, width);

    relu_backward_inplace(grad_h, tape.entry_pre);
    add_inplace(grad_input, conv_backward(tape.input, grad_h, params, grads, prefix + ".entry", m, n, 1));
    return grad_input;
}

// ---------------------------------------------------------------------------
// Network forward / backward

Tensor forward(const NetworkSpec& spec, const ParameterStore& params, const Tensor& input, ForwardMode mode,
               SeededRng* rng, ForwardTape* tape) {
    if (input.channels != spec.input_channels)
        throw InvalidArgument("network " + spec.name + " expects " + std::to_string(spec.input_channels) +
                              " input channels, got " + std::to_string(input.channels));
    const int divisor = spec.spatial_divisor();
    if (input.height % divisor || input.width % divisor)
        throw InvalidArgument("network " + spec.name + ": input " + std::to_string(input.height) + "x" +
                              std::to_string(input.width) + " not divisible by " + std::to_string(divisor));
    if (tape) {
        tape->layers.clear();
        tape->layers.resize(spec.layers.size());
    }

    const double keep = 1.0 - spec.dropout_rate;
    Tensor x = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerTape* lt = tape ? &tape->layers[i] : nullptr;
        const std::string prefix = layer_prefix(i);
        Tensor y = std::visit(Overloaded{[&](const Res2BlockLayer& l) {
                                             return res2block_forward(l, params, prefix, x, lt ? &lt->block : nullptr);
                                         },
                                         [&](const Conv3x3Layer& l) {
                                             Tensor pre = conv(x, params, prefix + ".conv", l.in_channels,
                                                               l.out_channels, 3);
                                             Tensor act = relu(pre);
                                             if (lt) lt->pre_activation = std::move(pre);
                                             return act;
                                         },
                                         [&](const DownsampleLayer&) { return kernels::avg_pool2x(x); },
                                         [&](const UpsampleLayer&) { return kernels::upsample2x(x, spec.upsample); }},
                              spec.layers[i]);
        if (spec.dropout_after(i, mode)) {
            if (!rng) throw InvalidArgument("network " + spec.name + ": dropout requires a random stream");
            Tensor mask(y.channels, y.height, y.width);
            for (std::size_t k = 0; k < mask.data.size(); ++k) {
                mask.data[k] = rng->uniform() < keep ? 1.0 / keep : 0.0;
                y.data[k] *= mask.data[k];
            }
            if (lt) lt->dropout_mask = std::move(mask);
        }
        if (lt) lt->input = std::move(x);
        x = std::move(y);
    }
    if (spec.output == OutputActivation::sigmoid) {
        for (double& v : x.data) v = 1.0 / (1.0 + std::exp(-v));
    }
    if (tape) tape->output = x;
    return x;
}

Tensor backward(const NetworkSpec& spec, const ParameterStore& params, const ForwardTape& tape,
                const Tensor& grad_output, Gradients& grads) {
    if (tape.layers.size() != spec.layers.size()) throw InvalidArgument("backward: tape does not match network");
    if (!grad_output.same_shape(tape.output)) throw InvalidArgument("backward: gradient shape mismatch");
    Tensor g = grad_output;
    if (spec.output == OutputActivation::sigmoid) {
        for (std::size_t k = 0; k < g.data.size(); ++k) {
            const double s = tape.output.data[k];
            g.data[k] *= s * (1.0 - s);
        }
    }
    for (std::size_t idx = spec.layers.size(); idx-- > 0;) {
        const LayerTape& lt = tape.layers[idx];
        if (!lt.dropout_mask.data.empty()) {
            for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] *= lt.dropout_mask.data[k];
        }
        const std::string prefix = layer_prefix(idx);
        g = std::visit(Overloaded{[&](const Res2BlockLayer& l) {
                                      return res2block_backward(l, params, prefix, lt.block, g, grads);
                                  },
                                  [&](const Conv3x3Layer& l) {
                                      relu_backward_inplace(g, lt.pre_activation);
                                      return conv_backward(lt.input, g, params, grads, prefix + ".conv", l.in_channels,
                                                           l.out_channels, 3);
                                  },
                                  [&](const DownsampleLayer&) { return kernels::avg_pool2x_backward(g); },
                                  [&](const UpsampleLayer&) { return kernels::upsample2x_backward(g, spec.upsample); }},
                       spec.layers[idx]);
    }
    return g;
}

GradientResult compute_gradients(const NetworkSpec& spec, const ParameterStore& params, const Tensor& input,
                                 ForwardMode mode, SeededRng* rng, const LossClosure& loss) {
    ForwardTape tape;
    GradientResult result;
    result.output = forward(spec, params, input, mode, rng, &tape);
    Tensor grad_output(result.output.channels, result.output.height, result.output.width);
    result.loss = loss(result.output, grad_output);
    if (!std::isfinite(result.loss)) throw NumericalError("non-finite loss in network " + spec.name);
    result.grads = Gradients::zeros_like(params);
    result.input_grad = backward(spec, params, tape, grad_output, result.grads);
    return result;
}

}  // namespace atnet
