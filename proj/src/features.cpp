#include "atnet/features.hpp"

#include <cmath>

#include "atnet/checkpoint.hpp"

namespace atnet {

NetworkSpec random_descriptor_spec() {
    NetworkSpec spec;
    spec.name = "descriptor";
    spec.input_channels = 3;
    spec.dropout_rate = 0.0;
    spec.output = OutputActivation::none;
    spec.layers = {Conv3x3Layer{3, 16},  DownsampleLayer{}, Conv3x3Layer{16, 32}, DownsampleLayer{},
                   Conv3x3Layer{32, 64}, DownsampleLayer{}, Conv3x3Layer{64, 64}, DownsampleLayer{},
                   Conv3x3Layer{64, 64}, DownsampleLayer{}};
    spec.validate();
    return spec;
}

ConvFeatureExtractor::ConvFeatureExtractor(const NetworkSpec& full_spec, const ParameterStore& full_params,
                                           FeatureTap tap)
    : tap_(tap) {
    check_parameters(full_spec, full_params);
    const int pools_needed = tap == FeatureTap::pool3 ? 3 : 5;
    spec_ = full_spec;
    spec_.name = full_spec.name + "@" + this->tap();
    spec_.output = OutputActivation::none;
    spec_.dropout_rate = 0.0;
    spec_.dropout_everywhere = false;
    spec_.layers.clear();
    int pools = 0;
    for (const auto& layer : full_spec.layers) {
        if (std::holds_alternative<Res2BlockLayer>(layer) || std::holds_alternative<UpsampleLayer>(layer))
            throw InvalidArgument("feature extractor network may contain only conv and downsample layers");
        spec_.layers.push_back(layer);
        if (std::holds_alternative<DownsampleLayer>(layer) && ++pools == pools_needed) break;
    }
    if (pools < pools_needed)
        throw InvalidArgument("feature extractor network has " + std::to_string(pools) + " pooling stages, tap " +
                              this->tap() + " needs " + std::to_string(pools_needed));
    for (const auto& [name, shape] : parameter_layout(spec_)) {
        params_.add(name, shape, full_params.get(name).values);
    }
}

ConvFeatureExtractor ConvFeatureExtractor::random_descriptor(std::uint64_t seed, FeatureTap tap) {
    const NetworkSpec spec = random_descriptor_spec();
    ParameterStore params = init_parameters(spec, seed);
    // He-uniform scale keeps activations from shrinking through the ReLU stack.
    for (auto& t : params.tensors())
        for (float& v : t.values) v = static_cast<float>(v * std::sqrt(6.0));
    return ConvFeatureExtractor(spec, params, tap);
}

ConvFeatureExtractor ConvFeatureExtractor::from_weights_file(const std::filesystem::path& path, FeatureTap tap) {
    const Checkpoint ckpt = load_checkpoint(path);
    return ConvFeatureExtractor(ckpt.spec, ckpt.params, tap);
}

// Inputs whose sides are not multiples of the pooling divisor are edge-padded.
Tensor ConvFeatureExtractor::features(const Tensor& image) const {
    const int d = spec_.spatial_divisor();
    const Tensor padded = pad_replicate(image, round_up(image.height, d), round_up(image.width, d));
    return forward(spec_, params_, padded, ForwardMode::eval_deterministic, nullptr);
}

Tensor ConvFeatureExtractor::backward(const Tensor& image, const Tensor& grad_features) const {
    const int d = spec_.spatial_divisor();
    const Tensor padded = pad_replicate(image, round_up(image.height, d), round_up(image.width, d));
    ForwardTape tape;
    forward(spec_, params_, padded, ForwardMode::eval_deterministic, nullptr, &tape);
    Gradients scratch = Gradients::zeros_like(params_);
    const Tensor grad = atnet::backward(spec_, params_, tape, grad_features, scratch);
    return pad_replicate_backward(grad, image.height, image.width);
}

std::shared_ptr<const FeatureExtractor> make_feature_extractor(const std::filesystem::path& weights,
                                                               std::uint64_t seed, FeatureTap tap) {
    if (weights.empty()) return std::make_shared<ConvFeatureExtractor>(ConvFeatureExtractor::random_descriptor(seed, tap));
    return std::make_shared<ConvFeatureExtractor>(ConvFeatureExtractor::from_weights_file(weights, tap));
}

}  // namespace atnet
