#include "atnet/loss.hpp"

#include <cmath>

namespace atnet {

namespace {

void check_batch(std::span<const Tensor> pred, std::span<const Tensor> target, const char* what) {
    if (pred.size() != target.size() || pred.empty())
        throw InvalidArgument(std::string(what) + ": batch sizes differ or are empty");
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (!pred[i].same_shape(target[i])) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

std::vector<Tensor> to_tensors(const std::vector<Image>& images) {
    std::vector<Tensor> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(to_tensor(img));
    return out;
}

double sample_l1(const Tensor& pred, const Tensor& target, Tensor* grad) {
    const double n = static_cast<double>(pred.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        sum += std::abs(d);
        if (grad) grad->data[i] += (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    return sum / n;
}

double sample_perceptual(const Tensor& pred, const Tensor& target, const FeatureExtractor& extractor, double weight,
                         Tensor* grad) {
    const Tensor fp = extractor.features(pred);
    const Tensor ft = extractor.features(target);
    if (!fp.same_shape(ft)) throw InvalidArgument("perceptual loss: feature shapes differ");
    const double m = static_cast<double>(fp.size());
    double sum = 0.0;
    Tensor grad_features(fp.channels, fp.height, fp.width);
    for (std::size_t i = 0; i < fp.size(); ++i) {
        const double d = fp.data[i] - ft.data[i];
        sum += d * d;
        grad_features.data[i] = weight * 2.0 * d / m;
    }
    if (grad) add_inplace(*grad, extractor.backward(pred, grad_features));
    return sum / m;
}

}  // namespace

void LossConfig::validate() const {
    if (!(lambda_p >= 0.0) || !std::isfinite(lambda_p)) throw InvalidArgument("lambda_p must be >= 0");
    if (lambda_p > 0.0 && !extractor) throw InvalidArgument("lambda_p > 0 requires a feature extractor");
}

double l1_loss(std::span<const Tensor> pred, std::span<const Tensor> target) {
    check_batch(pred, target, "l1_loss");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        for (std::size_t i = 0; i < pred[b].size(); ++i) sum += std::abs(pred[b].data[i] - target[b].data[i]);
        count += pred[b].size();
    }
    return sum / static_cast<double>(count);
}

double perceptual_loss(std::span<const Tensor> pred, std::span<const Tensor> target, const FeatureExtractor& extractor) {
    check_batch(pred, target, "perceptual_loss");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        const Tensor fp = extractor.features(pred[b]);
        const Tensor ft = extractor.features(target[b]);
        if (!fp.same_shape(ft)) throw InvalidArgument("perceptual_loss: feature shapes differ");
        for (std::size_t i = 0; i < fp.size(); ++i) {
            const double d = fp.data[i] - ft.data[i];
            sum += d * d;
        }
        count += fp.size();
    }
    return sum / static_cast<double>(count);
}

LossValue total_loss(std::span<const Tensor> pred, std::span<const Tensor> target, const LossConfig& cfg) {
    cfg.validate();
    LossValue v;
    v.l1 = l1_loss(pred, target);
    if (cfg.lambda_p > 0.0) v.perceptual = perceptual_loss(pred, target, *cfg.extractor);
    v.total = cfg.lambda_p > 0.0 ? v.l1 + cfg.lambda_p * v.perceptual : v.l1;
    return v;
}

double l1_loss(const std::vector<Image>& pred, const std::vector<Image>& target) {
    return l1_loss(to_tensors(pred), to_tensors(target));
}

double perceptual_loss(const std::vector<Image>& pred, const std::vector<Image>& target,
                       const FeatureExtractor& extractor) {
    return perceptual_loss(to_tensors(pred), to_tensors(target), extractor);
}

LossValue total_loss(const std::vector<Image>& pred, const std::vector<Image>& target, const LossConfig& cfg) {
    return total_loss(to_tensors(pred), to_tensors(target), cfg);
}

LossValue sample_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg, Tensor* grad_pred) {
    cfg.validate();
    if (!pred.same_shape(target)) throw InvalidArgument("sample_loss: shape mismatch");
    if (grad_pred) *grad_pred = Tensor(pred.channels, pred.height, pred.width);
    LossValue v;
    v.l1 = sample_l1(pred, target, grad_pred);
    if (cfg.lambda_p > 0.0) v.perceptual = sample_perceptual(pred, target, *cfg.extractor, cfg.lambda_p, grad_pred);
    v.total = cfg.lambda_p > 0.0 ? v.l1 + cfg.lambda_p * v.perceptual : v.l1;
    return v;
}

}  // namespace atnet
