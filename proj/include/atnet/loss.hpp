#pragma once

#include <memory>
#include <span>

#include "atnet/features.hpp"
#include "atnet/image.hpp"
#include "atnet/tensor.hpp"

namespace atnet {

inline constexpr double kDefaultLambdaP = 0.002;

struct LossConfig {
    double lambda_p = kDefaultLambdaP;
    std::shared_ptr<const FeatureExtractor> extractor;

    void validate() const;
};

struct LossValue {
    double l1 = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
};

/// Mean absolute difference over every element of the batch.
double l1_loss(std::span<const Tensor> pred, std::span<const Tensor> target);
/// Mean squared difference of extractor features over the batch.
double perceptual_loss(std::span<const Tensor> pred, std::span<const Tensor> target, const FeatureExtractor& extractor);
/// l1 + lambda_p * perceptual. The perceptual term is skipped when lambda_p == 0.
LossValue total_loss(std::span<const Tensor> pred, std::span<const Tensor> target, const LossConfig& cfg);

double l1_loss(const std::vector<Image>& pred, const std::vector<Image>& target);
double perceptual_loss(const std::vector<Image>& pred, const std::vector<Image>& target,
                       const FeatureExtractor& extractor);
LossValue total_loss(const std::vector<Image>& pred, const std::vector<Image>& target, const LossConfig& cfg);

/// Loss of one sample plus dLoss/dpred. With equal-shaped samples the batch loss is
/// the average of these, so a batch gradient is the average of the sample gradients.
LossValue sample_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg, Tensor* grad_pred);

}  // namespace atnet
