#pragma once

#include "olearn/nn.hpp"
#include "olearn/tensor.hpp"

#include <span>
#include <vector>

namespace olearn {

// Loss family for learning new classes on top of a trained model.
//
// Class ids are 0-based head indices. The first `n` logits belong to the old
// classes, the following `m` to the new ones. Every loss returns the batch
// mean and its gradient with respect to the new model's logits. Recorded
// old-model logits are constants: no gradient is produced for them.

struct LossConfig {
    double temperature = 2.0;
    double alpha = 0.5;
    double beta = 0.5;
    std::size_t n = 0;  // old classes
    std::size_t m = 0;  // new classes

    /// T = 2, beta = 0.5, alpha = n / (n + m).
    static LossConfig defaults_for(std::size_t n, std::size_t m);

    /// Throws ConfigError when a field is outside its domain.
    void validate() const;
};

std::vector<double> tempered_softmax(std::span<const double> logits, double temperature);

/// Row-wise tempered softmax over the first `width` columns.
Tensor2D tempered_softmax_rows(const Tensor2D& logits, double temperature, std::size_t width);

/// -log p(label), p = softmax(logits).
LossResult cross_entropy(const Tensor2D& logits, std::span<const int> labels);

/// Cross-entropy between tempered old-model outputs (targets, batch x n) and
/// the tempered first n new logits.
LossResult distillation_loss(const Tensor2D& targets, const Tensor2D& new_logits,
                             const LossConfig& cfg);

/// alpha * distillation + (1 - alpha) * cross-entropy.
LossResult cross_distillation(const Tensor2D& targets, const Tensor2D& new_logits,
                              std::span<const int> labels, const LossConfig& cfg);

/// First n logits become beta * new + (1 - beta) * old; the rest are copied.
Tensor2D accommodate(const Tensor2D& new_logits, const Tensor2D& targets, double beta,
                     std::size_t n);

/// Cross-distillation whose cross-entropy term is taken over the accommodated
/// logits. The accommodation scales the first n logit gradients by beta.
LossResult modified_cross_distillation(const Tensor2D& targets, const Tensor2D& new_logits,
                                       std::span<const int> labels, const LossConfig& cfg);

double alpha_for(std::size_t n, std::size_t m);

} // namespace olearn
