#include "olearn/losses.hpp"

#include "olearn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace olearn {

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw DimensionError("got " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
        }
    }
}

void check_distill_shapes(const Tensor2D& targets, const Tensor2D& new_logits, std::size_t n) {
    if (n == 0) throw ConfigError("distillation needs at least one old class");
    if (targets.cols() != n) {
        throw DimensionError("targets have " + std::to_string(targets.cols()) +
                             " columns, expected n = " + std::to_string(n));
    }
    if (targets.rows() != new_logits.rows()) throw DimensionError("targets/logits row mismatch");
    if (new_logits.cols() < n) throw DimensionError("new logits narrower than n");
}

// Mean over rows of -log softmax(logits)[label], dlogits = (p - onehot) / B.
// `scale_first` multiplies the gradient of the first `scaled` columns.
LossResult softmax_cross_entropy(const Tensor2D& logits, std::span<const int> labels,
                                 std::size_t scaled, double scale_first) {
    const std::size_t batch = logits.rows();
    LossResult res;
    res.dlogits = tempered_softmax_rows(logits, 1.0, logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        auto p = res.dlogits.row(r);
        const auto y = static_cast<std::size_t>(labels[r]);
        // log-sum-exp form keeps the value exact when p[y] underflows
        auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        total += std::log(sum) - (z[y] - zmax);
        p[y] -= 1.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            p[c] /= static_cast<double>(batch);
            if (c < scaled) p[c] *= scale_first;
        }
    }
    res.value = total / static_cast<double>(batch);
    return res;
}

void add_scaled(LossResult& acc, const LossResult& part, double w) {
    acc.value += w * part.value;
    auto a = acc.dlogits.values();
    auto b = part.dlogits.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += w * b[i];
}

} // namespace

LossConfig LossConfig::defaults_for(std::size_t n, std::size_t m) {
    LossConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.alpha = alpha_for(n, m);
    return cfg;
}

void LossConfig::validate() const {
    if (!(temperature >= 1.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be a finite value >= 1");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
    if (n == 0) throw ConfigError("n (old classes) must be >= 1");
    if (m == 0) throw ConfigError("m (new classes) must be >= 1");
}

std::vector<double> tempered_softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (logits.empty()) return {};
    const double zmax = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(zmax)) throw ConfigError("tempered_softmax: non-finite logits");
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - zmax) / temperature);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Tensor2D tempered_softmax_rows(const Tensor2D& logits, double temperature, std::size_t width) {
    if (width > logits.cols()) throw DimensionError("softmax width exceeds logits");
    Tensor2D out(logits.rows(), width);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto p = tempered_softmax(logits.row(r).first(width), temperature);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

LossResult cross_entropy(const Tensor2D& logits, std::span<const int> labels) {
    if (logits.rows() == 0) throw DimensionError("cross_entropy on empty batch");
    check_labels(labels, logits.rows(), logits.cols());
    return softmax_cross_entropy(logits, labels, 0, 1.0);
}

LossResult distillation_loss(const Tensor2D& targets, const Tensor2D& new_logits,
                             const LossConfig& cfg) {
    check_distill_shapes(targets, new_logits, cfg.n);
    if (new_logits.rows() == 0) throw DimensionError("distillation_loss on empty batch");
    const std::size_t batch = new_logits.rows();
    const double t = cfg.temperature;
    const Tensor2D target_p = tempered_softmax_rows(targets, t, cfg.n);
    const Tensor2D new_p = tempered_softmax_rows(new_logits, t, cfg.n);

    LossResult res;
    res.dlogits = Tensor2D(batch, new_logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        auto z = new_logits.row(r).first(cfg.n);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp((v - zmax) / t);
        const double log_norm = std::log(sum);
        for (std::size_t i = 0; i < cfg.n; ++i) {
            const double log_p = (z[i] - zmax) / t - log_norm;
            total -= target_p(r, i) * log_p;
            // d/dz_i of -sum_j q_j log p_j = (p_i - q_i) / T, since sum_j q_j = 1
            res.dlogits(r, i) = (new_p(r, i) - target_p(r, i)) / (t * static_cast<double>(batch));
        }
    }
    res.value = total / static_cast<double>(batch);
    return res;
}

LossResult cross_distillation(const Tensor2D& targets, const Tensor2D& new_logits,
                              std::span<const int> labels, const LossConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    LossResult ce = cross_entropy(new_logits, labels);
    LossResult kd = distillation_loss(targets, new_logits, cfg);
    LossResult res{0.0, Tensor2D(new_logits.rows(), new_logits.cols())};
    add_scaled(res, kd, cfg.alpha);
    add_scaled(res, ce, 1.0 - cfg.alpha);
    return res;
}

Tensor2D accommodate(const Tensor2D& new_logits, const Tensor2D& targets, double beta,
                     std::size_t n) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
    if (targets.cols() != n || new_logits.cols() < n || targets.rows() != new_logits.rows()) {
        throw DimensionError("accommodate: expected (B x n+m) logits and (B x n) targets");
    }
    Tensor2D out = new_logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            out(r, i) = beta * new_logits(r, i) + (1.0 - beta) * targets(r, i);
        }
    }
    return out;
}

LossResult modified_cross_distillation(const Tensor2D& targets, const Tensor2D& new_logits,
                                       std::span<const int> labels, const LossConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    check_distill_shapes(targets, new_logits, cfg.n);
    check_labels(labels, new_logits.rows(), new_logits.cols());
    const Tensor2D mixed = accommodate(new_logits, targets, cfg.beta, cfg.n);
    LossResult mce = softmax_cross_entropy(mixed, labels, cfg.n, cfg.beta);
    LossResult kd = distillation_loss(targets, new_logits, cfg);
    LossResult res{0.0, Tensor2D(new_logits.rows(), new_logits.cols())};
    add_scaled(res, kd, cfg.alpha);
    add_scaled(res, mce, 1.0 - cfg.alpha);
    return res;
}

double alpha_for(std::size_t n, std::size_t m) {
    if (n == 0) throw ConfigError("alpha_for: n must be >= 1");
    if (m == 0) throw ConfigError("alpha_for: m must be >= 1");
    return static_cast<double>(n) / static_cast<double>(n + m);
}

} // namespace olearn
