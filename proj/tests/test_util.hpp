#pragma once

#include "olearn/nn.hpp"
#include "olearn/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace testutil {

inline olearn::Tensor2D random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    olearn::Tensor2D t(rows, cols);
    for (double& v : t.values()) v = nd(rng);
    return t;
}

inline std::vector<int> random_labels(std::size_t count, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ud(0, classes - 1);
    std::vector<int> out(count);
    for (int& v : out) v = ud(rng);
    return out;
}

// Small net with weights large enough that ReLUs are not all dead or all linear.
inline olearn::MLPModel small_net(std::size_t in, std::vector<std::size_t> hidden, std::size_t out, std::uint64_t seed,
                                  double init_range = 0.8) {
    olearn::ModelConfig cfg;
    cfg.input_dim = in;
    cfg.hidden = std::move(hidden);
    cfg.n_out = out;
    cfg.seed = seed;
    cfg.init_range = init_range;
    auto m = olearn::MLPModel::create(cfg);
    std::mt19937_64 rng(seed ^ 0xb1a5);
    std::uniform_real_distribution<double> ud(-0.3, 0.3);
    for (auto& layer : m.layers) {
        for (double& b : layer.bias.values()) b = ud(rng);
    }
    return m;
}

// Naive triple loop: a (r x k) times b (k x c).
inline olearn::Tensor2D naive_matmul(const olearn::Tensor2D& a, const olearn::Tensor2D& b) {
    olearn::Tensor2D out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline olearn::Tensor2D transpose(const olearn::Tensor2D& a) {
    olearn::Tensor2D out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

}  // namespace testutil
