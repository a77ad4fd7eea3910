#pragma once

#include "olearn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

namespace olearn {

/// Fully connected layer computing x * W^T + b. `weight` is (out x in),
/// `bias` is (1 x out).
struct DenseLayer {
    Tensor2D weight;
    Tensor2D bias;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ModelConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{64, 64};
    std::size_t n_out = 1;
    std::uint64_t seed = 0;
    double init_range = 0.05;
};

/// Rectified dense network. Hidden layers use ReLU, the head is linear.
/// The input to the head (the last hidden activation) is the feature vector.
struct MLPModel {
    std::vector<DenseLayer> layers;

    static MLPModel create(const ModelConfig& cfg);

    std::vector<std::size_t> layer_dims() const;
    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t feature_dim() const { return layers.back().in_dim(); }
    std::size_t n_out() const { return layers.back().out_dim(); }
    std::size_t parameter_count() const;

    /// Parameters in canonical order: weight0, bias0, weight1, bias1, ...
    std::vector<Tensor2D*> parameters();
    std::vector<const Tensor2D*> parameters() const;

    /// Hash of dims and parameter bits; identifies an extractor version.
    std::uint64_t fingerprint() const;

    /// Throws DimensionError if consecutive layers do not chain.
    void validate() const;

    friend bool operator==(const MLPModel&, const MLPModel&) = default;
};

/// Inputs seen by every layer during a forward pass.
struct ForwardCache {
    std::vector<Tensor2D> layer_inputs;
    bool empty() const { return layer_inputs.empty(); }
};

struct ForwardResult {
    Tensor2D logits;
    Tensor2D features;
    ForwardCache cache;
};

ForwardResult forward(const MLPModel& model, const Tensor2D& batch);

/// Logits only; skips keeping the cache.
Tensor2D predict_logits(const MLPModel& model, const Tensor2D& batch);

/// Penultimate activations.
Tensor2D extract_features(const MLPModel& model, const Tensor2D& batch);

struct GradientSet {
    std::vector<Tensor2D> grads;  // canonical parameter order
};

/// Gradients of a scalar loss given its gradient w.r.t. the logits.
GradientSet backward(const MLPModel& model, const ForwardCache& cache, const Tensor2D& dlogits);

struct SGDConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0001;

    void validate() const;
};

struct SGDState {
    std::vector<Tensor2D> velocity;

    static SGDState zeros_like(const MLPModel& model);
};

/// v <- momentum * v + g + weight_decay * w;  w <- w - learning_rate * v.
/// An empty state is zero-initialized on first use.
void sgd_step(MLPModel& model, const GradientSet& grads, SGDState& state, const SGDConfig& cfg);

/// Adds `m_new` output units. Existing rows are copied verbatim; new rows
/// are uniform(-init_range, init_range) from `seed`, new biases zero.
MLPModel expand_head(const MLPModel& model, std::size_t m_new, std::uint64_t seed,
                     double init_range = 0.05);

/// Pads head velocity with zero rows so it matches an expanded model.
void expand_velocity(SGDState& state, const MLPModel& expanded);

struct LossResult {
    double value = 0.0;
    Tensor2D dlogits;
};

using LossEvaluator = std::function<LossResult(const Tensor2D& logits)>;

struct GradCheckOptions {
    double epsilon = 1e-5;
    std::size_t max_parameters = 0;  // 0 checks every scalar parameter
    std::uint64_t seed = 0;
};

/// Largest |analytic - central difference| / max(1, |central difference|)
/// over the checked parameters.
double grad_check(const MLPModel& model, const LossEvaluator& loss, const Tensor2D& batch,
                  const GradCheckOptions& opts = {});

// Binary checkpoint: "OLMODEL1", u32 layer count + 1, u64 dims, then per layer
// weight and bias doubles. All integers and doubles little-endian.
void save_model(const MLPModel& model, std::ostream& out);
MLPModel load_model(std::istream& in);
void save_model(const MLPModel& model, const std::filesystem::path& path);
MLPModel load_model(const std::filesystem::path& path);

} // namespace olearn
