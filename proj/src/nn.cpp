#include "olearn/nn.hpp"

#include "olearn/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace olearn {

namespace {

void init_uniform(Tensor2D& t, std::mt19937_64& rng, double range) {
    std::uniform_real_distribution<double> dist(-range, range);
    for (double& v : t.values()) v = dist(rng);
}

void relu_inplace(Tensor2D& t) {
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

Tensor2D affine(const DenseLayer& layer, const Tensor2D& x) {
    if (x.cols() != layer.in_dim()) {
        throw DimensionError("layer expects " + std::to_string(layer.in_dim()) +
                             " inputs, got " + std::to_string(x.cols()));
    }
    Tensor2D out = matmul_transposed(x, layer.weight);
    auto b = layer.bias.row(0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    return out;
}

constexpr char kModelMagic[8] = {'O', 'L', 'M', 'O', 'D', 'E', 'L', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("model checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) throw FormatError("model checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_tensor(std::ostream& out, const Tensor2D& t) {
    for (double v : t.values()) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

void read_tensor(std::istream& in, Tensor2D& t) {
    for (double& v : t.values()) v = std::bit_cast<double>(read_u64(in));
}

} // namespace

MLPModel MLPModel::create(const ModelConfig& cfg) {
    if (cfg.input_dim == 0 || cfg.n_out == 0) {
        throw ConfigError("model needs input_dim >= 1 and n_out >= 1");
    }
    std::vector<std::size_t> dims{cfg.input_dim};
    for (std::size_t h : cfg.hidden) {
        if (h == 0) throw ConfigError("hidden layer width must be >= 1");
        dims.push_back(h);
    }
    dims.push_back(cfg.n_out);

    std::mt19937_64 rng(cfg.seed);
    MLPModel model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer{Tensor2D(dims[l + 1], dims[l]), Tensor2D(1, dims[l + 1])};
        init_uniform(layer.weight, rng, cfg.init_range);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

std::vector<std::size_t> MLPModel::layer_dims() const {
    std::vector<std::size_t> dims;
    if (layers.empty()) return dims;
    dims.push_back(layers.front().in_dim());
    for (const auto& l : layers) dims.push_back(l.out_dim());
    return dims;
}

std::size_t MLPModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<Tensor2D*> MLPModel::parameters() {
    std::vector<Tensor2D*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor2D*> MLPModel::parameters() const {
    std::vector<const Tensor2D*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::uint64_t MLPModel::fingerprint() const {
    // FNV-1a over dims and parameter bit patterns.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    for (std::size_t d : layer_dims()) mix(d);
    for (const Tensor2D* p : parameters()) {
        for (double v : p->values()) mix(std::bit_cast<std::uint64_t>(v));
    }
    return h;
}

void MLPModel::validate() const {
    if (layers.empty()) throw DimensionError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) {
            throw DimensionError("layer " + std::to_string(l) + " bias shape mismatch");
        }
        if (l > 0 && layer.in_dim() != layers[l - 1].out_dim()) {
            throw DimensionError("layer " + std::to_string(l) + " does not chain");
        }
    }
}

ForwardResult forward(const MLPModel& model, const Tensor2D& batch) {
    if (model.layers.empty()) throw DimensionError("forward on empty model");
    if (batch.cols() != model.input_dim()) {
        throw DimensionError("batch has " + std::to_string(batch.cols()) +
                             " columns, model expects " + std::to_string(model.input_dim()));
    }
    ForwardResult res;
    res.cache.layer_inputs.reserve(model.layers.size());
    Tensor2D x = batch;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Tensor2D z = affine(model.layers[l], x);
        res.cache.layer_inputs.push_back(std::move(x));
        if (l + 1 < model.layers.size()) relu_inplace(z);
        x = std::move(z);
    }
    res.logits = std::move(x);
    res.features = res.cache.layer_inputs.back();
    return res;
}

Tensor2D predict_logits(const MLPModel& model, const Tensor2D& batch) {
    if (batch.cols() != model.input_dim()) {
        throw DimensionError("batch width does not match model input");
    }
    Tensor2D x = batch;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        x = affine(model.layers[l], x);
        if (l + 1 < model.layers.size()) relu_inplace(x);
    }
    return x;
}

Tensor2D extract_features(const MLPModel& model, const Tensor2D& batch) {
    if (batch.cols() != model.input_dim()) {
        throw DimensionError("batch width does not match model input");
    }
    Tensor2D x = batch;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        x = affine(model.layers[l], x);
        relu_inplace(x);
    }
    return x;
}

GradientSet backward(const MLPModel& model, const ForwardCache& cache, const Tensor2D& dlogits) {
    if (cache.layer_inputs.size() != model.layers.size()) {
        throw Error("backward: forward cache missing or from a different model");
    }
    const std::size_t batch = cache.layer_inputs.front().rows();
    if (dlogits.rows() != batch || dlogits.cols() != model.n_out()) {
        throw DimensionError("backward: dlogits shape does not match logits");
    }

    GradientSet gs;
    gs.grads.resize(2 * model.layers.size());
    Tensor2D delta = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const DenseLayer& layer = model.layers[li];
        const Tensor2D& input = cache.layer_inputs[li];

        gs.grads[2 * li] = transposed_matmul(delta, input);
        Tensor2D db(1, layer.out_dim());
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            auto dr = delta.row(r);
            for (std::size_t c = 0; c < dr.size(); ++c) db(0, c) += dr[c];
        }
        gs.grads[2 * li + 1] = std::move(db);

        if (li == 0) break;
        Tensor2D dx = matmul(delta, layer.weight);
        // input is the ReLU output of the previous layer
        auto in_vals = input.values();
        auto dx_vals = dx.values();
        for (std::size_t i = 0; i < dx_vals.size(); ++i) {
            if (in_vals[i] <= 0.0) dx_vals[i] = 0.0;
        }
        delta = std::move(dx);
    }
    return gs;
}

void SGDConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a finite value >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ConfigError("weight_decay must be a finite value >= 0");
    }
}

SGDState SGDState::zeros_like(const MLPModel& model) {
    SGDState s;
    for (const Tensor2D* p : model.parameters()) s.velocity.emplace_back(p->rows(), p->cols());
    return s;
}

void sgd_step(MLPModel& model, const GradientSet& grads, SGDState& state, const SGDConfig& cfg) {
    auto params = model.parameters();
    if (grads.grads.size() != params.size()) throw DimensionError("sgd_step: gradient count mismatch");
    if (state.velocity.empty()) state = SGDState::zeros_like(model);
    if (state.velocity.size() != params.size()) throw DimensionError("sgd_step: velocity count mismatch");

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor2D& w = *params[i];
        const Tensor2D& g = grads.grads[i];
        Tensor2D& v = state.velocity[i];
        if (!w.same_shape(g) || !w.same_shape(v)) {
            throw DimensionError("sgd_step: shape mismatch at parameter " + std::to_string(i));
        }
        auto wv = w.values();
        auto gv = g.values();
        auto vv = v.values();
        for (std::size_t k = 0; k < wv.size(); ++k) {
            vv[k] = cfg.momentum * vv[k] + gv[k] + cfg.weight_decay * wv[k];
            wv[k] -= cfg.learning_rate * vv[k];
        }
    }
}

MLPModel expand_head(const MLPModel& model, std::size_t m_new, std::uint64_t seed, double init_range) {
    if (m_new == 0) throw ConfigError("expand_head: m_new must be >= 1");
    MLPModel out = model;
    DenseLayer& head = out.layers.back();
    const std::size_t old_out = head.out_dim();
    const std::size_t in = head.in_dim();

    std::vector<double> w(head.weight.values().begin(), head.weight.values().end());
    std::vector<double> b(head.bias.values().begin(), head.bias.values().end());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-init_range, init_range);
    for (std::size_t r = 0; r < m_new; ++r) {
        for (std::size_t c = 0; c < in; ++c) w.push_back(dist(rng));
        b.push_back(0.0);
    }
    head.weight = Tensor2D(old_out + m_new, in, std::move(w));
    head.bias = Tensor2D(1, old_out + m_new, std::move(b));
    return out;
}

void expand_velocity(SGDState& state, const MLPModel& expanded) {
    if (state.velocity.empty()) return;
    const std::size_t n = state.velocity.size();
    if (n != 2 * expanded.layers.size()) throw DimensionError("expand_velocity: layer count mismatch");
    const DenseLayer& head = expanded.layers.back();
    // head weight grows by rows, head bias (1 x out) by columns; both are
    // row-major prefixes of their expanded shapes
    const Tensor2D* targets[2] = {&head.weight, &head.bias};
    for (std::size_t i = 0; i < 2; ++i) {
        Tensor2D& v = state.velocity[n - 2 + i];
        const Tensor2D& target = *targets[i];
        const bool embeds = i == 0 ? v.cols() == target.cols() && v.rows() <= target.rows()
                                   : v.rows() == 1 && v.cols() <= target.cols();
        if (!embeds) throw DimensionError("expand_velocity: velocity does not embed in expanded head");
        std::vector<double> data(v.values().begin(), v.values().end());
        data.resize(target.size(), 0.0);
        v = Tensor2D(target.rows(), target.cols(), std::move(data));
    }
}

double grad_check(const MLPModel& model, const LossEvaluator& loss, const Tensor2D& batch,
                  const GradCheckOptions& opts) {
    if (!(opts.epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be > 0");

    auto fwd = forward(model, batch);
    LossResult base = loss(fwd.logits);
    if (!std::isfinite(base.value)) throw Error("grad_check: non-finite loss");
    GradientSet analytic = backward(model, fwd.cache, base.dlogits);

    // flat (parameter, element) index space
    MLPModel probe = model;
    auto params = probe.parameters();
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t k = 0; k < params[p]->size(); ++k) slots.emplace_back(p, k);
    }
    if (opts.max_parameters > 0 && opts.max_parameters < slots.size()) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(slots.begin(), slots.end(), rng);
        slots.resize(opts.max_parameters);
    }

    auto loss_value = [&]() {
        double v = loss(predict_logits(probe, batch)).value;
        if (!std::isfinite(v)) throw Error("grad_check: non-finite loss");
        return v;
    };

    double worst = 0.0;
    for (auto [p, k] : slots) {
        double& w = params[p]->values()[k];
        const double saved = w;
        w = saved + opts.epsilon;
        const double up = loss_value();
        w = saved - opts.epsilon;
        const double down = loss_value();
        w = saved;
        const double numeric = (up - down) / (2.0 * opts.epsilon);
        const double a = analytic.grads[p].values()[k];
        worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

void save_model(const MLPModel& model, std::ostream& out) {
    model.validate();
    out.write(kModelMagic, sizeof(kModelMagic));
    const auto dims = model.layer_dims();
    write_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims) write_u64(out, d);
    for (const auto& layer : model.layers) {
        write_tensor(out, layer.weight);
        write_tensor(out, layer.bias);
    }
    if (!out) throw Error("failed writing model checkpoint");
}

MLPModel load_model(std::istream& in) {
    char magic[sizeof(kModelMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        throw FormatError("not a model checkpoint (bad magic)");
    }
    const std::uint32_t ndims = read_u32(in);
    if (ndims < 2 || ndims > 64) throw FormatError("model checkpoint: implausible layer count");
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) {
        d = read_u64(in);
        if (d == 0 || d > (1u << 24)) throw FormatError("model checkpoint: implausible layer width");
    }
    MLPModel model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer{Tensor2D(dims[l + 1], dims[l]), Tensor2D(1, dims[l + 1])};
        read_tensor(in, layer.weight);
        read_tensor(in, layer.bias);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

void save_model(const MLPModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    save_model(model, out);
}

MLPModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return load_model(in);
}

} // namespace olearn
