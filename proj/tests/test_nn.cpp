#include "doctest.h"
#include "test_util.hpp"

#include "olearn/error.hpp"
#include "olearn/losses.hpp"
#include "olearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace olearn;

namespace {

MLPModel linear_model(Tensor2D w, Tensor2D b) {
    MLPModel m;
    m.layers.push_back(DenseLayer{std::move(w), std::move(b)});
    return m;
}

// relu(x W0^T + b0) W1^T + b1 computed with a separate triple-loop product.
Tensor2D chain_oracle(const MLPModel& m, const Tensor2D& x) {
    Tensor2D h = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        Tensor2D z = testutil::naive_matmul(h, testutil::transpose(layer.weight));
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) {
                z(i, j) += layer.bias(0, j);
                if (l + 1 < m.layers.size()) z(i, j) = std::max(0.0, z(i, j));
            }
        h = z;
    }
    return h;
}

LossEvaluator ce_on(std::vector<int> labels) {
    return [labels](const Tensor2D& logits) { return cross_entropy(logits, labels); };
}

}  // namespace

TEST_CASE("forward: zero parameters give zero logits") {
    auto m = testutil::small_net(3, {5, 4}, 2, 1);
    for (auto* p : m.parameters()) p->fill(0.0);
    auto out = forward(m, testutil::random_tensor(4, 3, 9));
    CHECK(out.logits.rows() == 4);
    CHECK(out.logits.cols() == 2);
    for (double v : out.logits.values()) CHECK(v == 0.0);
}

TEST_CASE("forward: identity linear layer") {
    auto m = linear_model(Tensor2D::from_rows({{1, 0}, {0, 1}}), Tensor2D(1, 2));
    auto out = forward(m, Tensor2D::from_rows({{1, 2}}));
    CHECK(out.logits == Tensor2D::from_rows({{1, 2}}));
}

TEST_CASE("forward: 2-4-3 net equals the explicit matrix chain") {
    auto m = testutil::small_net(2, {4}, 3, 42);
    auto x = Tensor2D::from_rows({{0.5, -1.25}, {2.0, 0.75}, {-0.3, 0.1}});
    auto out = forward(m, x);
    auto ref = chain_oracle(m, x);
    REQUIRE(out.logits.same_shape(ref));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.logits.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-13));
    CHECK(out.features.cols() == 4);
    CHECK(predict_logits(m, x) == out.logits);
    CHECK(extract_features(m, x) == out.features);
}

TEST_CASE("forward rejects a batch of the wrong width") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    CHECK_THROWS_AS(forward(m, Tensor2D(2, 4)), DimensionError);
}

TEST_CASE("forward is deterministic") {
    auto m = testutil::small_net(6, {8, 8}, 4, 5);
    auto x = testutil::random_tensor(7, 6, 6);
    CHECK(forward(m, x).logits == forward(m, x).logits);
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
    auto m = testutil::small_net(3, {5, 4}, 2, 2);
    auto fw = forward(m, testutil::random_tensor(4, 3, 3));
    auto g = backward(m, fw.cache, Tensor2D(4, 2));
    REQUIRE(g.grads.size() == 6);
    for (const auto& t : g.grads)
        for (double v : t.values()) CHECK(v == 0.0);
}

TEST_CASE("backward: single layer weight gradient is the outer product") {
    auto m = linear_model(Tensor2D::from_rows({{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}}), Tensor2D(1, 2));
    auto x = Tensor2D::from_rows({{1.0, -2.0, 3.0}});
    auto fw = forward(m, x);
    auto g = backward(m, fw.cache, Tensor2D::from_rows({{0.5, -1.5}}));
    auto expected = Tensor2D::from_rows({{0.5, -1.0, 1.5}, {-1.5, 3.0, -4.5}});
    CHECK(g.grads[0] == expected);
    CHECK(g.grads[1] == Tensor2D::from_rows({{0.5, -1.5}}));
}

TEST_CASE("backward without a cache is an error") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    CHECK_THROWS_AS(backward(m, ForwardCache{}, Tensor2D(1, 2)), Error);
}

TEST_CASE("grad_check: 2-4-3 net with cross-entropy") {
    auto m = testutil::small_net(2, {4}, 3, 7);
    auto x = testutil::random_tensor(5, 2, 8);
    CHECK(grad_check(m, ce_on({0, 1, 2, 1, 0}), x) < 1e-4);
}

TEST_CASE("grad_check: constant loss has zero error") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    LossEvaluator constant = [](const Tensor2D& logits) { return LossResult{3.0, Tensor2D(logits.rows(), logits.cols())}; };
    CHECK(grad_check(m, constant, testutil::random_tensor(2, 3, 1)) == 0.0);
}

TEST_CASE("grad_check: modified cross-distillation") {
    auto m = testutil::small_net(4, {6, 5}, 5, 11);
    auto x = testutil::random_tensor(6, 4, 12);
    auto targets = testutil::random_tensor(6, 3, 13, 2.0);
    LossConfig cfg = LossConfig::defaults_for(3, 2);
    std::vector<int> labels{3, 4, 3, 0, 4, 1};
    LossEvaluator mcd = [&](const Tensor2D& logits) { return modified_cross_distillation(targets, logits, labels, cfg); };
    CHECK(grad_check(m, mcd, x) < 1e-4);
}

TEST_CASE("grad_check: non-finite loss is an error") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    LossEvaluator nan_loss = [](const Tensor2D& logits) {
        return LossResult{std::numeric_limits<double>::quiet_NaN(), Tensor2D(logits.rows(), logits.cols())};
    };
    CHECK_THROWS_AS(grad_check(m, nan_loss, testutil::random_tensor(2, 3, 1)), Error);
}

TEST_CASE("grad_check: subsampled parameters still pass") {
    auto m = testutil::small_net(5, {16, 16}, 4, 3);
    GradCheckOptions opts;
    opts.max_parameters = 40;
    opts.seed = 9;
    CHECK(grad_check(m, ce_on({0, 3, 2}), testutil::random_tensor(3, 5, 4), opts) < 1e-4);
}

TEST_CASE("sgd_step: zero learning rate is the identity") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    const auto before = m;
    auto fw = forward(m, testutil::random_tensor(3, 3, 2));
    auto g = backward(m, fw.cache, testutil::random_tensor(3, 2, 3));
    SGDState state;
    sgd_step(m, g, state, SGDConfig{0.0, 0.9, 1e-4});
    CHECK(m == before);
}

TEST_CASE("sgd_step: plain gradient step") {
    auto m = linear_model(Tensor2D::from_rows({{1.0, 2.0}}), Tensor2D::from_rows({{0.5}}));
    GradientSet g{{Tensor2D::from_rows({{0.25, -1.0}}), Tensor2D::from_rows({{2.0}})}};
    SGDState state;
    sgd_step(m, g, state, SGDConfig{1.0, 0.0, 0.0});
    CHECK(m.layers[0].weight == Tensor2D::from_rows({{0.75, 3.0}}));
    CHECK(m.layers[0].bias == Tensor2D::from_rows({{-1.5}}));
}

TEST_CASE("sgd_step: two momentum steps unroll to w - lr*g - lr*1.9*g") {
    const double lr = 0.1, w0 = 1.0, gv = 0.5;
    auto m = linear_model(Tensor2D::from_rows({{w0}}), Tensor2D::from_rows({{0.0}}));
    GradientSet g{{Tensor2D::from_rows({{gv}}), Tensor2D::from_rows({{0.0}})}};
    SGDState state;
    SGDConfig cfg{lr, 0.9, 0.0};
    sgd_step(m, g, state, cfg);
    sgd_step(m, g, state, cfg);
    CHECK(m.layers[0].weight(0, 0) == doctest::Approx(w0 - lr * gv - lr * 1.9 * gv).epsilon(1e-15));
}

TEST_CASE("sgd_step: weight decay enters the velocity") {
    auto m = linear_model(Tensor2D::from_rows({{2.0}}), Tensor2D::from_rows({{0.0}}));
    GradientSet g{{Tensor2D::from_rows({{0.0}}), Tensor2D::from_rows({{0.0}})}};
    SGDState state;
    sgd_step(m, g, state, SGDConfig{0.5, 0.0, 0.1});
    CHECK(m.layers[0].weight(0, 0) == doctest::Approx(2.0 - 0.5 * 0.2));
}

TEST_CASE("sgd_step rejects mismatched gradients") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    SGDState state;
    CHECK_THROWS_AS(sgd_step(m, GradientSet{}, state, SGDConfig{}), DimensionError);
}

TEST_CASE("SGDConfig validation") {
    CHECK_NOTHROW(SGDConfig{}.validate());
    CHECK_THROWS_AS((SGDConfig{-0.1, 0.9, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((SGDConfig{0.1, 1.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((SGDConfig{0.1, 0.9, -1.0}.validate()), ConfigError);
}

TEST_CASE("initialization respects the configured range") {
    ModelConfig cfg;
    cfg.input_dim = 10;
    cfg.n_out = 3;
    cfg.seed = 4;
    auto m = MLPModel::create(cfg);
    CHECK(m.layer_dims() == std::vector<std::size_t>{10, 64, 64, 3});
    for (const auto& layer : m.layers) {
        for (double w : layer.weight.values()) CHECK(std::abs(w) <= 0.05);
        for (double b : layer.bias.values()) CHECK(b == 0.0);
    }
    CHECK(MLPModel::create(cfg) == m);
    cfg.seed = 5;
    CHECK_FALSE(MLPModel::create(cfg) == m);
}

TEST_CASE("expand_head keeps old logits bit-exact") {
    auto m = testutil::small_net(4, {6, 5}, 3, 21);
    auto x = testutil::random_tensor(9, 4, 22, 5.0);
    auto before = predict_logits(m, x);
    auto grown = expand_head(m, 2, 23);
    CHECK(grown.n_out() == 5);
    auto after = predict_logits(grown, x);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(after(i, j) == before(i, j));
    for (double w : grown.layers.back().weight.row(4)) CHECK(std::abs(w) <= 0.05);
    CHECK(grown.layers.back().bias(0, 4) == 0.0);
    CHECK_THROWS_AS(expand_head(m, 0, 1), ConfigError);
}

TEST_CASE("expand_head is seeded") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    CHECK(expand_head(m, 1, 77) == expand_head(m, 1, 77));
    CHECK_FALSE(expand_head(m, 1, 77) == expand_head(m, 1, 78));
}

TEST_CASE("expanding twice by one matches expanding once by two on old outputs") {
    auto m = testutil::small_net(3, {5}, 2, 31);
    auto x = testutil::random_tensor(6, 3, 32);
    auto twice = expand_head(expand_head(m, 1, 1), 1, 2);
    auto once = expand_head(m, 2, 3);
    auto a = predict_logits(twice, x), b = predict_logits(once, x);
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(a(i, j) == b(i, j));
}

TEST_CASE("expand_velocity pads with zeros") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    auto fw = forward(m, testutil::random_tensor(3, 3, 2));
    auto g = backward(m, fw.cache, testutil::random_tensor(3, 2, 3));
    SGDState state;
    sgd_step(m, g, state, SGDConfig{});
    const auto old_head = state.velocity[2];
    const auto old_bias = state.velocity[3];
    auto grown = expand_head(m, 2, 5);
    expand_velocity(state, grown);
    CHECK(state.velocity[2].rows() == 4);
    CHECK(state.velocity[3].cols() == 4);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(state.velocity[2](r, c) == old_head(r, c));
    for (std::size_t c = 0; c < 4; ++c) CHECK(state.velocity[2](3, c) == 0.0);
    CHECK(state.velocity[3](0, 1) == old_bias(0, 1));
    CHECK(state.velocity[3](0, 3) == 0.0);
    // the padded state must be usable by the next step
    auto fw2 = forward(grown, testutil::random_tensor(2, 3, 4));
    CHECK_NOTHROW(sgd_step(grown, backward(grown, fw2.cache, Tensor2D(2, 4, 0.1)), state, SGDConfig{}));
}

TEST_CASE("model checkpoint round trip") {
    auto m = testutil::small_net(4, {7, 3}, 5, 8);
    std::stringstream buf;
    save_model(m, buf);
    auto back = load_model(buf);
    CHECK(back == m);
    CHECK(back.fingerprint() == m.fingerprint());
}

TEST_CASE("model checkpoint rejects bad input") {
    std::stringstream bad("NOTAMODEL-------");
    CHECK_THROWS_AS(load_model(bad), FormatError);

    auto m = testutil::small_net(2, {3}, 2, 1);
    std::stringstream buf;
    save_model(m, buf);
    std::string bytes = buf.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_model(truncated), FormatError);
}

TEST_CASE("fingerprint tracks parameter changes") {
    auto m = testutil::small_net(3, {4}, 2, 1);
    const auto fp = m.fingerprint();
    m.layers[0].weight(0, 0) += 1e-12;
    CHECK(m.fingerprint() != fp);
    CHECK(m.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
}
