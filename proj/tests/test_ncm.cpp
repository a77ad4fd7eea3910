#include "doctest.h"
#include "test_util.hpp"

#include "olearn/error.hpp"
#include "olearn/ncm.hpp"

#include <limits>
#include <random>

using namespace olearn;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return v; }

// Exhaustive scan over explicit means, lowest id wins ties.
int brute_force_nearest(const std::vector<std::vector<double>>& means, const std::vector<double>& f) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < means.size(); ++c) {
        double d = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - means[c][i]) * (f[i] - means[c][i]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("update_mean examples") {
    ClassMeanState s;
    update_mean(s, vec({4.0, -2.0}));
    CHECK(s.mean == vec({4.0, -2.0}));
    CHECK(s.count == 1);

    ClassMeanState fixed{0, {1.0}, 2};
    update_mean(fixed, vec({1.0}));
    CHECK(fixed.mean[0] == 1.0);
    CHECK(fixed.count == 3);

    ClassMeanState one{0, {0.0}, 1};
    update_mean(one, vec({3.0}));
    CHECK(one.mean[0] == 1.5);

    CHECK_THROWS_AS(update_mean(one, vec({1.0, 2.0})), DimensionError);
}

TEST_CASE("running mean equals the batch mean") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(5.0, 10.0);
    ClassMeanState s;
    std::vector<double> sum(6, 0.0);
    const int count = 500;
    for (int i = 0; i < count; ++i) {
        std::vector<double> f(6);
        for (std::size_t j = 0; j < 6; ++j) sum[j] += f[j] = nd(rng);
        update_mean(s, f);
    }
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(s.mean[j] - sum[j] / count) <= 1e-9);
}

TEST_CASE("ncm_classify examples") {
    NCMClassifier ncm;
    CHECK(ncm.empty());
    CHECK_THROWS_AS(ncm_classify(vec({0.0}), ncm), Error);
    CHECK_FALSE(ncm.try_classify(vec({0.0})).has_value());

    ncm.observe(3, vec({1.0, 1.0}));
    ncm.observe(1, vec({-1.0, -1.0}));
    CHECK(ncm_classify(vec({1.0, 1.0}), ncm) == 3);
    CHECK(ncm_classify(vec({-1.0, -1.0}), ncm) == 1);
    // equidistant from both means: the lower id
    CHECK(ncm_classify(vec({1.0, -1.0}), ncm) == 1);
    CHECK(ncm.classify(vec({0.0, 0.0})) == 1);
}

TEST_CASE("ncm_classify agrees with brute force on seeded queries") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        NCMClassifier ncm;
        std::vector<std::vector<double>> means(5, std::vector<double>(4, 0.0));
        std::vector<std::size_t> counts(5, 0);
        auto samples = testutil::random_tensor(60, 4, seed, 3.0);
        for (std::size_t i = 0; i < 60; ++i) {
            const int c = static_cast<int>(i % 5);
            ncm.observe(c, samples.row(i));
            auto& m = means[static_cast<std::size_t>(c)];
            auto& n = counts[static_cast<std::size_t>(c)];
            for (std::size_t j = 0; j < 4; ++j) m[j] = (m[j] * static_cast<double>(n) + samples(i, j)) / static_cast<double>(n + 1);
            ++n;
        }
        auto queries = testutil::random_tensor(100, 4, seed + 50, 3.0);
        int agree = 0;
        for (std::size_t q = 0; q < 100; ++q) {
            std::vector<double> f(queries.row(q).begin(), queries.row(q).end());
            agree += ncm_classify(f, ncm) == brute_force_nearest(means, f);
        }
        CHECK(agree == 100);
    }
}

TEST_CASE("ncm_classify is translation invariant") {
    NCMClassifier ncm, moved;
    auto pts = testutil::random_tensor(20, 3, 8);
    const std::vector<double> shift{10.0, -4.0, 0.25};
    for (std::size_t i = 0; i < 20; ++i) {
        const int c = static_cast<int>(i % 4);
        ncm.observe(c, pts.row(i));
        std::vector<double> p(pts.row(i).begin(), pts.row(i).end());
        for (std::size_t j = 0; j < 3; ++j) p[j] += shift[j];
        moved.observe(c, p);
    }
    auto qs = testutil::random_tensor(50, 3, 9);
    for (std::size_t i = 0; i < 50; ++i) {
        std::vector<double> q(qs.row(i).begin(), qs.row(i).end());
        const int a = ncm.classify(q);
        for (std::size_t j = 0; j < 3; ++j) q[j] += shift[j];
        CHECK(moved.classify(q) == a);
    }
}
