#include "doctest.h"
#include "test_util.hpp"

#include "olearn/error.hpp"
#include "olearn/tensor.hpp"

using namespace olearn;

TEST_CASE("from_rows lays out row-major") {
    auto t = Tensor2D::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 0) == 4);
    CHECK(t.row(1)[2] == 6);
    CHECK(t.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("ragged rows are rejected") {
    CHECK_THROWS_AS(Tensor2D::from_rows({{1, 2}, {3}}), DimensionError);
    CHECK_THROWS_AS(Tensor2D(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("matrix products agree with a triple loop") {
    auto a = testutil::random_tensor(3, 4, 1);
    auto b = testutil::random_tensor(4, 5, 2);
    auto c = testutil::random_tensor(5, 4, 3);
    auto d = testutil::random_tensor(3, 2, 4);

    auto ref = testutil::naive_matmul(a, b);
    auto got = matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-14));

    auto ref_t = testutil::naive_matmul(a, testutil::transpose(c));
    auto got_t = matmul_transposed(a, c);
    for (std::size_t i = 0; i < ref_t.size(); ++i) CHECK(got_t.values()[i] == doctest::Approx(ref_t.values()[i]).epsilon(1e-14));

    auto ref_tm = testutil::naive_matmul(testutil::transpose(a), d);
    auto got_tm = transposed_matmul(a, d);
    CHECK(got_tm.rows() == 4);
    CHECK(got_tm.cols() == 2);
    for (std::size_t i = 0; i < ref_tm.size(); ++i) CHECK(got_tm.values()[i] == doctest::Approx(ref_tm.values()[i]).epsilon(1e-14));

    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(matmul_transposed(a, b), DimensionError);
}

TEST_CASE("gather, stack and distance helpers") {
    auto t = Tensor2D::from_rows({{1, 1}, {2, 2}, {3, 3}});
    std::vector<std::size_t> idx{2, 0};
    CHECK(gather_rows(t, idx) == Tensor2D::from_rows({{3, 3}, {1, 1}}));
    std::vector<std::size_t> bad{3};
    CHECK_THROWS_AS(gather_rows(t, bad), DimensionError);

    std::vector<std::vector<double>> rows{{1, 2}, {3, 4}};
    CHECK(stack_rows(rows) == Tensor2D::from_rows({{1, 2}, {3, 4}}));

    std::vector<double> x{0, 0}, y{3, 4};
    CHECK(squared_distance(x, y) == 25.0);
}

TEST_CASE("all_finite spots NaN and infinity") {
    Tensor2D t(2, 2, 1.0);
    CHECK(t.all_finite());
    t(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}
