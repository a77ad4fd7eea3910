#include "olearn/tensor.hpp"

#include "olearn/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace olearn {

namespace {

std::string shape_str(const Tensor2D& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

} // namespace

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<std::vector<double>> tmp;
    for (const auto& r : rows) tmp.emplace_back(r);
    return from_rows(tmp);
}

Tensor2D Tensor2D::from_rows(const std::vector<std::vector<double>>& rows) {
    return stack_rows(rows);
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2D::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2D matmul_transposed(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_transposed: " + shape_str(a) + " vs " + shape_str(b));
    }
    Tensor2D out(a.rows(), b.rows());
    const std::size_t k = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto br = b.row(j);
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += ar[t] * br[t];
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor2D transposed_matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("transposed_matmul: " + shape_str(a) + " vs " + shape_str(b));
    }
    Tensor2D out(a.cols(), b.cols());
    for (std::size_t t = 0; t < a.rows(); ++t) {
        auto ar = a.row(t);
        auto br = b.row(t);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double s = ar[i];
            if (s == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += s * br[j];
        }
    }
    return out;
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape_str(a) + " vs " + shape_str(b));
    }
    Tensor2D out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t t = 0; t < a.cols(); ++t) {
            const double s = a(i, t);
            if (s == 0.0) continue;
            auto br = b.row(t);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += s * br[j];
        }
    }
    return out;
}

Tensor2D gather_rows(const Tensor2D& src, std::span<const std::size_t> indices) {
    Tensor2D out(indices.size(), src.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= src.rows()) throw DimensionError("gather_rows: index out of range");
        std::copy_n(src.row(indices[i]).begin(), src.cols(), out.row(i).begin());
    }
    return out;
}

Tensor2D stack_rows(std::span<const std::vector<double>> rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    Tensor2D out(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw DimensionError("stack_rows: ragged rows");
        std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
    }
    return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("squared_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace olearn
