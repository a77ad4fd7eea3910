#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace olearn {

/// Dense row-major matrix of doubles.
///
/// Used for inputs, activations, parameters and gradients alike. A 1 x n
/// tensor doubles as a row vector (biases, single samples).
class Tensor2D {
public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2D from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor2D& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a * b^T. Shapes (r x k) and (c x k) give (r x c).
Tensor2D matmul_transposed(const Tensor2D& a, const Tensor2D& b);

/// a^T * b. Shapes (k x r) and (k x c) give (r x c).
Tensor2D transposed_matmul(const Tensor2D& a, const Tensor2D& b);

/// a * b. Shapes (r x k) and (k x c) give (r x c).
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);

/// Stack the given rows of `src` into a new tensor.
Tensor2D gather_rows(const Tensor2D& src, std::span<const std::size_t> indices);

/// Build a tensor from equally sized row vectors.
Tensor2D stack_rows(std::span<const std::vector<double>> rows);

double squared_distance(std::span<const double> a, std::span<const double> b);

} // namespace olearn
