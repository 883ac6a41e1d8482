#pragma once

// ---------------------------------------------------------------------------
// Dense row-major matrices and the small set of BLAS-1/2 helpers the rest of
// the library builds on. Vectors are plain std::vector<double>.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <span>
#include <vector>

namespace reglearn {

using Vector = std::vector<double>;

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    Vector column(std::size_t j) const;
    DenseMatrix transpose() const;

    // y = A x and y = A^T x. apply() is row-parallel (OpenMP).
    Vector apply(std::span<const double> x) const;
    Vector apply_transpose(std::span<const double> x) const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix gram(const DenseMatrix& a);  // A^T A

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm1(std::span<const double> a);
double frobenius_norm(const DenseMatrix& a);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector subtract(std::span<const double> a, std::span<const double> b);

// Solves the symmetric positive definite system S x = rhs by Cholesky.
// Throws std::runtime_error if S is not numerically positive definite.
Vector cholesky_solve(DenseMatrix s, Vector rhs);

}  // namespace reglearn
