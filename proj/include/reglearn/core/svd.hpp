#pragma once

#include "reglearn/core/dense.hpp"

#include <stdexcept>

namespace reglearn {

struct SvdFactorization {
    DenseMatrix u;           // m x r
    Vector singular_values;  // r, nonincreasing
    DenseMatrix v;           // n x r

    std::size_t rows() const { return u.rows(); }
    std::size_t cols() const { return v.rows(); }
    std::size_t rank_bound() const { return singular_values.size(); }

    // U^T b
    Vector project(std::span<const double> b) const { return u.apply_transpose(b); }
    DenseMatrix reconstruct() const;
};

class SvdNotConverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One-sided (Hestenes) Jacobi SVD, thin form with r = min(m, n).
// Columns of U belonging to zero singular values are completed to an
// orthonormal set.
SvdFactorization svd(const DenseMatrix& a, int max_sweeps = 80);

inline constexpr double kLstsqRtol = 1e-12;

// Minimum-norm least-squares solution, singular values below
// rtol * sigma_max treated as zero.
Vector lstsq(const SvdFactorization& f, std::span<const double> b, double rtol = kLstsqRtol);
Vector lstsq(const DenseMatrix& a, std::span<const double> b, double rtol = kLstsqRtol);

}  // namespace reglearn
