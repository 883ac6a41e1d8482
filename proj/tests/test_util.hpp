#pragma once

#include "reglearn/core/dense.hpp"
#include "reglearn/core/rng.hpp"

#include <cmath>

namespace reglearn::testing {

inline DenseMatrix random_matrix(RngStream& s, std::size_t m, std::size_t n) {
    DenseMatrix a(m, n);
    for (double& v : a.data()) v = rng_normal(s, 0.0, 1.0);
    return a;
}

inline Vector random_vector(RngStream& s, std::size_t n) {
    Vector v(n);
    for (double& x : v) x = rng_normal(s, 0.0, 1.0);
    return v;
}

inline double rel_diff(std::span<const double> a, std::span<const double> b) {
    const double d = norm2(subtract(a, b));
    const double s = norm2(b);
    return s > 0.0 ? d / s : d;
}

// Normal equations (A^T A + l2 I) x = A^T b via Cholesky; independent of the SVD path.
inline Vector normal_equations_solve(const DenseMatrix& a, std::span<const double> b, double l2) {
    DenseMatrix g = gram(a);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += l2;
    return cholesky_solve(std::move(g), a.apply_transpose(b));
}

}  // namespace reglearn::testing
