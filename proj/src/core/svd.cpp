#include "reglearn/core/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace reglearn {

namespace {

// Columns stored contiguously; rotations touch two columns at a time.
struct ColumnSet {
    std::size_t length = 0;
    std::vector<Vector> cols;
};

double col_dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void rotate(Vector& p, Vector& q, double c, double s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = p[i];
        const double b = q[i];
        p[i] = c * a - s * b;
        q[i] = s * a + c * b;
    }
}

// Hestenes sweep on a tall (m >= n) matrix.
SvdFactorization jacobi_tall(const DenseMatrix& a, int max_sweeps) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    std::vector<Vector> w(n, Vector(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) w[j][i] = a(i, j);
    std::vector<Vector> v(n, Vector(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

    constexpr double tol = 1e-15;
    const double tiny = std::numeric_limits<double>::min();
    bool converged = (n < 2);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = col_dot(w[p], w[p]);
                const double beta = col_dot(w[q], w[q]);
                const double gamma = col_dot(w[p], w[q]);
                if (alpha <= tiny || beta <= tiny) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                rotate(w[p], w[q], c, s);
                rotate(v[p], v[q], c, s);
            }
        }
        converged = !rotated;
    }
    if (!converged)
        throw SvdNotConverged("svd: one-sided Jacobi did not converge after " +
                              std::to_string(max_sweeps) + " sweeps");

    Vector sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(col_dot(w[j], w[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdFactorization f{DenseMatrix(m, n), Vector(n), DenseMatrix(n, n)};
    const double smax = n ? sigma[order[0]] : 0.0;
    const double negligible = smax * static_cast<double>(std::max(m, n)) *
                              std::numeric_limits<double>::epsilon();
    std::vector<bool> needs_completion(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        f.singular_values[k] = sigma[j];
        for (std::size_t i = 0; i < n; ++i) f.v(i, k) = v[j][i];
        if (sigma[j] > negligible && sigma[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) f.u(i, k) = w[j][i] / sigma[j];
        } else {
            needs_completion[k] = true;
        }
    }

    // Complete U with unit vectors orthogonalized against the columns so far.
    std::size_t candidate = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!needs_completion[k]) continue;
        for (; candidate < m; ++candidate) {
            Vector e(m, 0.0);
            e[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (needs_completion[c] && c >= k) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += f.u(i, c) * e[i];
                    for (std::size_t i = 0; i < m; ++i) e[i] -= proj * f.u(i, c);
                }
            }
            const double nrm = norm2(e);
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) f.u(i, k) = e[i] / nrm;
                ++candidate;
                break;
            }
        }
        needs_completion[k] = false;
    }
    return f;
}

}  // namespace

DenseMatrix SvdFactorization::reconstruct() const {
    DenseMatrix out(u.rows(), v.rows());
    for (std::size_t k = 0; k < singular_values.size(); ++k) {
        const double s = singular_values[k];
        if (s == 0.0) continue;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double uis = u(i, k) * s;
            for (std::size_t j = 0; j < v.rows(); ++j) out(i, j) += uis * v(j, k);
        }
    }
    return out;
}

SvdFactorization svd(const DenseMatrix& a, int max_sweeps) {
    if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("svd: empty matrix");
    if (!a.all_finite()) throw std::invalid_argument("svd: non-finite entries");
    if (a.rows() >= a.cols()) return jacobi_tall(a, max_sweeps);
    SvdFactorization t = jacobi_tall(a.transpose(), max_sweeps);
    return SvdFactorization{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
}

Vector lstsq(const SvdFactorization& f, std::span<const double> b, double rtol) {
    if (b.size() != f.rows()) throw std::invalid_argument("lstsq: dimension mismatch");
    const Vector beta = f.project(b);
    const double cutoff = rtol * (f.singular_values.empty() ? 0.0 : f.singular_values[0]);
    Vector x(f.cols(), 0.0);
    for (std::size_t k = 0; k < f.singular_values.size(); ++k) {
        const double s = f.singular_values[k];
        if (s <= cutoff || s == 0.0) continue;
        const double coef = beta[k] / s;
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += coef * f.v(j, k);
    }
    return x;
}

Vector lstsq(const DenseMatrix& a, std::span<const double> b, double rtol) {
    if (b.size() != a.rows()) throw std::invalid_argument("lstsq: dimension mismatch");
    return lstsq(svd(a), b, rtol);
}

}  // namespace reglearn
