#include "reglearn/solvers/rrgmres.hpp"

#include <cmath>
#include <stdexcept>

namespace reglearn {

IterateHistory rrgmres(const LinearOperator& a, std::span<const double> b, std::size_t k_max,
                       std::optional<std::span<const double>> x_true) {
    if (a.rows() != a.cols()) throw std::invalid_argument("rrgmres: operator must be square");
    if (k_max < 1) throw std::invalid_argument("rrgmres: k_max must be at least 1");
    if (b.size() != a.rows()) throw std::invalid_argument("rrgmres: dimension mismatch");
    if (x_true && x_true->size() != a.cols()) throw std::invalid_argument("rrgmres: x_true dimension mismatch");

    const std::size_t n = b.size();
    IterateHistory hist;
    Vector ab = a.apply(b);
    const double ab_norm = norm2(ab);
    if (ab_norm == 0.0) throw std::invalid_argument("rrgmres: A b is zero");
    for (double& v : ab) v /= ab_norm;
    hist.first_basis_vector = ab;

    const double truth_norm = x_true ? norm2(*x_true) : 0.0;

    std::vector<Vector> basis{std::move(ab)};
    std::vector<Vector> hess;  // column k: H(0..k+1, k)
    std::vector<Vector> rcols;  // column k of R (rotated H), length k+1
    std::vector<double> cs, sn;
    Vector g{dot(basis[0], b)};  // rotated V^T b

    for (std::size_t k = 0; k < k_max; ++k) {
        // Arnoldi step with two passes of modified Gram-Schmidt.
        Vector w = a.apply(basis[k]);
        const double w_in = norm2(w);
        Vector h(k + 2, 0.0);
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t j = 0; j <= k; ++j) {
                const double c = dot(basis[j], w);
                h[j] += c;
                axpy(-c, basis[j], w);
            }
        const double h_next = norm2(w);
        const bool breakdown = h_next < 1e-14 * (w_in > 0.0 ? w_in : 1.0);
        h[k + 1] = breakdown ? 0.0 : h_next;
        hess.push_back(h);

        if (!breakdown) {
            for (double& v : w) v /= h_next;
            basis.push_back(std::move(w));
            g.push_back(dot(basis[k + 1], b));
        } else {
            g.push_back(0.0);
        }

        // Rotate the new column and the new entry of g.
        Vector r = h;
        for (std::size_t j = 0; j < k; ++j) {
            const double t = cs[j] * r[j] + sn[j] * r[j + 1];
            r[j + 1] = -sn[j] * r[j] + cs[j] * r[j + 1];
            r[j] = t;
        }
        const double rho = std::hypot(r[k], r[k + 1]);
        const double c = rho > 0.0 ? r[k] / rho : 1.0;
        const double s = rho > 0.0 ? r[k + 1] / rho : 0.0;
        cs.push_back(c);
        sn.push_back(s);
        r[k] = rho;
        r[k + 1] = 0.0;
        r.resize(k + 1);
        rcols.push_back(std::move(r));
        const double gk = c * g[k] + s * g[k + 1];
        g[k + 1] = -s * g[k] + c * g[k + 1];
        g[k] = gk;

        // Back substitution for y, then x = V_k y.
        const std::size_t dim = k + 1;
        Vector y(dim, 0.0);
        for (std::size_t i = dim; i-- > 0;) {
            double v = g[i];
            for (std::size_t j = i + 1; j < dim; ++j) v -= rcols[j][i] * y[j];
            y[i] = rcols[i][i] != 0.0 ? v / rcols[i][i] : 0.0;
        }
        Vector x(n, 0.0);
        for (std::size_t j = 0; j < dim; ++j) axpy(y[j], basis[j], x);

        // A x = V_{k+1} H y.
        Vector ax(n, 0.0);
        const std::size_t out_dim = std::min(dim + 1, basis.size());
        for (std::size_t i = 0; i < out_dim; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < dim; ++j)
                if (i < hess[j].size()) z += hess[j][i] * y[j];
            axpy(z, basis[i], ax);
        }
        hist.residual_norms.push_back(norm2(subtract(ax, b)));
        if (x_true) hist.relative_errors.push_back(norm2(subtract(x, *x_true)) / truth_norm);
        hist.iterates.push_back(std::move(x));

        if (breakdown) {
            hist.breakdown = true;
            break;
        }
    }
    return hist;
}

}  // namespace reglearn
