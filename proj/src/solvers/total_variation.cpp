#include "reglearn/solvers/total_variation.hpp"

#include <cmath>
#include <string>

namespace reglearn {

namespace {

class DifferenceImpl final : public OperatorImpl {
public:
    DifferenceImpl(std::size_t h, std::size_t w) : h_(h), w_(w) {}
    std::size_t rows() const override { return 2 * h_ * w_; }
    std::size_t cols() const override { return h_ * w_; }

    Vector apply(std::span<const double> x) const override {
        const std::size_t n = h_ * w_;
        Vector out(2 * n, 0.0);
        for (std::size_t i = 0; i < h_; ++i)
            for (std::size_t j = 0; j < w_; ++j) {
                const std::size_t k = i * w_ + j;
                if (j + 1 < w_) out[k] = x[k + 1] - x[k];
                if (i + 1 < h_) out[n + k] = x[k + w_] - x[k];
            }
        return out;
    }

    Vector apply_transpose(std::span<const double> y) const override {
        const std::size_t n = h_ * w_;
        Vector out(n, 0.0);
        for (std::size_t i = 0; i < h_; ++i)
            for (std::size_t j = 0; j < w_; ++j) {
                const std::size_t k = i * w_ + j;
                if (j + 1 < w_) {
                    out[k + 1] += y[k];
                    out[k] -= y[k];
                }
                if (i + 1 < h_) {
                    out[k + w_] += y[n + k];
                    out[k] -= y[n + k];
                }
            }
        return out;
    }

private:
    std::size_t h_;
    std::size_t w_;
};

}  // namespace

LinearOperator difference_operator(std::size_t height, std::size_t width) {
    if (height < 2 || width < 2) throw std::invalid_argument("difference_operator: need h, w >= 2");
    return LinearOperator(OperatorKind::difference, std::make_shared<DifferenceImpl>(height, width));
}

double anisotropic_tv(std::span<const double> x, ImageShape shape) {
    return norm1(difference_operator(shape.height, shape.width).apply(x));
}

double tv_objective(const LinearOperator& a, std::span<const double> b, std::span<const double> x,
                    double lambda, ImageShape shape) {
    const Vector r = subtract(a.apply(x), b);
    const double rn = norm2(r);
    return rn * rn + lambda * anisotropic_tv(x, shape);
}

void SplitBregmanOptions::validate() const {
    if (mu && !(*mu > 0.0)) throw std::invalid_argument("SplitBregmanOptions: mu must be positive");
    if (outer_iters <= 0 || inner_cg_iters <= 0 || !(inner_cg_tol > 0.0) || !(convergence_tol > 0.0))
        throw std::invalid_argument("SplitBregmanOptions: all settings must be positive");
}

CgBreakdown::CgBreakdown(int outer, int inner)
    : std::runtime_error("split-Bregman: CG breakdown at outer iteration " + std::to_string(outer) +
                         ", inner iteration " + std::to_string(inner)),
      outer_iteration(outer), inner_iteration(inner) {}

double soft_threshold(double v, double t) {
    const double m = std::abs(v) - t;
    return m > 0.0 ? std::copysign(m, v) : 0.0;
}

SplitBregmanResult tv_solve_split_bregman(const LinearOperator& a, std::span<const double> b,
                                          double lambda, ImageShape shape,
                                          const SplitBregmanOptions& opts) {
    opts.validate();
    if (!(lambda > 0.0)) throw std::invalid_argument("tv_solve_split_bregman: lambda must be positive");
    if (a.cols() != shape.size()) throw std::invalid_argument("tv_solve_split_bregman: shape mismatch");
    if (b.size() != a.rows()) throw std::invalid_argument("tv_solve_split_bregman: dimension mismatch");

    const double mu = opts.mu.value_or(2.0 * lambda);
    const double threshold = lambda / (2.0 * mu);
    const LinearOperator d_op = difference_operator(shape.height, shape.width);
    const std::size_t n = shape.size();

    auto normal_apply = [&](std::span<const double> v) {
        Vector out = a.apply_transpose(a.apply(v));
        const Vector dd = d_op.apply_transpose(d_op.apply(v));
        for (std::size_t i = 0; i < n; ++i) out[i] += mu * dd[i];
        return out;
    };

    const Vector atb = a.apply_transpose(b);
    SplitBregmanResult res;
    res.x = atb;
    res.d.assign(2 * n, 0.0);
    res.w.assign(2 * n, 0.0);

    Vector r(n), p(n), q(n), rhs(n);
    for (int outer = 1; outer <= opts.outer_iters; ++outer) {
        Vector dw(2 * n);
        for (std::size_t i = 0; i < 2 * n; ++i) dw[i] = res.d[i] - res.w[i];
        const Vector dtdw = d_op.apply_transpose(dw);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = atb[i] + mu * dtdw[i];

        const Vector x_prev = res.x;
        // Conjugate gradients, warm started at the current x.
        const Vector ax = normal_apply(res.x);
        for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ax[i];
        p = r;
        double rr = dot(r, r);
        const double stop = opts.inner_cg_tol * norm2(rhs);
        for (int it = 1; it <= opts.inner_cg_iters; ++it) {
            if (!std::isfinite(rr)) throw CgBreakdown(outer, it);
            if (std::sqrt(rr) <= stop) break;
            q = normal_apply(p);
            const double pq = dot(p, q);
            if (!(pq > 0.0) || !std::isfinite(pq)) throw CgBreakdown(outer, it);
            const double alpha = rr / pq;
            axpy(alpha, p, res.x);
            axpy(-alpha, q, r);
            const double rr_new = dot(r, r);
            const double beta = rr_new / rr;
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
            rr = rr_new;
        }

        const Vector dx = d_op.apply(res.x);
        for (std::size_t i = 0; i < 2 * n; ++i) {
            const double target = dx[i] + res.w[i];
            res.d[i] = soft_threshold(target, threshold);
            res.w[i] = target - res.d[i];
        }
        res.outer_iterations = outer;

        const double change = norm2(subtract(res.x, x_prev));
        const double scale = norm2(res.x);
        if (change <= opts.convergence_tol * (scale > 0.0 ? scale : 1.0)) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace reglearn
