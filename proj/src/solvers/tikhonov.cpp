#include "reglearn/solvers/tikhonov.hpp"

#include <stdexcept>

namespace reglearn {

TikhonovSpectrum::TikhonovSpectrum(const SvdFactorization& svd, std::span<const double> b)
    : svd_(&svd) {
    if (b.size() != svd.rows()) throw std::invalid_argument("TikhonovSpectrum: dimension mismatch");
    beta_ = svd.project(b);
    // b_perp = b - U U^T b, formed explicitly for accuracy.
    Vector perp(b.begin(), b.end());
    for (std::size_t k = 0; k < beta_.size(); ++k)
        for (std::size_t i = 0; i < perp.size(); ++i) perp[i] -= beta_[k] * svd.u(i, k);
    const double p = norm2(perp);
    outside_sq_ = p * p;
}

Vector TikhonovSpectrum::solve(double lambda) const {
    if (lambda < 0.0) throw std::invalid_argument("tikhonov_solve: lambda must be nonnegative");
    const auto& s = svd_->singular_values;
    const double cutoff = kLstsqRtol * (s.empty() ? 0.0 : s[0]);
    const double l2 = lambda * lambda;
    Vector x(svd_->cols(), 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) {
        double filter;
        if (lambda == 0.0) {
            if (s[k] <= cutoff || s[k] == 0.0) continue;
            filter = 1.0 / s[k];
        } else {
            filter = s[k] / (s[k] * s[k] + l2);
        }
        const double coef = filter * beta_[k];
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += coef * svd_->v(j, k);
    }
    return x;
}

double TikhonovSpectrum::residual_norm_sq(double lambda) const {
    const auto& s = svd_->singular_values;
    const double l2 = lambda * lambda;
    double r = outside_sq_;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double denom = s[k] * s[k] + l2;
        const double f = denom > 0.0 ? l2 / denom : 1.0;
        r += f * f * beta_[k] * beta_[k];
    }
    return r;
}

double TikhonovSpectrum::influence_trace(double lambda) const {
    const auto& s = svd_->singular_values;
    const double l2 = lambda * lambda;
    double t = 0.0;
    for (double sk : s) {
        const double denom = sk * sk + l2;
        if (denom > 0.0) t += sk * sk / denom;
    }
    return t;
}

double TikhonovSpectrum::influence_complement(double lambda) const {
    const auto& s = svd_->singular_values;
    const double l2 = lambda * lambda;
    double t = static_cast<double>(rows() - s.size());
    for (double sk : s) {
        const double denom = sk * sk + l2;
        t += denom > 0.0 ? l2 / denom : 1.0;
    }
    return t;
}

Vector tikhonov_solve(const SvdFactorization& svd, std::span<const double> b, double lambda) {
    return TikhonovSpectrum(svd, b).solve(lambda);
}

}  // namespace reglearn
