#pragma once

// ---------------------------------------------------------------------------
// Tikhonov regularization through the SVD:
//
//     x(lambda) = argmin ||A x - b||^2 + lambda^2 ||x||^2
//               = sum_i sigma_i / (sigma_i^2 + lambda^2) (u_i^T b) v_i
//
// Note the penalty weight is lambda^2 (total variation uses lambda).
// ---------------------------------------------------------------------------

#include "reglearn/core/svd.hpp"

namespace reglearn {

// Spectral data for one right-hand side: U^T b and the part of b outside
// range(U). All residual/trace quantities used by the parameter-choice
// rules are O(r) evaluations on this.
class TikhonovSpectrum {
public:
    TikhonovSpectrum(const SvdFactorization& svd, std::span<const double> b);

    const SvdFactorization& svd() const { return *svd_; }
    std::size_t rows() const { return svd_->rows(); }

    // lambda == 0 falls back to the truncated minimum-norm solution.
    Vector solve(double lambda) const;

    // ||A x(lambda) - b||^2 = sum_i (lambda^2/(s_i^2+lambda^2))^2 beta_i^2 + ||b_perp||^2
    double residual_norm_sq(double lambda) const;
    // sum_i s_i^2 / (s_i^2 + lambda^2), the trace of the influence matrix.
    double influence_trace(double lambda) const;
    // m - influence_trace, evaluated without cancellation.
    double influence_complement(double lambda) const;

private:
    const SvdFactorization* svd_;
    Vector beta_;
    double outside_sq_ = 0.0;
};

Vector tikhonov_solve(const SvdFactorization& svd, std::span<const double> b, double lambda);

}  // namespace reglearn
