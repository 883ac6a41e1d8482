#pragma once

// ---------------------------------------------------------------------------
// Parameter-choice rules.
//
// All lambda searches run over log10(lambda) in a closed interval. After
// golden-section search the interval endpoints are also evaluated; an
// endpoint that ties the interior minimum wins, the lower one first, so
// monotone and flat objectives resolve deterministically to a bound.
// ---------------------------------------------------------------------------

#include "reglearn/core/scalar_search.hpp"
#include "reglearn/solvers/rrgmres.hpp"
#include "reglearn/solvers/tikhonov.hpp"

#include <functional>
#include <string_view>

namespace reglearn {

enum class SelectionMethod { opt, dp, upre, gcv, oed, kopt, kdp };

std::string_view to_string(SelectionMethod m);

struct SelectionResult {
    double value = 0.0;  // lambda, or k for stopping rules
    double objective_at_value = 0.0;
    int evaluations = 0;
    SelectionMethod method = SelectionMethod::opt;
    bool failed = false;  // discrepancy stopping: no iterate met the threshold
};

struct LogInterval {
    double lo = -6.0;
    double hi = 2.0;
};

inline constexpr double kDefaultLogTol = 1e-6;

using RegularizedSolve = std::function<Vector(double lambda)>;

// Minimizes lambda -> ||x(lambda) - x_true|| over log10(lambda).
SelectionResult lambda_opt(const RegularizedSolve& solve, std::span<const double> x_true,
                           LogInterval interval = {}, double tol = kDefaultLogTol);

// Root of ||A x(lambda) - b||^2 - m sigma2 by bisection in log10(lambda).
// Throws NoRootInBracket when m sigma2 is not attained on the interval.
SelectionResult lambda_dp(const SvdFactorization& svd, std::span<const double> b, double sigma2,
                          LogInterval interval = {});

// U(lambda) = ||A x(lambda) - b||^2 + 2 sigma2 trace(A Z(lambda)).
double upre_objective(const TikhonovSpectrum& spec, double sigma2, double lambda);
SelectionResult lambda_upre(const SvdFactorization& svd, std::span<const double> b, double sigma2,
                            LogInterval interval = {}, double tol = kDefaultLogTol);

// G(lambda) = m ||A x(lambda) - b||^2 / (m - trace(A Z(lambda)))^2.
double gcv_objective(const TikhonovSpectrum& spec, double lambda);
SelectionResult lambda_gcv(const SvdFactorization& svd, std::span<const double> b,
                           LogInterval interval = {}, double tol = kDefaultLogTol);

// One lambda for a whole training set: minimizes (1/2J) sum_j ||x_j(lambda) - x_true_j||^2.
using IndexedSolve = std::function<Vector(double lambda, std::size_t sample)>;
SelectionResult lambda_oed(const IndexedSolve& solve, std::span<const Vector> truths,
                           LogInterval interval = {}, double tol = kDefaultLogTol);

// Stopping iterations are 1-based.
SelectionResult k_opt_from_errors(std::span<const double> errors);
SelectionResult k_opt(const IterateHistory& history, std::span<const double> x_true);

// Smallest k with ||b - A x_k|| / ||b|| <= safety * level; otherwise the last
// k with failed = true.
SelectionResult k_dp_from_residuals(std::span<const double> relative_residuals, double level, double safety);
SelectionResult k_dp(const IterateHistory& history, std::span<const double> b, double level,
                     double safety = 1.01);

}  // namespace reglearn
