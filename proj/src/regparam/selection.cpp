#include "reglearn/regparam/selection.hpp"

#include "reglearn/core/scalar_search.hpp"

#include <cmath>
#include <stdexcept>

namespace reglearn {

std::string_view to_string(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::opt: return "opt";
        case SelectionMethod::dp: return "dp";
        case SelectionMethod::upre: return "upre";
        case SelectionMethod::gcv: return "gcv";
        case SelectionMethod::oed: return "oed";
        case SelectionMethod::kopt: return "kopt";
        case SelectionMethod::kdp: return "kdp";
    }
    return "unknown";
}

namespace {

void check_interval(LogInterval iv) {
    if (!(iv.lo < iv.hi)) throw std::invalid_argument("lambda search: interval requires lo < hi");
}

// Golden section on t = log10(lambda), then endpoint comparison. tie_rtol
// treats endpoint values within a relative margin of the minimum as ties.
SelectionResult minimize_log(const std::function<double(double)>& objective, LogInterval iv, double tol,
                             SelectionMethod method, double tie_rtol = 0.0) {
    check_interval(iv);
    int evals = 0;
    auto f = [&](double t) {
        ++evals;
        return objective(std::pow(10.0, t));
    };
    const ScalarMinimum inner = golden_section_min(f, iv.lo, iv.hi, tol);
    double best_t = inner.argmin;
    double best_f = inner.value;
    const double f_lo = f(iv.lo);
    const double f_hi = f(iv.hi);
    const double margin = tie_rtol * std::abs(best_f);
    if (f_lo <= best_f + margin) {
        best_t = iv.lo;
        best_f = f_lo;
    } else if (f_hi < best_f) {
        best_t = iv.hi;
        best_f = f_hi;
    }
    return {std::pow(10.0, best_t), best_f, evals, method, false};
}

}  // namespace

SelectionResult lambda_opt(const RegularizedSolve& solve, std::span<const double> x_true, LogInterval interval,
                           double tol) {
    return minimize_log([&](double lambda) { return norm2(subtract(solve(lambda), x_true)); }, interval, tol,
                        SelectionMethod::opt);
}

SelectionResult lambda_dp(const SvdFactorization& svd, std::span<const double> b, double sigma2,
                          LogInterval interval) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("lambda_dp: sigma2 must be positive");
    check_interval(interval);
    const TikhonovSpectrum spec(svd, b);
    const double target = static_cast<double>(b.size()) * sigma2;
    int evals = 0;
    auto f = [&](double t) {
        ++evals;
        return spec.residual_norm_sq(std::pow(10.0, t)) - target;
    };
    // The residual is nondecreasing in lambda: no root unless it straddles the target.
    if (f(interval.lo) > 0.0 || f(interval.hi) < 0.0) throw NoRootInBracket();
    const double t = bisection_root(f, interval.lo, interval.hi, 1e-15);
    const double lambda = std::pow(10.0, t);
    return {lambda, spec.residual_norm_sq(lambda), evals, SelectionMethod::dp, false};
}

double upre_objective(const TikhonovSpectrum& spec, double sigma2, double lambda) {
    return spec.residual_norm_sq(lambda) + 2.0 * sigma2 * spec.influence_trace(lambda);
}

SelectionResult lambda_upre(const SvdFactorization& svd, std::span<const double> b, double sigma2,
                            LogInterval interval, double tol) {
    if (sigma2 < 0.0) throw std::invalid_argument("lambda_upre: sigma2 must be nonnegative");
    const TikhonovSpectrum spec(svd, b);
    return minimize_log([&](double lambda) { return upre_objective(spec, sigma2, lambda); }, interval, tol,
                        SelectionMethod::upre);
}

double gcv_objective(const TikhonovSpectrum& spec, double lambda) {
    const double denom = spec.influence_complement(lambda);
    if (denom == 0.0) throw std::domain_error("gcv: zero denominator");
    return static_cast<double>(spec.rows()) * spec.residual_norm_sq(lambda) / (denom * denom);
}

SelectionResult lambda_gcv(const SvdFactorization& svd, std::span<const double> b, LogInterval interval,
                           double tol) {
    const TikhonovSpectrum spec(svd, b);
    return minimize_log([&](double lambda) { return gcv_objective(spec, lambda); }, interval, tol,
                        SelectionMethod::gcv, 1e-12);
}

SelectionResult lambda_oed(const IndexedSolve& solve, std::span<const Vector> truths, LogInterval interval,
                           double tol) {
    if (truths.empty()) throw std::invalid_argument("lambda_oed: need at least one training pair");
    const double scale = 1.0 / (2.0 * static_cast<double>(truths.size()));
    auto mean_error = [&](double lambda) {
        double s = 0.0;
        for (std::size_t j = 0; j < truths.size(); ++j) {
            const double e = norm2(subtract(solve(lambda, j), truths[j]));
            s += e * e;
        }
        return scale * s;
    };
    return minimize_log(mean_error, interval, tol, SelectionMethod::oed);
}

SelectionResult k_opt_from_errors(std::span<const double> errors) {
    if (errors.empty()) throw std::invalid_argument("k_opt: empty history");
    std::size_t best = 0;
    for (std::size_t k = 1; k < errors.size(); ++k)
        if (errors[k] < errors[best]) best = k;
    return {static_cast<double>(best + 1), errors[best], static_cast<int>(errors.size()), SelectionMethod::kopt,
            false};
}

SelectionResult k_opt(const IterateHistory& history, std::span<const double> x_true) {
    Vector errors(history.size());
    for (std::size_t k = 0; k < history.size(); ++k) errors[k] = norm2(subtract(history.iterates[k], x_true));
    return k_opt_from_errors(errors);
}

SelectionResult k_dp_from_residuals(std::span<const double> relative_residuals, double level, double safety) {
    if (relative_residuals.empty()) throw std::invalid_argument("k_dp: empty history");
    if (level < 0.0) throw std::invalid_argument("k_dp: level must be nonnegative");
    if (safety < 1.0) throw std::invalid_argument("k_dp: safety must be at least 1");
    const double threshold = safety * level;
    for (std::size_t k = 0; k < relative_residuals.size(); ++k)
        if (relative_residuals[k] <= threshold)
            return {static_cast<double>(k + 1), relative_residuals[k], static_cast<int>(k + 1),
                    SelectionMethod::kdp, false};
    const std::size_t last = relative_residuals.size() - 1;
    return {static_cast<double>(last + 1), relative_residuals[last], static_cast<int>(last + 1),
            SelectionMethod::kdp, true};
}

SelectionResult k_dp(const IterateHistory& history, std::span<const double> b, double level, double safety) {
    const double nb = norm2(b);
    Vector rel(history.residual_norms.size());
    for (std::size_t k = 0; k < rel.size(); ++k) rel[k] = nb > 0.0 ? history.residual_norms[k] / nb : 0.0;
    return k_dp_from_residuals(rel, level, safety);
}

}  // namespace reglearn
