#pragma once

#include <functional>
#include <stdexcept>

namespace reglearn {

using ScalarFunction = std::function<double(double)>;

struct ScalarMinimum {
    double argmin = 0.0;
    double value = 0.0;
    int evaluations = 0;
};

// 1/phi, the bracket contraction per golden-section step.
inline constexpr double kGoldenRatioConjugate = 0.6180339887498949;

// Golden-section search on [lo, hi]. Stops once the bracket is no wider than
// tol; the returned point is the best interior point evaluated. Uses at most
// ceil(log((hi-lo)/tol) / log(1/rho)) + 2 evaluations of f.
ScalarMinimum golden_section_min(const ScalarFunction& f, double lo, double hi, double tol);

class NoRootInBracket : public std::domain_error {
public:
    NoRootInBracket() : std::domain_error("no root in bracket") {}
};

// Bisection for a sign change of f on [lo, hi]; returns the midpoint of the
// final bracket (width <= tol, or the floating-point limit).
double bisection_root(const ScalarFunction& f, double lo, double hi, double tol);

}  // namespace reglearn
