#include "reglearn/core/scalar_search.hpp"

#include <cmath>

namespace reglearn {

ScalarMinimum golden_section_min(const ScalarFunction& f, double lo, double hi, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("golden_section_min: tol must be positive");
    if (!(lo < hi)) throw std::invalid_argument("golden_section_min: requires lo < hi");

    constexpr double rho = kGoldenRatioConjugate;
    const double ratio = (hi - lo) / tol;
    const int steps = ratio > 1.0 ? static_cast<int>(std::ceil(std::log(ratio) / std::log(1.0 / rho))) : 0;

    double a = lo;
    double b = hi;
    double c = b - rho * (b - a);
    double d = a + rho * (b - a);
    double fc = f(c);
    double fd = f(d);
    int evaluations = 2;
    for (int step = 0; step < steps && (b - a) > tol; ++step) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - rho * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + rho * (b - a);
            fd = f(d);
        }
        ++evaluations;
    }
    if (fc <= fd) return {c, fc, evaluations};
    return {d, fd, evaluations};
}

double bisection_root(const ScalarFunction& f, double lo, double hi, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("bisection_root: tol must be positive");
    if (!(lo < hi)) throw std::invalid_argument("bisection_root: requires lo < hi");
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (std::signbit(flo) == std::signbit(fhi)) throw NoRootInBracket();
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if (std::signbit(fm) == std::signbit(flo)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace reglearn
