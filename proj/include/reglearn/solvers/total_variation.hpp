#pragma once

// ---------------------------------------------------------------------------
// Anisotropic total variation and its split-Bregman solver.
//
//     minimize ||A x - b||^2 + lambda ||D x||_1
//
// D stacks forward differences along x (columns) and y (rows); the far
// boundary rows of each block are zero. The TV weight is lambda itself.
// ---------------------------------------------------------------------------

#include "reglearn/forward/linear_operator.hpp"

#include <optional>
#include <stdexcept>

namespace reglearn {

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t size() const { return height * width; }
};

// Output layout: [x-differences (h*w) | y-differences (h*w)].
LinearOperator difference_operator(std::size_t height, std::size_t width);

double anisotropic_tv(std::span<const double> x, ImageShape shape);

// ||A x - b||^2 + lambda TV(x)
double tv_objective(const LinearOperator& a, std::span<const double> b, std::span<const double> x,
                    double lambda, ImageShape shape);

struct SplitBregmanOptions {
    std::optional<double> mu;  // defaults to 2 * lambda
    int outer_iters = 100;
    int inner_cg_iters = 30;
    double inner_cg_tol = 1e-6;
    double convergence_tol = 1e-5;

    void validate() const;
};

struct SplitBregmanResult {
    Vector x;
    Vector d;  // split variable, ~ D x
    Vector w;  // Bregman variable
    int outer_iterations = 0;
    bool converged = false;
};

class CgBreakdown : public std::runtime_error {
public:
    CgBreakdown(int outer, int inner);
    int outer_iteration;
    int inner_iteration;
};

// Starts from x = A^T b, d = w = 0. Each outer iteration:
//   x <- CG solve of (A^T A + mu D^T D) x = A^T b + mu D^T (d - w), warm started
//   d <- shrink(D x + w, lambda / (2 mu))
//   w <- w + D x - d
SplitBregmanResult tv_solve_split_bregman(const LinearOperator& a, std::span<const double> b,
                                          double lambda, ImageShape shape,
                                          const SplitBregmanOptions& opts = {});

double soft_threshold(double v, double t);

}  // namespace reglearn
