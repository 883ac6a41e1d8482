#pragma once

#include "reglearn/nnet/network.hpp"

namespace reglearn {

struct GradcheckOptions {
    std::size_t coordinates = 200;
    double epsilon = 1e-5;
    std::uint64_t seed = 0;
    Mode mode = Mode::train;
    // Relative errors are measured against max(|analytic|, |numeric|, floor).
    double floor = 1e-6;
};

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // perturbation crossed a ReLU or maxpool kink
    std::size_t worst_index = 0;
};

// Compares backward() against central differences of the scalar
// L(theta) = sum_h <R_h, output_h(theta)> with fixed random R. Coordinates are
// spread round-robin over the parameterized layers, and kink crossings are
// replaced by fresh draws so that `coordinates` comparisons are made. Dropout
// masks are frozen by reseeding the stream for every evaluation.
GradcheckResult gradient_check(const Network& net, const Vector& theta, const Vector& buffers, const Tensor& input,
                               const GradcheckOptions& options = {});

}  // namespace reglearn
