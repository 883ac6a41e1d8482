#pragma once

#include "reglearn/core/dense.hpp"

#include <span>

namespace reglearn {

// Single linear output layer t ~ w^T b + y.
struct ElmModel {
    Vector w;
    double y = 0.0;

    double predict(std::span<const double> b) const;
};

// Minimum-norm least-squares solution of [B | 1] (w; y) = targets, where the
// rows of B are the training inputs.
ElmModel elm_fit(const DenseMatrix& inputs, std::span<const double> targets);

}  // namespace reglearn
