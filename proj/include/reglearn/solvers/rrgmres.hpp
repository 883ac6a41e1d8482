#pragma once

// ---------------------------------------------------------------------------
// Range-restricted GMRES: x_k minimizes ||A x - b|| over
// span{A b, A^2 b, ..., A^k b}. Needs only A x products, never A^T.
// ---------------------------------------------------------------------------

#include "reglearn/forward/linear_operator.hpp"

#include <optional>

namespace reglearn {

struct IterateHistory {
    std::vector<Vector> iterates;   // x_1 .. x_K
    Vector residual_norms;          // ||A x_k - b||
    Vector relative_errors;         // ||x_k - x_true|| / ||x_true||, empty without a truth
    Vector first_basis_vector;      // A b / ||A b||
    bool breakdown = false;

    std::size_t size() const { return iterates.size(); }
};

IterateHistory rrgmres(const LinearOperator& a, std::span<const double> b, std::size_t k_max,
                       std::optional<std::span<const double>> x_true = std::nullopt);

}  // namespace reglearn
