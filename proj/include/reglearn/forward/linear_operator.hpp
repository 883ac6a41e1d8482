#pragma once

// ---------------------------------------------------------------------------
// LinearOperator: the forward map A of b = A x + noise.
//
// Operators are immutable after construction; copies share the underlying
// implementation and are safe to use from several threads at once.
// ---------------------------------------------------------------------------

#include "reglearn/core/dense.hpp"

#include <memory>
#include <span>
#include <string_view>

namespace reglearn {

enum class OperatorKind { dense, heat, blur2d, radon, diffusion, difference };

std::string_view to_string(OperatorKind kind);

class OperatorImpl {
public:
    virtual ~OperatorImpl() = default;
    virtual std::size_t rows() const = 0;
    virtual std::size_t cols() const = 0;
    virtual Vector apply(std::span<const double> x) const = 0;
    virtual Vector apply_transpose(std::span<const double> y) const = 0;
    // Dense form when the implementation already stores one.
    virtual const DenseMatrix* dense() const { return nullptr; }
};

class LinearOperator {
public:
    LinearOperator(OperatorKind kind, std::shared_ptr<const OperatorImpl> impl)
        : kind_(kind), impl_(std::move(impl)) {}

    static LinearOperator from_dense(DenseMatrix a, OperatorKind kind = OperatorKind::dense);

    OperatorKind kind() const { return kind_; }
    std::size_t rows() const { return impl_->rows(); }
    std::size_t cols() const { return impl_->cols(); }

    Vector apply(std::span<const double> x) const;
    Vector apply_transpose(std::span<const double> y) const;

    // Dense m x n matrix, built column by column from apply() unless the
    // implementation stores one.
    DenseMatrix materialize() const;

    // A dense-backed copy with the same kind; cheap to apply repeatedly.
    LinearOperator materialized() const;

private:
    OperatorKind kind_;
    std::shared_ptr<const OperatorImpl> impl_;
};

// Compressed sparse rows; used by the ray-tracing projector.
struct SparseRows {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_start;  // rows + 1 offsets
    std::vector<std::size_t> col_index;
    std::vector<double> values;
};

LinearOperator from_sparse(SparseRows a, OperatorKind kind);

}  // namespace reglearn
