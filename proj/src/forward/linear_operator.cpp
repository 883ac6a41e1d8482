#include "reglearn/forward/linear_operator.hpp"

#include <stdexcept>

namespace reglearn {

std::string_view to_string(OperatorKind kind) {
    switch (kind) {
        case OperatorKind::dense: return "dense";
        case OperatorKind::heat: return "heat";
        case OperatorKind::blur2d: return "blur2d";
        case OperatorKind::radon: return "radon";
        case OperatorKind::diffusion: return "diffusion";
        case OperatorKind::difference: return "difference";
    }
    return "unknown";
}

namespace {

class DenseImpl final : public OperatorImpl {
public:
    explicit DenseImpl(DenseMatrix a) : a_(std::move(a)) {}
    std::size_t rows() const override { return a_.rows(); }
    std::size_t cols() const override { return a_.cols(); }
    Vector apply(std::span<const double> x) const override { return a_.apply(x); }
    Vector apply_transpose(std::span<const double> y) const override { return a_.apply_transpose(y); }
    const DenseMatrix* dense() const override { return &a_; }

private:
    DenseMatrix a_;
};

class SparseImpl final : public OperatorImpl {
public:
    explicit SparseImpl(SparseRows a) : a_(std::move(a)) {
        if (a_.row_start.size() != a_.rows + 1 || a_.col_index.size() != a_.values.size())
            throw std::invalid_argument("SparseRows: inconsistent storage");
    }
    std::size_t rows() const override { return a_.rows; }
    std::size_t cols() const override { return a_.cols; }

    Vector apply(std::span<const double> x) const override {
        if (x.size() != a_.cols) throw std::invalid_argument("sparse apply: dimension mismatch");
        Vector y(a_.rows);
        const long long m = static_cast<long long>(a_.rows);
#pragma omp parallel for schedule(static) if (a_.values.size() > 65536)
        for (long long i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t k = a_.row_start[i]; k < a_.row_start[i + 1]; ++k)
                s += a_.values[k] * x[a_.col_index[k]];
            y[static_cast<std::size_t>(i)] = s;
        }
        return y;
    }

    Vector apply_transpose(std::span<const double> y) const override {
        if (y.size() != a_.rows) throw std::invalid_argument("sparse apply_transpose: dimension mismatch");
        Vector x(a_.cols, 0.0);
        for (std::size_t i = 0; i < a_.rows; ++i)
            for (std::size_t k = a_.row_start[i]; k < a_.row_start[i + 1]; ++k)
                x[a_.col_index[k]] += a_.values[k] * y[i];
        return x;
    }

private:
    SparseRows a_;
};

}  // namespace

LinearOperator LinearOperator::from_dense(DenseMatrix a, OperatorKind kind) {
    return LinearOperator(kind, std::make_shared<DenseImpl>(std::move(a)));
}

LinearOperator from_sparse(SparseRows a, OperatorKind kind) {
    return LinearOperator(kind, std::make_shared<SparseImpl>(std::move(a)));
}

Vector LinearOperator::apply(std::span<const double> x) const {
    if (x.size() != cols()) throw std::invalid_argument("LinearOperator::apply: dimension mismatch");
    return impl_->apply(x);
}

Vector LinearOperator::apply_transpose(std::span<const double> y) const {
    if (y.size() != rows())
        throw std::invalid_argument("LinearOperator::apply_transpose: dimension mismatch");
    return impl_->apply_transpose(y);
}

DenseMatrix LinearOperator::materialize() const {
    if (const DenseMatrix* d = impl_->dense()) return *d;
    const std::size_t m = rows();
    const std::size_t n = cols();
    DenseMatrix out(m, n);
    const long long cols_ll = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long long j = 0; j < cols_ll; ++j) {
        Vector e(n, 0.0);
        e[static_cast<std::size_t>(j)] = 1.0;
        const Vector col = impl_->apply(e);
        for (std::size_t i = 0; i < m; ++i) out(i, static_cast<std::size_t>(j)) = col[i];
    }
    return out;
}

LinearOperator LinearOperator::materialized() const {
    if (impl_->dense()) return *this;
    return from_dense(materialize(), kind_);
}

}  // namespace reglearn
