#include "reglearn/nnet/elm.hpp"

#include "reglearn/core/svd.hpp"

#include <stdexcept>

namespace reglearn {

double ElmModel::predict(std::span<const double> b) const {
    if (b.size() != w.size()) throw std::invalid_argument("ElmModel::predict: input length mismatch");
    return dot(w, b) + y;
}

ElmModel elm_fit(const DenseMatrix& inputs, std::span<const double> targets) {
    const std::size_t j = inputs.rows(), m = inputs.cols();
    if (j == 0) throw std::invalid_argument("elm_fit: no samples");
    if (targets.size() != j) throw std::invalid_argument("elm_fit: one target per sample required");
    DenseMatrix aug(j, m + 1);
    for (std::size_t r = 0; r < j; ++r) {
        for (std::size_t c = 0; c < m; ++c) aug(r, c) = inputs(r, c);
        aug(r, m) = 1.0;
    }
    const Vector sol = lstsq(aug, targets);
    ElmModel model;
    model.w.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(m));
    model.y = sol[m];
    return model;
}

}  // namespace reglearn
