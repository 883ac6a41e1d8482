#include "reglearn/nnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reglearn {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_to_string(shape_));
}

std::size_t Tensor::sample_size() const {
    if (shape_.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
}

std::span<double> Tensor::sample(std::size_t j) {
    const std::size_t s = sample_size();
    return {data_.data() + j * s, s};
}

std::span<const double> Tensor::sample(std::size_t j) const {
    const std::size_t s = sample_size();
    return {data_.data() + j * s, s};
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor stack_samples(std::span<const Vector> rows, const Shape& sample_shape) {
    const std::size_t s = shape_size(sample_shape);
    Shape shape{rows.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor t(shape);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j].size() != s) throw std::invalid_argument("stack_samples: row length mismatch");
        std::copy(rows[j].begin(), rows[j].end(), t.data() + j * s);
    }
    return t;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

}  // namespace reglearn
