#pragma once

#include "reglearn/core/dense.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace reglearn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

// Batched tensor: shape[0] is the batch dimension, the rest is the per-sample
// shape ({features} or {channels, height, width}).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, Vector data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t sample_size() const;
    Shape sample_shape() const { return shape_.empty() ? Shape{} : Shape(shape_.begin() + 1, shape_.end()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    Vector& values() { return data_; }
    const Vector& values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> sample(std::size_t j);
    std::span<const double> sample(std::size_t j) const;

    bool all_finite() const;

private:
    Shape shape_;
    Vector data_;
};

// Stacks equally sized rows into a batch with the given per-sample shape.
Tensor stack_samples(std::span<const Vector> rows, const Shape& sample_shape);

std::string shape_to_string(const Shape& shape);

}  // namespace reglearn
