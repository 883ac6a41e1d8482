#pragma once

#include "reglearn/core/dense.hpp"

namespace reglearn {

// Median absolute deviation of the finest-scale Haar detail coefficients,
// sigma = median(|d|) / 0.6745. 1D uses (b_2i - b_2i+1)/sqrt 2; 2D uses the
// diagonal detail (x00 - x01 - x10 + x11)/2 of each 2x2 block. A trailing odd
// sample/row/column is ignored.
double estimate_noise_level(std::span<const double> b);
double estimate_noise_level(std::span<const double> image, std::size_t height, std::size_t width);

// sigma * sqrt(m) / ||b||
double relative_noise_level(double sigma, std::span<const double> b);

}  // namespace reglearn
