#include "reglearn/regparam/noise_estimate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reglearn {

namespace {

double median_abs(std::vector<double> d) {
    for (double& v : d) v = std::abs(v);
    const std::size_t n = d.size();
    std::sort(d.begin(), d.end());
    return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

constexpr double kMadToSigma = 0.6745;

}  // namespace

double estimate_noise_level(std::span<const double> b) {
    if (b.size() < 2) throw std::invalid_argument("estimate_noise_level: need at least 2 samples");
    std::vector<double> d(b.size() / 2);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (b[2 * i] - b[2 * i + 1]) / std::sqrt(2.0);
    return median_abs(std::move(d)) / kMadToSigma;
}

double estimate_noise_level(std::span<const double> image, std::size_t height, std::size_t width) {
    if (height < 2 || width < 2) throw std::invalid_argument("estimate_noise_level: need at least 2x2");
    if (image.size() != height * width) throw std::invalid_argument("estimate_noise_level: shape mismatch");
    std::vector<double> d;
    d.reserve((height / 2) * (width / 2));
    for (std::size_t i = 0; i + 1 < height; i += 2)
        for (std::size_t j = 0; j + 1 < width; j += 2) {
            const double x00 = image[i * width + j];
            const double x01 = image[i * width + j + 1];
            const double x10 = image[(i + 1) * width + j];
            const double x11 = image[(i + 1) * width + j + 1];
            d.push_back(0.5 * (x00 - x01 - x10 + x11));
        }
    return median_abs(std::move(d)) / kMadToSigma;
}

double relative_noise_level(double sigma, std::span<const double> b) {
    const double nb = norm2(b);
    if (nb == 0.0) return 0.0;
    return sigma * std::sqrt(static_cast<double>(b.size())) / nb;
}

}  // namespace reglearn
