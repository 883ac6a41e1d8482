#include "reglearn/forward/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reglearn {

// ---- heat source ----------------------------------------------------------

Vector heat_source(double r1, double r2, std::size_t n) {
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i + 1) / static_cast<double>(n);
        x[i] = std::sin(2.0 * std::numbers::pi * r1 * t) + std::sin(2.0 * std::numbers::pi * r2 * t);
    }
    const double lowest = *std::min_element(x.begin(), x.end());
    for (double& v : x) v -= lowest;
    return x;
}

Vector sample_heat_source(RngStream& stream, std::size_t n) {
    const double r1 = rng_uniform(stream, 1.0, 3.0);
    const double r2 = rng_uniform(stream, 1.0, 3.0);
    return heat_source(r1, r2, n);
}

// ---- star-shaped inclusions -----------------------------------------------

void StarShapeParams::validate() const {
    if (!(gamma > 1.0)) throw std::invalid_argument("StarShapeParams: gamma must exceed 1");
    if (!(r0 > 0.0)) throw std::invalid_argument("StarShapeParams: r0 must be positive");
    if (!(c > 0.0)) throw std::invalid_argument("StarShapeParams: c must be positive");
    if (n_terms < 1) throw std::invalid_argument("StarShapeParams: n_terms must be at least 1");
}

double star_radius(const StarShapeParams& p, const StarCoefficients& x, double xi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    xi = std::fmod(xi, two_pi);
    if (xi < 0.0) xi += two_pi;
    double field = 0.0;
    for (std::size_t i = 1; i <= p.n_terms; ++i) {
        const double w = std::pow(1.0 / static_cast<double>(i), p.gamma);
        const double arg = static_cast<double>(i) * xi;
        field += w * (x.cos_terms[i - 1] * std::cos(arg) + x.sin_terms[i - 1] * std::sin(arg));
    }
    return p.r0 + p.c * std::exp(field / std::sqrt(std::numbers::pi));
}

GridImage rasterize_star(const StarShapeParams& p, const StarCoefficients& x, std::size_t side) {
    p.validate();
    if (x.cos_terms.size() < p.n_terms || x.sin_terms.size() < p.n_terms)
        throw std::invalid_argument("rasterize_star: too few coefficients");
    GridImage img(side, side, 0.0);
    const double w = 2.0 / static_cast<double>(side);
    for (std::size_t i = 0; i < side; ++i) {
        const double y = 1.0 - (static_cast<double>(i) + 0.5) * w;
        for (std::size_t j = 0; j < side; ++j) {
            const double xc = -1.0 + (static_cast<double>(j) + 0.5) * w;
            const double rho = std::hypot(xc, y);
            if (rho > 1.0) continue;
            if (rho <= p.r0 || rho <= star_radius(p, x, std::atan2(y, xc))) img.at(i, j) = 1.0;
        }
    }
    return img;
}

StarSample sample_star_inclusion(RngStream& stream, const StarShapeParams& p, std::size_t side) {
    p.validate();
    if (side < 8) throw std::invalid_argument("sample_star_inclusion: side must be at least 8");
    StarCoefficients coeffs;
    coeffs.cos_terms.resize(p.n_terms);
    coeffs.sin_terms.resize(p.n_terms);
    for (std::size_t i = 0; i < p.n_terms; ++i) {
        coeffs.cos_terms[i] = rng_normal(stream, 0.0, 1.0);
        coeffs.sin_terms[i] = rng_normal(stream, 0.0, 1.0);
    }
    StarSample out;
    out.image = rasterize_star(p, coeffs, side);
    out.radius.resize(kStarRadiusSamples + 1);
    for (std::size_t k = 0; k <= kStarRadiusSamples; ++k)
        out.radius[k] = star_radius(p, coeffs, 2.0 * std::numbers::pi * static_cast<double>(k) /
                                                   static_cast<double>(kStarRadiusSamples));
    out.coefficients = std::move(coeffs);
    return out;
}

// ---- phantoms ---------------------------------------------------------------

std::array<Ellipse, 10> shepp_logan_ellipses() {
    return {{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
}

GridImage rasterize_ellipses(std::span<const Ellipse> ellipses, std::size_t side) {
    GridImage img(side, side, 0.0);
    const double w = 2.0 / static_cast<double>(side);
    for (const Ellipse& e : ellipses) {
        const double phi = e.angle_deg * std::numbers::pi / 180.0;
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        for (std::size_t i = 0; i < side; ++i) {
            const double y = 1.0 - (static_cast<double>(i) + 0.5) * w;
            for (std::size_t j = 0; j < side; ++j) {
                const double x = -1.0 + (static_cast<double>(j) + 0.5) * w;
                const double dx = x - e.center_x;
                const double dy = y - e.center_y;
                const double u = (dx * c + dy * s) / e.semi_x;
                const double v = (-dx * s + dy * c) / e.semi_y;
                if (u * u + v * v <= 1.0) img.at(i, j) += e.intensity;
            }
        }
    }
    for (double& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    return img;
}

GridImage sample_phantom(RngStream& stream, std::size_t side) {
    if (side < 16) throw std::invalid_argument("sample_phantom: side must be at least 16");
    auto ellipses = shepp_logan_ellipses();
    auto jitter = [&stream](double v) { return v * (1.0 + rng_uniform(stream, -0.1, 0.1)); };
    for (Ellipse& e : ellipses) {
        e.intensity = jitter(e.intensity);
        e.semi_x = jitter(e.semi_x);
        e.semi_y = jitter(e.semi_y);
        e.center_x = jitter(e.center_x);
        e.center_y = jitter(e.center_y);
        e.angle_deg = jitter(e.angle_deg);
    }
    return rasterize_ellipses(ellipses, side);
}

// ---- diffusion initial conditions -----------------------------------------

double gaussian_bump(double x, double y, const std::array<double, 2>& c, const std::array<double, 2>& nu) {
    const double dx = x - c[0];
    const double dy = y - c[1];
    return std::exp(-(nu[0] * dx * dx + nu[1] * dy * dy));
}

GridImage diffusion_initial_condition(const BumpPair& p, std::size_t side) {
    GridImage img(side, side);
    for (std::size_t i = 0; i < side; ++i) {
        const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
        for (std::size_t j = 0; j < side; ++j) {
            const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(side);
            img.at(i, j) = p.amplitude * gaussian_bump(x, y, p.center1, p.nu1) +
                           gaussian_bump(x, y, p.center2, p.nu2);
        }
    }
    return img;
}

BumpPair sample_bump_pair(RngStream& stream) {
    BumpPair p;
    p.amplitude = 0.7 * std::abs(rng_normal(stream, 0.0, 1.0));
    for (auto* c : {&p.center1, &p.center2})
        for (double& v : *c) v = rng_uniform(stream, 0.1, 0.9);
    for (auto* nu : {&p.nu1, &p.nu2})
        for (double& v : *nu) v = rng_uniform(stream, 5e-2, 2e-1);
    return p;
}

GridImage sample_diffusion_init(RngStream& stream, std::size_t side) {
    if (side < 8) throw std::invalid_argument("sample_diffusion_init: side must be at least 8");
    return diffusion_initial_condition(sample_bump_pair(stream), side);
}

// ---- noise ------------------------------------------------------------------

void NoiseSpec::validate() const {
    if (!(value_lo >= 0.0 && value_lo <= value_hi))
        throw std::invalid_argument("NoiseSpec: requires 0 <= value_lo <= value_hi");
}

NoisyObservation add_noise(std::span<const double> b_clean, const NoiseSpec& spec, RngStream& stream) {
    spec.validate();
    NoisyObservation out;
    out.b.assign(b_clean.begin(), b_clean.end());
    const double value = rng_uniform(stream, spec.value_lo, spec.value_hi);
    out.realized = value;
    if (spec.mode == NoiseMode::variance) {
        const double sigma = std::sqrt(value);
        for (double& v : out.b) v += rng_normal(stream, 0.0, sigma);
        return out;
    }
    const double clean_norm = norm2(b_clean);
    if (clean_norm == 0.0) throw std::invalid_argument("add_noise: zero signal in relative-level mode");
    Vector e(b_clean.size());
    for (double& v : e) v = rng_normal(stream, 0.0, 1.0);
    const double scale = value * clean_norm / norm2(e);
    for (std::size_t i = 0; i < e.size(); ++i) out.b[i] += scale * e[i];
    return out;
}

}  // namespace reglearn
