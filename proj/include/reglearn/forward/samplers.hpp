#pragma once

// ---------------------------------------------------------------------------
// Ground-truth generators for the four experiments and the noise model.
// Every sampler has a deterministic counterpart taking its random draws
// explicitly, which is what the samplers call after drawing.
// ---------------------------------------------------------------------------

#include "reglearn/core/dense.hpp"
#include "reglearn/core/rng.hpp"

#include <array>

namespace reglearn {

// Row-major image; pixel (i, j) is data index i * width + j.
struct GridImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    GridImage() = default;
    GridImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

    double& at(std::size_t i, std::size_t j) { return pixels[i * width + j]; }
    double at(std::size_t i, std::size_t j) const { return pixels[i * width + j]; }
};

// ---- heat source ----------------------------------------------------------

// x(t) = sin(2 pi r1 t) + sin(2 pi r2 t) + c on t_i = i/n, i = 1..n, with c
// chosen so that the minimum over the grid is exactly zero.
Vector heat_source(double r1, double r2, std::size_t n);
// r1, r2 ~ U[1, 3].
Vector sample_heat_source(RngStream& stream, std::size_t n);

// ---- star-shaped inclusions -----------------------------------------------

struct StarShapeParams {
    double gamma = 1.5;
    double r0 = 0.2 / 2.5066282746310002;    // 0.2 / sqrt(2 pi)
    double c = 0.25 * 1.2214027581601699;    // 0.25 exp(0.2)
    std::size_t n_terms = 100;

    void validate() const;
};

struct StarCoefficients {
    std::vector<double> cos_terms;  // X^1_i
    std::vector<double> sin_terms;  // X^2_i
};

// r(xi) = r0 + c exp( (1/sqrt pi) sum_i i^-gamma (X1_i cos(i xi) + X2_i sin(i xi)) ).
double star_radius(const StarShapeParams& p, const StarCoefficients& x, double xi);

// Indicator of {y in unit disk : |y| <= r(angle(y))} on pixel centres of the
// side x side grid over [-1, 1]^2 (row 0 at the top).
GridImage rasterize_star(const StarShapeParams& p, const StarCoefficients& x, std::size_t side);

struct StarSample {
    GridImage image;
    // r at xi_k = 2 pi k / K, k = 0..K (both endpoints included).
    std::vector<double> radius;
    StarCoefficients coefficients;
};

inline constexpr std::size_t kStarRadiusSamples = 512;

StarSample sample_star_inclusion(RngStream& stream, const StarShapeParams& p, std::size_t side);

// ---- random Shepp-Logan phantoms ------------------------------------------

struct Ellipse {
    double intensity;
    double semi_x;
    double semi_y;
    double center_x;
    double center_y;
    double angle_deg;
};

// The ten ellipses of the modified Shepp-Logan phantom.
std::array<Ellipse, 10> shepp_logan_ellipses();

// Sum of ellipse indicators on pixel centres over [-1, 1]^2, clipped to [0, 1].
GridImage rasterize_ellipses(std::span<const Ellipse> ellipses, std::size_t side);

// Every field of every ellipse scaled by an independent (1 + U(-0.1, 0.1)).
GridImage sample_phantom(RngStream& stream, std::size_t side);

// ---- diffusion initial conditions -----------------------------------------

struct BumpPair {
    double amplitude = 0.0;  // a
    std::array<double, 2> center1{};
    std::array<double, 2> nu1{};
    std::array<double, 2> center2{};
    std::array<double, 2> nu2{};
};

// psi(xi, c, nu) = exp(-(xi - c)^T diag(nu) (xi - c)).
double gaussian_bump(double x, double y, const std::array<double, 2>& c, const std::array<double, 2>& nu);

// a psi(xi, c1, nu1) + psi(xi, c2, nu2) on cell centres ((j + 1/2)/side, (i + 1/2)/side).
GridImage diffusion_initial_condition(const BumpPair& p, std::size_t side);

// a = 0.7 |zeta|, zeta ~ N(0,1); centres U[0.1, 0.9]; nu U[0.05, 0.2].
BumpPair sample_bump_pair(RngStream& stream);
GridImage sample_diffusion_init(RngStream& stream, std::size_t side);

// ---- noise ------------------------------------------------------------------

enum class NoiseMode { variance, relative_level };

struct NoiseSpec {
    NoiseMode mode = NoiseMode::variance;
    double value_lo = 0.0;
    double value_hi = 0.0;

    void validate() const;
};

struct NoisyObservation {
    Vector b;
    double realized = 0.0;  // sigma^2 or relative level
};

// variance: eps_i ~ N(0, sigma^2), sigma^2 ~ U[lo, hi].
// relative_level: eps = level ||b_clean|| e / ||e||, e standard normal,
// level ~ U[lo, hi]; the realized relative level is exact.
NoisyObservation add_noise(std::span<const double> b_clean, const NoiseSpec& spec, RngStream& stream);

}  // namespace reglearn
