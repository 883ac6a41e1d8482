#include "reglearn/forward/operators.hpp"
#include "reglearn/forward/samplers.hpp"
#include "reglearn/regparam/noise_estimate.hpp"
#include "reglearn/regparam/selection.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace reglearn;
using namespace reglearn::testing;

namespace {

// Index of the smallest value on a uniform log10 grid; ties toward the left.
struct GridScan {
    std::vector<double> log_lambdas;
    std::vector<double> values;
    std::size_t best = 0;
    double cell() const { return log_lambdas[1] - log_lambdas[0]; }
};

template <class F>
GridScan scan_log_grid(F&& f, LogInterval iv, std::size_t points) {
    GridScan g;
    for (std::size_t i = 0; i < points; ++i) {
        const double t = iv.lo + (iv.hi - iv.lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        g.log_lambdas.push_back(t);
        g.values.push_back(f(std::pow(10.0, t)));
        if (g.values.back() < g.values[g.best]) g.best = i;
    }
    return g;
}

double sum_sq(const Vector& v) { return dot(v, v); }

struct HeatSample {
    DenseMatrix a;
    Vector x_true;
    Vector b;
    double sigma2;
};

HeatSample heat_sample(std::uint64_t seed, std::size_t n = 100) {
    HeatSample s;
    s.a = heat_operator(n).materialize();
    RngStream st = RngStream::substream(seed, 0);
    s.x_true = sample_heat_source(st, n);
    const auto noisy = add_noise(s.a.apply(s.x_true), {NoiseMode::variance, 1e-3, 1e-1}, st);
    s.b = noisy.b;
    s.sigma2 = noisy.realized;
    return s;
}

}  // namespace

// ---- lambda_opt ------------------------------------------------------------

TEST_CASE("lambda_opt with noiseless identity data sits at the lower bound") {
    const auto f = svd(DenseMatrix::identity(5));
    const Vector x{1, -2, 3, 0.5, 1};
    const TikhonovSpectrum spec(f, x);
    const auto r = lambda_opt([&](double l) { return spec.solve(l); }, x);
    CHECK(r.value == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(r.method == SelectionMethod::opt);
    CHECK(r.evaluations >= 1);
}

TEST_CASE("lambda_opt on heat samples agrees with a grid scan and is locally optimal") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const auto s = heat_sample(seed);
        const auto f = svd(s.a);
        const TikhonovSpectrum spec(f, s.b);
        auto err = [&](double l) { return norm2(subtract(spec.solve(l), s.x_true)); };
        const auto r = lambda_opt([&](double l) { return spec.solve(l); }, s.x_true);
        const auto g = scan_log_grid(err, {}, 500);
        CHECK(std::abs(std::log10(r.value) - g.log_lambdas[g.best]) <= g.cell());
        CHECK(err(r.value) <= err(2 * r.value));
        CHECK(err(r.value) <= err(r.value / 2));
        CHECK(r.objective_at_value == doctest::Approx(err(r.value)));
    }
}

// ---- discrepancy principle --------------------------------------------------

TEST_CASE("lambda_dp for A = I matches the closed form") {
    RngStream st(21);
    const std::size_t m = 20;
    const auto f = svd(DenseMatrix::identity(m));
    const Vector b = random_vector(st, m);
    for (double frac : {0.05, 0.3, 0.7}) {
        const double t = frac;
        const double sigma2 = std::pow(t * norm2(b), 2) / static_cast<double>(m);
        const double lambda = std::sqrt(t / (1 - t));
        const auto r = lambda_dp(f, b, sigma2);
        CHECK(r.value == doctest::Approx(lambda).epsilon(1e-10));
    }
    CHECK_THROWS_AS(lambda_dp(f, b, 2 * sum_sq(b) / m, {}), NoRootInBracket);
    CHECK_THROWS_AS(lambda_dp(f, b, 0.0, {}), std::invalid_argument);
}

TEST_CASE("lambda_dp reproduces m sigma^2 and is monotone in sigma^2") {
    RngStream st(22);
    const DenseMatrix a = random_matrix(st, 10, 8);
    const auto f = svd(a);
    const Vector b = random_vector(st, 10);
    const TikhonovSpectrum spec(f, b);
    // Attainable range on [-6, 2]: [res(1e-6), res(1e2)].
    const double lo = spec.residual_norm_sq(1e-6), hi = spec.residual_norm_sq(1e2);
    double prev = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double target = lo + (hi - lo) * (0.05 + 0.09 * i);
        const double sigma2 = target / 10.0;
        const auto r = lambda_dp(f, b, sigma2);
        CHECK(std::abs(spec.residual_norm_sq(r.value) - target) <= 1e-8 * target);
        CHECK(r.value >= prev);
        prev = r.value;
    }
}

// ---- UPRE -------------------------------------------------------------------

TEST_CASE("lambda_upre for A = I matches the closed form") {
    RngStream st(23);
    const std::size_t m = 30;
    const auto f = svd(DenseMatrix::identity(m));
    const Vector b = random_vector(st, m);
    for (double t : {0.1, 0.4, 0.8}) {
        const double sigma2 = t * sum_sq(b) / m;
        const auto r = lambda_upre(f, b, sigma2, {}, 1e-10);
        CHECK(r.value * r.value == doctest::Approx(t / (1 - t)).epsilon(1e-6));
    }
    CHECK(lambda_upre(f, b, 0.0).value == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("upre objective formula") {
    RngStream st(24);
    const DenseMatrix a = random_matrix(st, 7, 5);
    const auto f = svd(a);
    const Vector b = random_vector(st, 7);
    const TikhonovSpectrum spec(f, b);
    const double lambda = 0.37, sigma2 = 0.02;
    // Oracle through the explicit influence matrix A (A^T A + l^2 I)^{-1} A^T.
    double trace = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
        Vector e(7, 0.0);
        e[j] = 1.0;
        trace += a.apply(normal_equations_solve(a, e, lambda * lambda))[j];
    }
    const Vector x = normal_equations_solve(a, b, lambda * lambda);
    const double expected = sum_sq(subtract(a.apply(x), b)) + 2 * sigma2 * trace;
    CHECK(upre_objective(spec, sigma2, lambda) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(gcv_objective(spec, lambda) ==
          doctest::Approx(7 * sum_sq(subtract(a.apply(x), b)) / std::pow(7 - trace, 2)).epsilon(1e-10));
}

// ---- GCV --------------------------------------------------------------------

TEST_CASE("lambda_gcv is flat for A = I and resolves to the lower bound") {
    RngStream st(25);
    const auto f = svd(DenseMatrix::identity(6));
    const Vector b = random_vector(st, 6);
    const auto r = lambda_gcv(f, b);
    CHECK(r.value == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("lambda_gcv for diag(2, 1) matches a fine one-dimensional minimization") {
    DenseMatrix a(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 1.0;
    const auto f = svd(a);
    const Vector b{1, 1};
    // Symbolic G with u = l^2: residual f_i = u/(s_i^2+u); trace complement sum f_i.
    auto g = [](double l) {
        const double u = l * l;
        const double f1 = u / (4 + u), f2 = u / (1 + u);
        return 2 * (f1 * f1 + f2 * f2) / std::pow(f1 + f2, 2);
    };
    // Dense grid then golden refinement of the oracle itself on its bracket.
    const auto grid = scan_log_grid(g, {}, 20001);
    double lo = std::max(-6.0, grid.log_lambdas[grid.best] - grid.cell());
    double hi = std::min(2.0, grid.log_lambdas[grid.best] + grid.cell());
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        if (g(std::pow(10.0, m1)) <= g(std::pow(10.0, m2))) hi = m2; else lo = m1;
    }
    const double expected = std::pow(10.0, 0.5 * (lo + hi));
    const auto r = lambda_gcv(f, b, {}, 1e-10);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-6));
    // G decreases toward 1 as the two filter factors approach each other, so
    // the minimum over the interval is its upper end.
    CHECK(r.value == doctest::Approx(1e2).epsilon(1e-9));
}

TEST_CASE("UPRE and GCV are never worse than a 400-point grid") {
    RngStream st(26);
    for (int trial = 0; trial < 20; ++trial) {
        const DenseMatrix a = random_matrix(st, 10, 8);
        const auto f = svd(a);
        const Vector b = random_vector(st, 10);
        const TikhonovSpectrum spec(f, b);
        const double sigma2 = 0.05 + 0.02 * trial;

        const auto gu = scan_log_grid([&](double l) { return upre_objective(spec, sigma2, l); }, {}, 400);
        const auto ru = lambda_upre(f, b, sigma2);
        CHECK(ru.objective_at_value <= gu.values[gu.best] + 1e-10);
        CHECK(std::abs(std::log10(ru.value) - gu.log_lambdas[gu.best]) <= gu.cell());

        const auto gg = scan_log_grid([&](double l) { return gcv_objective(spec, l); }, {}, 400);
        const auto rg = lambda_gcv(f, b);
        CHECK(rg.objective_at_value <= gg.values[gg.best] + 1e-10);
        CHECK(std::abs(std::log10(rg.value) - gg.log_lambdas[gg.best]) <= gg.cell());
    }
}

TEST_CASE("GCV rejects a zero denominator") {
    // Square full-rank A: the complement vanishes as lambda -> 0.
    const auto f = svd(DenseMatrix::identity(3));
    const TikhonovSpectrum spec(f, Vector{1, 1, 1});
    CHECK_THROWS_AS(gcv_objective(spec, 0.0), std::domain_error);
}

// ---- OED --------------------------------------------------------------------

TEST_CASE("lambda_oed single sample equals lambda_opt and duplicates do not change it") {
    const auto s = heat_sample(31);
    const auto f = svd(s.a);
    const TikhonovSpectrum spec(f, s.b);
    const auto opt = lambda_opt([&](double l) { return spec.solve(l); }, s.x_true);
    const std::vector<Vector> one{s.x_true};
    const auto oed1 = lambda_oed([&](double l, std::size_t) { return spec.solve(l); }, one);
    CHECK(oed1.value == doctest::Approx(opt.value).epsilon(1e-9));
    const std::vector<Vector> two{s.x_true, s.x_true};
    const auto oed2 = lambda_oed([&](double l, std::size_t) { return spec.solve(l); }, two);
    CHECK(oed2.value == oed1.value);
    CHECK(oed2.method == SelectionMethod::oed);
}

TEST_CASE("lambda_oed on fifty heat samples matches a grid scan of the mean objective") {
    const auto a = heat_operator(100).materialize();
    const auto f = svd(a);
    std::vector<Vector> truths;
    std::vector<TikhonovSpectrum> specs;
    std::vector<Vector> bs;
    for (std::uint64_t j = 0; j < 50; ++j) {
        RngStream st = RngStream::substream(41, j);
        truths.push_back(sample_heat_source(st, 100));
        bs.push_back(add_noise(a.apply(truths.back()), {NoiseMode::variance, 1e-3, 1e-1}, st).b);
    }
    for (const auto& b : bs) specs.emplace_back(f, b);
    auto solve = [&](double l, std::size_t j) { return specs[j].solve(l); };
    auto mean_obj = [&](double l) {
        double total = 0.0;
        for (std::size_t j = 0; j < 50; ++j) total += sum_sq(subtract(specs[j].solve(l), truths[j]));
        return total / 100.0;
    };
    const auto r = lambda_oed(solve, truths);
    const auto g = scan_log_grid(mean_obj, {}, 300);
    CHECK(std::abs(std::log10(r.value) - g.log_lambdas[g.best]) <= g.cell());
    CHECK(r.objective_at_value == doctest::Approx(mean_obj(r.value)).epsilon(1e-12));
}

// ---- stopping rules -----------------------------------------------------------

TEST_CASE("k_opt from error sequences") {
    const std::vector<double> e1{0.5, 0.3, 0.4};
    CHECK(k_opt_from_errors(e1).value == 2);
    const std::vector<double> e2{0.3, 0.3};
    CHECK(k_opt_from_errors(e2).value == 1);
    CHECK_THROWS(k_opt_from_errors(std::vector<double>{}));
}

TEST_CASE("k_opt on a diffusion sample equals a scan of the stored errors") {
    const auto a = diffusion_operator(28, 0.01, 20).materialized();
    RngStream st = RngStream::substream(51, 0);
    const GridImage x0 = sample_diffusion_init(st, 28);
    const auto noisy = add_noise(a.apply(x0.pixels), {NoiseMode::relative_level, 1e-3, 1e-3}, st);
    const auto h = rrgmres(a, noisy.b, 40, x0.pixels);
    const auto r = k_opt(h, x0.pixels);
    const double x_norm = norm2(x0.pixels);
    std::size_t best = 0;
    std::vector<double> errs;
    for (const auto& x : h.iterates) errs.push_back(norm2(subtract(x, x0.pixels)) / x_norm);
    for (std::size_t k = 1; k < errs.size(); ++k)
        if (errs[k] < errs[best]) best = k;
    CHECK(r.value == static_cast<double>(best + 1));
    CHECK(r.value <= static_cast<double>(h.size()));
    CHECK(r.method == SelectionMethod::kopt);
}

TEST_CASE("k_dp from relative residuals") {
    const std::vector<double> res{0.5, 0.2, 0.05};
    auto r = k_dp_from_residuals(res, 0.1, 1.01);
    CHECK(r.value == 3);
    CHECK_FALSE(r.failed);
    CHECK(k_dp_from_residuals(res, 1.0, 1.01).value == 1);
    r = k_dp_from_residuals(res, 0.01, 1.01);
    CHECK(r.value == 3);
    CHECK(r.failed);
    CHECK(k_dp_from_residuals(res, 0.01, 1e6).value == 1);
    CHECK_THROWS_AS(k_dp_from_residuals(res, 0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(k_dp_from_residuals(res, -0.1, 1.01), std::invalid_argument);
}

TEST_CASE("k_dp on a history uses relative residual norms") {
    RngStream st(52);
    DenseMatrix a = random_matrix(st, 12, 12);
    for (std::size_t i = 0; i < 12; ++i) a(i, i) += 5.0;
    const Vector b = random_vector(st, 12);
    const auto h = rrgmres(LinearOperator::from_dense(a), b, 12);
    const double nb = norm2(b);
    const double level = h.residual_norms[3] / nb;
    const auto r = k_dp(h, b, level, 1.0);
    std::size_t expected = 0;
    while (h.residual_norms[expected] / nb > level) ++expected;
    CHECK(r.value == static_cast<double>(expected + 1));
}

// ---- noise estimation ---------------------------------------------------------

TEST_CASE("wavelet noise estimator") {
    CHECK(estimate_noise_level(Vector(64, 3.0)) == 0.0);
    CHECK(estimate_noise_level(Vector(64, 3.0), 8, 8) == 0.0);

    RngStream st(61);
    Vector noise(4096);
    for (double& v : noise) v = rng_normal(st, 0.0, 0.1);
    CHECK(std::abs(estimate_noise_level(noise) - 0.1) <= 0.005);
    CHECK(std::abs(estimate_noise_level(noise, 64, 64) - 0.1) <= 0.01);

    Vector sine(4096);
    for (std::size_t i = 0; i < sine.size(); ++i)
        sine[i] = std::sin(2 * std::numbers::pi * 3.0 * static_cast<double>(i) / 4096.0) + rng_normal(st, 0.0, 0.05);
    CHECK(std::abs(estimate_noise_level(sine) - 0.05) <= 0.005);

    const Vector b{3.0, 4.0};
    CHECK(relative_noise_level(0.5, b) == doctest::Approx(0.5 * std::sqrt(2.0) / 5.0));
    CHECK_THROWS(estimate_noise_level(Vector{1.0}));
}
