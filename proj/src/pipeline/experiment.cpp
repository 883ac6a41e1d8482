#include "reglearn/pipeline/experiment.hpp"

#include "reglearn/forward/operators.hpp"
#include "reglearn/solvers/tikhonov.hpp"

#include <cmath>

namespace reglearn {

double relative_error_l2(std::span<const double> x, std::span<const double> truth) {
    return norm2(subtract(x, truth)) / norm2(truth);
}

double relative_error_l1(std::span<const double> x, std::span<const double> truth) {
    return norm1(subtract(x, truth)) / norm1(truth);
}

std::string_view to_string(Split s) { return s == Split::train ? "train" : "validation"; }

std::uint64_t stream_offset(Split s) { return s == Split::train ? 0 : (std::uint64_t{1} << 32); }

namespace {

LinearOperator build_operator(const ExperimentConfig& c) {
    const auto& p = c.problem;
    switch (c.experiment) {
        case ExperimentKind::heat: return heat_operator(p.n, p.kappa);
        case ExperimentKind::tomography: return radon_operator(p.side, p.n_angles, p.n_rays);
        case ExperimentKind::deblur_star: return gaussian_blur_operator(p.side, p.side, p.blur_sigma, p.stencil);
        case ExperimentKind::diffusion:
            // Dense form: 784 x 784 matvecs are cheaper than 20 banded solves.
            return diffusion_operator(p.side, p.t_final, p.n_steps).materialized();
    }
    throw std::logic_error("unknown experiment");
}

}  // namespace

ExperimentProblem::ExperimentProblem(const ExperimentConfig& config)
    : config_(config), op_(build_operator(config)) {
    if (config_.experiment == ExperimentKind::heat) svd_ = reglearn::svd(op_.materialize());
}

const SvdFactorization& ExperimentProblem::svd() const {
    if (!svd_) throw std::logic_error("svd() is only available for the heat experiment");
    return *svd_;
}

GroundTruthSample ExperimentProblem::draw(RngStream& stream) const {
    const auto& p = config_.problem;
    GroundTruthSample s;
    switch (config_.experiment) {
        case ExperimentKind::heat: s.x_true = sample_heat_source(stream, p.n); break;
        case ExperimentKind::tomography: s.x_true = sample_phantom(stream, p.side).pixels; break;
        case ExperimentKind::deblur_star: {
            StarShapeParams star = p.star;
            star.gamma = rng_uniform(stream, p.gamma_lo, p.gamma_hi);
            s.gamma = star.gamma;
            s.x_true = sample_star_inclusion(stream, star, p.side).image.pixels;
            break;
        }
        case ExperimentKind::diffusion: s.x_true = sample_diffusion_init(stream, p.side).pixels; break;
    }
    auto noisy = add_noise(op_.apply(s.x_true), config_.noise, stream);
    s.b = std::move(noisy.b);
    s.noise = noisy.realized;
    return s;
}

Vector ExperimentProblem::solve(std::span<const double> b, double lambda) const {
    switch (config_.experiment) {
        case ExperimentKind::heat: return tikhonov_solve(*svd_, b, lambda);
        case ExperimentKind::tomography:
        case ExperimentKind::deblur_star:
            return tv_solve_split_bregman(op_, b, lambda, {config_.problem.side, config_.problem.side},
                                          config_.search.split_bregman)
                .x;
        case ExperimentKind::diffusion: break;
    }
    throw std::logic_error("solve(lambda) is not defined for the diffusion experiment");
}

IterateHistory ExperimentProblem::iterate(std::span<const double> b,
                                          std::optional<std::span<const double>> x_true) const {
    if (!iterative()) throw std::logic_error("iterate() is only defined for the diffusion experiment");
    return rrgmres(op_, b, config_.search.k_max, x_true);
}

OracleLabel ExperimentProblem::oracle(const GroundTruthSample& s) const {
    try {
        if (iterative()) {
            const auto h = iterate(s.b, std::span<const double>(s.x_true));
            if (h.size() == 0) throw OracleFailure("RRGMRES produced no iterate");
            const auto k = k_opt(h, s.x_true);
            return {k.value, h.relative_errors[static_cast<std::size_t>(k.value) - 1]};
        }
        const auto& interval = config_.search.interval;
        const double tol = config_.search.log_tol;
        if (config_.experiment == ExperimentKind::heat) {
            const TikhonovSpectrum spec(*svd_, s.b);
            const auto r = lambda_opt([&](double l) { return spec.solve(l); }, s.x_true, interval, tol);
            return {r.value, relative_error_l2(spec.solve(r.value), s.x_true)};
        }
        const auto r = lambda_opt([&](double l) { return solve(s.b, l); }, s.x_true, interval, tol);
        const double err = relative_error_l2(solve(s.b, r.value), s.x_true);
        if (!std::isfinite(err)) throw OracleFailure("non-finite reconstruction error");
        return {r.value, err};
    } catch (const CgBreakdown& e) {
        throw OracleFailure(e.what());
    }
}

}  // namespace reglearn
