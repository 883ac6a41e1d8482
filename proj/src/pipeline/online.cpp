#include "reglearn/pipeline/online.hpp"

#include "reglearn/regparam/noise_estimate.hpp"
#include "reglearn/solvers/tikhonov.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

namespace reglearn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSuboptimalMargin = 1e-12;

std::vector<std::string> methods_for(const ExperimentConfig& c, const OfflineArtifacts& a) {
    std::vector<std::string> m{"opt", "dnn"};
    if (a.elm) m.emplace_back("elm");
    if (c.experiment == ExperimentKind::heat) {
        m.emplace_back("gcv");
        m.emplace_back("upre");
        m.emplace_back("dp");
    }
    if (c.experiment == ExperimentKind::diffusion) m.emplace_back("dp");
    if (a.oed) m.emplace_back("oed");
    return m;
}

// Stopping iteration actually usable with a history of `available` iterates.
std::size_t clamp_iteration(double raw, std::size_t available) {
    const long long k = round_stopping_iteration(raw);
    return std::min<std::size_t>(static_cast<std::size_t>(k), available);
}

Tensor one_sample(std::span<const double> b, const Shape& sample_shape) {
    Shape s{1};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    return Tensor(std::move(s), Vector(b.begin(), b.end()));
}

double image_noise_level(const ExperimentConfig& c, std::span<const double> b) {
    const double sigma = estimate_noise_level(b, c.problem.side, c.problem.side);
    return relative_noise_level(sigma, b);
}

}  // namespace

void check_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& config) {
    if (to_json(Network(ckpt.spec).spec()) != to_json(Network(config.network).spec()))
        throw DatasetMismatch("checkpoint network differs from the network in the config");
}

EvaluationReport run_online(const ExperimentConfig& config, const OfflineArtifacts& artifacts,
                            const Dataset& validation) {
    check_dataset(validation, config, Split::validation);
    check_checkpoint(artifacts.checkpoint, config);
    const ExperimentProblem problem(config);
    const ExperimentKind kind = config.experiment;
    const std::string param_head = parameter_head(kind);

    EvaluationReport report;
    report.experiment = kind;
    report.config_hash = validation.config_hash;
    report.methods = methods_for(config, artifacts);
    report.has_l1 = kind == ExperimentKind::deblur_star;
    report.has_gamma = kind == ExperimentKind::deblur_star;

    std::vector<std::size_t> samples;
    for (std::size_t j = 0; j < validation.size(); ++j) {
        if (validation.failed[j]) {
            report.excluded.push_back(j);
        } else {
            samples.push_back(j);
        }
    }

    // Network predictions for the whole split at once.
    const auto predictions = predict(artifacts.checkpoint, validation.inputs);
    const Tensor& dnn = predictions.at(param_head).values;
    const Tensor* gamma_dnn = report.has_gamma ? &predictions.at("gamma").values : nullptr;

    const std::size_t k_methods = report.methods.size();
    report.rows.resize(samples.size());
    std::exception_ptr error;
    std::mutex error_mutex;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t s = 0; s < samples.size(); ++s) {
        try {
            const std::size_t j = samples[s];
            const auto b = validation.inputs.sample(j);
            const auto truth = validation.truths.sample(j);
            ReportRow& row = report.rows[s];
            row.sample = j;
            row.noise = validation.noise[j];
            row.parameter.assign(k_methods, kNaN);
            row.error_l2.assign(k_methods, kNaN);
            if (report.has_l1) row.error_l1.assign(k_methods, kNaN);

            auto record = [&](std::size_t m, double param, std::span<const double> x) {
                row.parameter[m] = param;
                row.error_l2[m] = relative_error_l2(x, truth);
                if (report.has_l1) row.error_l1[m] = relative_error_l1(x, truth);
            };

            if (problem.iterative()) {
                const auto h = problem.iterate(b, truth);
                auto use_k = [&](std::size_t m, std::size_t k) { record(m, static_cast<double>(k), h.iterates[k - 1]); };
                use_k(0, static_cast<std::size_t>(validation.label[j]));
                use_k(1, clamp_iteration(dnn[j], h.size()));
                for (std::size_t m = 2; m < k_methods; ++m) {
                    const auto& name = report.methods[m];
                    if (name == "elm") {
                        use_k(m, clamp_iteration(artifacts.elm->predict(b), h.size()));
                    } else if (name == "dp") {
                        const auto r = k_dp(h, b, image_noise_level(config, b), config.search.dp_safety);
                        row.dp_failed = r.failed;
                        use_k(m, static_cast<std::size_t>(r.value));
                    }
                }
            } else if (kind == ExperimentKind::heat) {
                const TikhonovSpectrum spec(problem.svd(), b);
                const double sigma2 = validation.noise[j];
                auto use_lambda = [&](std::size_t m, double l) { record(m, l, spec.solve(l)); };
                use_lambda(0, validation.label[j]);
                use_lambda(1, dnn[j]);
                const auto& iv = config.search.interval;
                const double tol = config.search.log_tol;
                for (std::size_t m = 2; m < k_methods; ++m) {
                    const auto& name = report.methods[m];
                    if (name == "elm") {
                        use_lambda(m, artifacts.elm->predict(b));
                    } else if (name == "gcv") {
                        use_lambda(m, lambda_gcv(problem.svd(), b, iv, tol).value);
                    } else if (name == "upre") {
                        use_lambda(m, lambda_upre(problem.svd(), b, sigma2, iv, tol).value);
                    } else if (name == "dp") {
                        try {
                            use_lambda(m, lambda_dp(problem.svd(), b, sigma2, iv).value);
                        } catch (const NoRootInBracket&) {
                            row.dp_failed = true;
                        }
                    } else if (name == "oed") {
                        use_lambda(m, artifacts.oed->value);
                    }
                }
            } else {
                auto use_lambda = [&](std::size_t m, double l) {
                    try {
                        record(m, l, problem.solve(b, l));
                    } catch (const CgBreakdown&) {
                        row.parameter[m] = l;
                    }
                };
                use_lambda(0, validation.label[j]);
                use_lambda(1, dnn[j]);
                for (std::size_t m = 2; m < k_methods; ++m)
                    if (report.methods[m] == "elm") use_lambda(m, artifacts.elm->predict(b));
            }
            if (gamma_dnn) {
                row.gamma_true = validation.gamma[j];
                row.gamma_dnn = (*gamma_dnn)[j];
            }
            for (std::size_t m = 1; m < k_methods; ++m)
                if (row.error_l2[m] < row.error_l2[0] - kSuboptimalMargin) row.oracle_suboptimal = true;
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return report;
}

SolveResult solve_observation(const ExperimentConfig& config, const Checkpoint& ckpt, std::span<const double> b) {
    check_checkpoint(ckpt, config);
    const ExperimentProblem problem(config);
    if (b.size() != problem.op().rows())
        throw std::invalid_argument("observation has " + std::to_string(b.size()) + " values, the experiment expects " +
                                    std::to_string(problem.op().rows()));
    const auto pred = predict(ckpt, one_sample(b, config.observation_shape()));
    const double raw = pred.at(parameter_head(config.experiment)).values[0];

    SolveResult out;
    if (pred.count("gamma")) out.gamma = pred.at("gamma").values[0];
    if (problem.iterative()) {
        const auto h = problem.iterate(b, std::nullopt);
        if (h.size() == 0) throw std::runtime_error("RRGMRES produced no iterate");
        const std::size_t k = clamp_iteration(raw, h.size());
        out.parameter = static_cast<double>(k);
        out.reconstruction = h.iterates[k - 1];
    } else {
        out.parameter = raw;
        out.reconstruction = problem.solve(b, raw);
    }
    return out;
}

}  // namespace reglearn
