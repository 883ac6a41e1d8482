#pragma once

// ---------------------------------------------------------------------------
// The forward problem behind one experiment config: operator, ground-truth
// sampler, reconstruction for a given parameter and the oracle label.
//
//   heat         Tikhonov via SVD, label lambda_opt
//   tomography   TV split-Bregman on a radon projector, label lambda_opt
//   deblur_star  TV split-Bregman on a Gaussian blur, labels gamma, lambda_opt
//   diffusion    RRGMRES on Crank-Nicolson diffusion, label k_opt
// ---------------------------------------------------------------------------

#include "reglearn/core/svd.hpp"
#include "reglearn/pipeline/config.hpp"
#include "reglearn/solvers/rrgmres.hpp"

#include <limits>
#include <optional>

namespace reglearn {

struct GroundTruthSample {
    Vector x_true;
    Vector b;
    double noise = 0.0;  // realized sigma^2 or relative level
    double gamma = std::numeric_limits<double>::quiet_NaN();
};

struct OracleLabel {
    double parameter = 0.0;  // lambda_opt or k_opt
    double error = 0.0;      // relative l2 error at the oracle parameter
};

class OracleFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double relative_error_l2(std::span<const double> x, std::span<const double> truth);
double relative_error_l1(std::span<const double> x, std::span<const double> truth);

class ExperimentProblem {
public:
    explicit ExperimentProblem(const ExperimentConfig& config);

    const ExperimentConfig& config() const { return config_; }
    const LinearOperator& op() const { return op_; }
    // Heat only.
    const SvdFactorization& svd() const;

    bool iterative() const { return config_.experiment == ExperimentKind::diffusion; }

    GroundTruthSample draw(RngStream& stream) const;

    // Regularized reconstruction for a lambda (heat, tomography, deblur_star).
    Vector solve(std::span<const double> b, double lambda) const;
    // RRGMRES history, with relative errors when a truth is given (diffusion).
    IterateHistory iterate(std::span<const double> b, std::optional<std::span<const double>> x_true) const;

    // Throws OracleFailure when the underlying solver breaks down.
    OracleLabel oracle(const GroundTruthSample& s) const;

private:
    ExperimentConfig config_;
    LinearOperator op_;
    std::optional<SvdFactorization> svd_;
};

// Disjoint per-sample substream indices for the two splits.
enum class Split { train, validation };
std::string_view to_string(Split s);
std::uint64_t stream_offset(Split s);

}  // namespace reglearn
