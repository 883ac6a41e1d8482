#pragma once

// Online phase: predicts parameters for validation observations, solves the
// inverse problem with every method's parameter and records the errors.

#include "reglearn/pipeline/offline.hpp"
#include "reglearn/pipeline/report.hpp"

namespace reglearn {

// Refuses a checkpoint whose network differs from the config's.
void check_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& config);

EvaluationReport run_online(const ExperimentConfig& config, const OfflineArtifacts& artifacts,
                            const Dataset& validation);

struct SolveResult {
    double parameter = 0.0;             // lambda, or the stopping iteration used
    std::optional<double> gamma;        // deblur_star
    Vector reconstruction;
};

// The online phase for a single observation.
SolveResult solve_observation(const ExperimentConfig& config, const Checkpoint& ckpt, std::span<const double> b);

}  // namespace reglearn
