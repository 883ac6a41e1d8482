#pragma once

// Offline phase: fits the network (and the ELM and OED baselines where the
// config asks for them) on a training dataset.

#include "reglearn/nnet/elm.hpp"
#include "reglearn/pipeline/dataset.hpp"

#include <filesystem>
#include <optional>

namespace reglearn {

// ELM on (optionally pooled) observations, predicting the parameter in the
// same transformed space as the network's parameter head.
struct ElmPredictor {
    ElmModel model;
    TargetTransform transform = TargetTransform::identity;
    std::size_t pool = 1;
    Shape observation_shape;

    // Parameter in natural units for one observation.
    double predict(std::span<const double> b) const;
};

// Average pooling of an image observation over pool x pool windows; windows
// at the right and bottom edges may be partial. 1D observations and pool 1
// pass through unchanged.
Vector pool_observation(std::span<const double> b, const Shape& observation_shape, std::size_t pool);

struct OfflineArtifacts {
    Checkpoint checkpoint;
    std::optional<ElmPredictor> elm;
    std::optional<SelectionResult> oed;  // heat only
    std::size_t excluded = 0;            // training samples dropped for a failed oracle
};

// Name of the head that predicts the regularization parameter.
std::string parameter_head(ExperimentKind k);

OfflineArtifacts run_offline(const ExperimentConfig& config, const Dataset& train);

// model/checkpoint.json, model/elm.json and model/oed.json.
void write_offline(const OfflineArtifacts& a, const std::filesystem::path& dir);
OfflineArtifacts read_offline(const std::filesystem::path& dir);

Json to_json(const ElmPredictor& e);
ElmPredictor elm_predictor_from_json(const Json& j);

}  // namespace reglearn
