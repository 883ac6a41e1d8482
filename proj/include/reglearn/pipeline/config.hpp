#pragma once

// ---------------------------------------------------------------------------
// Experiment configuration: a versioned JSON document with a strict schema.
//
//   {
//     "version": 1,
//     "experiment": "heat" | "tomography" | "deblur_star" | "diffusion",
//     "seed": 7,
//     "output_dir": "runs/heat",
//     "problem": { ...experiment specific... },
//     "noise": {"mode": "variance" | "relative_level", "range": [lo, hi]},
//     "samples": {"train": J, "validation": J},
//     "search": {"log10_lambda": [lo, hi], "tol": t, "split_bregman": {...},
//                "k_max": K, "dp_safety": s},
//     "network": { ...network spec... },
//     "training": {...}, "stage2": {...},
//     "elm": {"pool": p},
//     "oed": true
//   }
//
// Unknown keys anywhere are rejected. Every omitted field takes the
// experiment's documented default.
// ---------------------------------------------------------------------------

#include "reglearn/forward/samplers.hpp"
#include "reglearn/nnet/serialization.hpp"
#include "reglearn/regparam/selection.hpp"
#include "reglearn/solvers/total_variation.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace reglearn {

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind { heat, tomography, deblur_star, diffusion };

std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(std::string_view s);

struct ProblemConfig {
    // heat
    std::size_t n = 100;
    double kappa = 1.0;
    // image experiments
    std::size_t side = 0;
    // tomography
    std::size_t n_angles = 45;
    std::size_t n_rays = 47;
    // deblur_star
    double blur_sigma = 1.0;
    std::size_t stencil = 5;
    double gamma_lo = 1.25;
    double gamma_hi = 2.5;
    StarShapeParams star;
    // diffusion
    double t_final = 0.01;
    std::size_t n_steps = 20;
};

struct SearchConfig {
    LogInterval interval;
    double log_tol = 1e-4;  // golden-section tolerance in log10(lambda)
    SplitBregmanOptions split_bregman;
    std::size_t k_max = 40;
    double dp_safety = 1.01;
};

struct ElmConfig {
    bool enabled = false;
    std::size_t pool = 1;  // square average pooling of image observations before the fit
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::heat;
    std::uint64_t seed = 0;
    std::string output_dir = "runs";
    ProblemConfig problem;
    NoiseSpec noise;
    std::size_t j_train = 0;
    std::size_t j_val = 0;
    SearchConfig search;
    NetworkSpec network;
    TrainingOptions training;
    std::optional<TrainingOptions> stage2;  // deblur_star: training of the lambda head
    ElmConfig elm;
    bool oed = false;

    // Shape of one observation b as fed to the network.
    Shape observation_shape() const;
    // Size of the unknown x.
    std::size_t unknown_size() const;
    // Names of the heads this experiment trains, in training order.
    std::vector<std::string> head_names() const;

    void validate() const;
};

// Parses and validates. Errors are std::invalid_argument with the offending key.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON with every default made explicit.
Json to_json(const ExperimentConfig& c);

Json training_options_to_json(const TrainingOptions& t);
TrainingOptions training_options_from_json(const Json& j, std::string_view context);

// The fields that determine generated data: version, experiment, seed,
// problem, noise, samples and search.
Json data_config_json(const ExperimentConfig& c);

// Hex BLAKE2b digest of data_config_json. Training settings and output
// location do not enter.
std::string data_hash(const ExperimentConfig& c);

// Seed of the training streams, derived from the experiment seed so that
// it never coincides with a per-sample data stream.
std::uint64_t training_seed(std::uint64_t experiment_seed);

}  // namespace reglearn
