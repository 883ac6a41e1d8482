#pragma once

// ---------------------------------------------------------------------------
// Datasets of (observation, truth, oracle labels). On disk a dataset is a
// directory holding manifest.json and one RGLN tensor file per array.
// ---------------------------------------------------------------------------

#include "reglearn/pipeline/experiment.hpp"

#include <filesystem>

namespace reglearn {

struct Dataset {
    ExperimentKind experiment = ExperimentKind::heat;
    Split split = Split::train;
    std::string config_hash;
    std::uint64_t seed = 0;
    Json config;  // data-determining fields of the generating config

    Tensor inputs;     // J x observation shape
    Tensor truths;     // J x unknown size
    Vector noise;      // realized sigma^2 (heat) or relative noise level
    Vector label;      // lambda_opt or k_opt; NaN where the oracle failed
    Vector opt_error;  // relative l2 error at the label; NaN where the oracle failed
    Vector gamma;      // deblur_star only
    std::vector<bool> failed;

    std::size_t size() const { return noise.size(); }
    std::size_t failed_count() const;
    // Substream index of sample j.
    std::uint64_t stream_index(std::size_t j) const { return stream_offset(split) + j; }
};

class DatasetMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Deterministic in (config, split) and independent of the OpenMP thread count.
Dataset generate_dataset(const ExperimentConfig& config, Split split);

void write_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Throws DatasetMismatch unless the dataset was generated by this config for
// this split.
void check_dataset(const Dataset& d, const ExperimentConfig& config, Split split);

// Standard layout below an output directory.
std::filesystem::path dataset_dir(const std::filesystem::path& out, Split split);
std::filesystem::path model_dir(const std::filesystem::path& out);
std::filesystem::path report_dir(const std::filesystem::path& out);

}  // namespace reglearn
