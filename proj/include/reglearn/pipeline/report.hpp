#pragma once

// ---------------------------------------------------------------------------
// Evaluation reports: one row per validation sample (rows.csv) and summary
// statistics per method (summary.json). Numbers are written with 17
// significant digits, so every double survives a write/read round trip.
//
// rows.csv columns, in this order:
//   sample, noise,
//   param_<m> for each method, err_<m> for each method,
//   l1err_<m> for each method       (when l1 errors are reported)
//   gamma_true, gamma_dnn            (deblur_star)
//   dp_failed, oracle_suboptimal
// Methods appear in the fixed order opt, dnn, elm, gcv, upre, dp, oed.
// ---------------------------------------------------------------------------

#include "reglearn/pipeline/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace reglearn {

struct ReportRow {
    std::uint64_t sample = 0;  // index within the validation split
    double noise = 0.0;
    Vector parameter;  // per method: lambda or stopping iteration; NaN when undefined
    Vector error_l2;   // relative reconstruction errors per method
    Vector error_l1;   // empty unless the report carries l1 errors
    double gamma_true = 0.0;
    double gamma_dnn = 0.0;
    bool dp_failed = false;
    bool oracle_suboptimal = false;
};

struct EvaluationReport {
    ExperimentKind experiment = ExperimentKind::heat;
    std::string config_hash;
    std::vector<std::string> methods;
    bool has_l1 = false;
    bool has_gamma = false;
    std::vector<ReportRow> rows;
    std::vector<std::uint64_t> excluded;  // validation samples whose oracle failed

    std::size_t method_index(std::string_view m) const;
    Vector parameter_column(std::string_view m) const;
    Vector error_column(std::string_view m, bool l1 = false) const;
};

// Canonical method order; reports list a subset in this order.
const std::vector<std::string>& method_order();

std::vector<std::string> report_header(const EvaluationReport& r);

struct SummaryStats {
    std::size_t count = 0;  // finite values only
    double mean = 0.0;
    double median = 0.0;
    double q05 = 0.0, q25 = 0.0, q75 = 0.0, q95 = 0.0;
    double min = 0.0, max = 0.0;
};

// Linear-interpolation quantiles over the finite entries; NaN entries are ignored.
SummaryStats summarize(std::span<const double> values);
double quantile(std::vector<double> sorted_finite, double p);
double pearson_correlation(std::span<const double> a, std::span<const double> b);

Json summary_json(const EvaluationReport& r);

void write_report(const EvaluationReport& r, const std::filesystem::path& dir);
EvaluationReport read_report(const std::filesystem::path& dir);

// Number formatting used in rows.csv.
std::string format_double(double v);

}  // namespace reglearn
