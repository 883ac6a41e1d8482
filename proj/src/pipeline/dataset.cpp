#include "reglearn/pipeline/dataset.hpp"

#include "reglearn/pipeline/tensor_io.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

namespace reglearn {

namespace {

constexpr const char* kManifestFormat = "reglearn-dataset";
constexpr int kManifestVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Shape with_batch(std::size_t j, const Shape& sample) {
    Shape s{j};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    throw std::invalid_argument("unknown split '" + s + "'");
}

}  // namespace

std::size_t Dataset::failed_count() const {
    std::size_t n = 0;
    for (bool f : failed) n += f ? 1 : 0;
    return n;
}

std::filesystem::path dataset_dir(const std::filesystem::path& out, Split split) {
    return out / "data" / std::string(to_string(split));
}
std::filesystem::path model_dir(const std::filesystem::path& out) { return out / "model"; }
std::filesystem::path report_dir(const std::filesystem::path& out) { return out / "report"; }

// ---- generation -------------------------------------------------------------

Dataset generate_dataset(const ExperimentConfig& config, Split split) {
    const ExperimentProblem problem(config);
    const std::size_t count = split == Split::train ? config.j_train : config.j_val;
    const std::size_t m = problem.op().rows();
    const std::size_t n = problem.op().cols();

    Dataset d;
    d.experiment = config.experiment;
    d.split = split;
    d.config_hash = data_hash(config);
    d.seed = config.seed;
    d.config = data_config_json(config);
    d.inputs = Tensor(with_batch(count, config.observation_shape()));
    d.truths = Tensor({count, n});
    d.noise.assign(count, 0.0);
    d.label.assign(count, kNaN);
    d.opt_error.assign(count, kNaN);
    if (config.experiment == ExperimentKind::deblur_star) d.gamma.assign(count, kNaN);
    std::vector<char> failed(count, 0);

    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t j = 0; j < count; ++j) {
        try {
            RngStream stream = RngStream::substream(config.seed, stream_offset(split) + j);
            const GroundTruthSample s = problem.draw(stream);
            std::copy(s.b.begin(), s.b.end(), d.inputs.values().begin() + static_cast<std::ptrdiff_t>(j * m));
            std::copy(s.x_true.begin(), s.x_true.end(),
                      d.truths.values().begin() + static_cast<std::ptrdiff_t>(j * n));
            d.noise[j] = s.noise;
            if (!d.gamma.empty()) d.gamma[j] = s.gamma;
            try {
                const OracleLabel label = problem.oracle(s);
                d.label[j] = label.parameter;
                d.opt_error[j] = label.error;
            } catch (const OracleFailure&) {
                failed[j] = 1;
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    d.failed.assign(failed.begin(), failed.end());
    return d;
}

// ---- files --------------------------------------------------------------------

void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::size_t count = d.size();
    Vector failed(count);
    for (std::size_t j = 0; j < count; ++j) failed[j] = d.failed[j] ? 1.0 : 0.0;

    std::vector<std::pair<std::string, Tensor>> arrays{
        {"inputs", d.inputs},
        {"truths", d.truths},
        {"noise", Tensor({count}, d.noise)},
        {"label", Tensor({count}, d.label)},
        {"opt_error", Tensor({count}, d.opt_error)},
        {"failed", Tensor({count}, failed)},
    };
    if (!d.gamma.empty()) arrays.emplace_back("gamma", Tensor({count}, d.gamma));

    Json files = Json::object();
    for (const auto& [name, t] : arrays) {
        const std::string file = name + ".rgln";
        write_tensor(t, dir / file);
        files[name] = {{"file", file}, {"shape", t.shape()}};
    }
    const Json manifest{{"format", kManifestFormat},
                        {"version", kManifestVersion},
                        {"experiment", std::string(to_string(d.experiment))},
                        {"split", std::string(to_string(d.split))},
                        {"config_hash", d.config_hash},
                        {"seed", d.seed},
                        {"stream_offset", stream_offset(d.split)},
                        {"count", count},
                        {"failed", d.failed_count()},
                        {"config", d.config},
                        {"files", files}};
    write_json_file(manifest, dir / "manifest.json");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const Json m = read_json_file(dir / "manifest.json");
    const std::string ctx = (dir / "manifest.json").string();
    require_known_keys(m, {"format", "version", "experiment", "split", "config_hash", "seed", "stream_offset",
                           "count", "failed", "config", "files"},
                       ctx);
    if (m.value("format", "") != kManifestFormat) throw std::invalid_argument(ctx + ": not a dataset manifest");
    if (m.at("version").get<int>() != kManifestVersion)
        throw std::invalid_argument(ctx + ": unsupported manifest version");

    Dataset d;
    d.experiment = experiment_kind_from_string(m.at("experiment").get<std::string>());
    d.split = split_from_string(m.at("split").get<std::string>());
    d.config_hash = m.at("config_hash").get<std::string>();
    d.seed = m.at("seed").get<std::uint64_t>();
    d.config = m.at("config");
    if (m.at("stream_offset").get<std::uint64_t>() != stream_offset(d.split))
        throw std::invalid_argument(ctx + ": stream_offset does not match the split");
    const auto count = m.at("count").get<std::size_t>();

    const Json& files = m.at("files");
    auto load = [&](const std::string& name, bool required) -> std::optional<Tensor> {
        if (!files.contains(name)) {
            if (required) throw std::invalid_argument(ctx + ": missing file entry '" + name + "'");
            return std::nullopt;
        }
        Tensor t = read_tensor(dir / files.at(name).at("file").get<std::string>());
        if (t.shape() != files.at(name).at("shape").get<Shape>())
            throw std::invalid_argument(ctx + ": shape of '" + name + "' differs from the manifest");
        if (t.rank() == 0 || t.shape()[0] != count)
            throw std::invalid_argument(ctx + ": '" + name + "' does not hold " + std::to_string(count) + " samples");
        return t;
    };
    d.inputs = *load("inputs", true);
    d.truths = *load("truths", true);
    d.noise = load("noise", true)->values();
    d.label = load("label", true)->values();
    d.opt_error = load("opt_error", true)->values();
    const Vector failed = load("failed", true)->values();
    d.failed.resize(count);
    for (std::size_t j = 0; j < count; ++j) d.failed[j] = failed[j] != 0.0;
    if (auto g = load("gamma", false)) d.gamma = g->values();
    return d;
}

void check_dataset(const Dataset& d, const ExperimentConfig& config, Split split) {
    if (d.split != split)
        throw DatasetMismatch("dataset holds the " + std::string(to_string(d.split)) + " split, expected " +
                              std::string(to_string(split)));
    const std::string expected = data_hash(config);
    if (d.config_hash != expected)
        throw DatasetMismatch("dataset was generated from a different config (hash " + d.config_hash +
                              ", config hash " + expected + ")");
    const std::size_t count = split == Split::train ? config.j_train : config.j_val;
    if (d.size() != count) throw DatasetMismatch("dataset size differs from the config");
}

}  // namespace reglearn
