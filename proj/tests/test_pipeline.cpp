#include "reglearn/forward/operators.hpp"
#include "reglearn/pipeline/online.hpp"
#include "reglearn/pipeline/tensor_io.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <omp.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

using namespace reglearn;
using namespace reglearn::testing;
namespace fs = std::filesystem;

namespace {

fs::path config_path(const std::string& name) { return fs::path(REGLEARN_SOURCE_DIR) / "configs" / name; }

Json config_json(const std::string& name) { return read_json_file(config_path(name)); }

// Fresh scratch directory, removed on scope exit.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("reglearn_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file below dir, keyed by relative path.
std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = file_bytes(e.path());
    return out;
}

ExperimentConfig small_heat(std::size_t train, std::size_t val, std::uint64_t seed = 5) {
    Json j = config_json("heat_toy.json");
    j["samples"] = {{"train", train}, {"validation", val}};
    j["seed"] = seed;
    return config_from_json(j);
}

class ThreadCount {
public:
    explicit ThreadCount(int n) : saved_(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadCount() { omp_set_num_threads(saved_); }

private:
    int saved_;
};

}  // namespace

// ---- config ---------------------------------------------------------------------

TEST_CASE("every shipped config parses and validates") {
    for (const auto& e : fs::directory_iterator(fs::path(REGLEARN_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        CAPTURE(e.path().filename().string());
        const ExperimentConfig c = load_config(e.path());
        CHECK_NOTHROW(c.validate());
        CHECK(c.network.input_shape == c.observation_shape());
        // Canonical form is a fixed point of parse -> serialize.
        CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
    }
}

TEST_CASE("config parsing is strict") {
    const Json base = config_json("heat_toy.json");

    SUBCASE("unknown top-level key") {
        Json j = base;
        j["epochs"] = 3;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("unknown nested key") {
        Json j = base;
        j["training"]["learning_rate"] = 0.1;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("problem key of another experiment") {
        Json j = base;
        j["problem"]["side"] = 32;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("wrong version") {
        Json j = base;
        j["version"] = 2;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("network is required") {
        Json j = base;
        j.erase("network");
        CHECK_THROWS(config_from_json(j));
    }
    SUBCASE("network input must match the observation") {
        Json j = base;
        j["problem"]["n"] = 80;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("heads must be the experiment's") {
        Json j = base;
        j["network"]["heads"][0]["name"] = "k";
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("deblur needs a second stage") {
        Json j = config_json("deblur_star_toy.json");
        j.erase("stage2");
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("oed is heat only") {
        Json j = config_json("diffusion_toy.json");
        j["oed"] = true;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
}

TEST_CASE("data hash covers data fields only") {
    const Json base = config_json("heat_toy.json");
    const std::string h = data_hash(config_from_json(base));
    CHECK(h.size() == 32);

    Json j = base;
    j["training"]["epochs"] = 99;
    j["output_dir"] = "elsewhere";
    j["elm"] = false;
    CHECK(data_hash(config_from_json(j)) == h);

    for (const char* field : {"seed", "noise", "samples", "search", "problem"}) {
        CAPTURE(field);
        Json k = base;
        if (std::string(field) == "seed") k["seed"] = 12;
        if (std::string(field) == "noise") k["noise"]["range"] = {1e-3, 2e-1};
        if (std::string(field) == "samples") k["samples"]["train"] = 201;
        if (std::string(field) == "search") k["search"]["tol"] = 1e-3;
        if (std::string(field) == "problem") k["problem"]["kappa"] = 0.5;
        CHECK(data_hash(config_from_json(k)) != h);
    }
}

TEST_CASE("training seed differs from the experiment seed and is stable") {
    CHECK(training_seed(7) != 7);
    CHECK(training_seed(7) == training_seed(7));
    CHECK(training_seed(7) != training_seed(8));
}

// ---- tensor files ---------------------------------------------------------------

TEST_CASE("RGLN round trip preserves shape and bits") {
    ScratchDir dir("rgln");
    RngStream s(3);
    for (const Shape& shape : {Shape{5}, Shape{2, 3}, Shape{2, 1, 4, 3}, Shape{0, 7}}) {
        Tensor t(shape);
        for (double& v : t.values()) v = rng_normal(s, 0.0, 1e3);
        if (t.size() > 2) {
            t[0] = -0.0;
            t[1] = std::numeric_limits<double>::denorm_min();
        }
        const fs::path p = dir.path() / "sub" / "t.rgln";
        write_tensor(t, p);
        const Tensor u = read_tensor(p);
        CHECK(u.shape() == t.shape());
        REQUIRE(u.size() == t.size());
        CHECK(std::memcmp(u.data(), t.data(), t.size() * sizeof(double)) == 0);
        CHECK(fs::file_size(p) == 8 + 8 * shape.size() + 8 * t.size());
    }
}

TEST_CASE("RGLN header layout") {
    ScratchDir dir("rgln_hdr");
    const fs::path p = dir.path() / "t.rgln";
    write_tensor(Tensor({2, 3}, Vector{1, 2, 3, 4, 5, 6}), p);
    const std::string b = file_bytes(p);
    REQUIRE(b.size() == 8 + 16 + 48);
    CHECK(b.substr(0, 4) == "RGLN");
    CHECK(static_cast<unsigned char>(b[4]) == 1);  // version, little-endian u16
    CHECK(static_cast<unsigned char>(b[5]) == 0);
    CHECK(static_cast<unsigned char>(b[6]) == 0);  // dtype f64
    CHECK(static_cast<unsigned char>(b[7]) == 2);  // rank
    CHECK(static_cast<unsigned char>(b[8]) == 2);
    CHECK(static_cast<unsigned char>(b[16]) == 3);
    double first = 0.0;
    std::memcpy(&first, b.data() + 24, 8);
    CHECK(first == 1.0);
}

TEST_CASE("RGLN rejects malformed files") {
    ScratchDir dir("rgln_bad");
    const fs::path good = dir.path() / "good.rgln";
    write_tensor(Tensor({3}, Vector{1, 2, 3}), good);
    const std::string bytes = file_bytes(good);
    auto write_raw = [&](const std::string& name, const std::string& content) {
        const fs::path p = dir.path() / name;
        std::ofstream(p, std::ios::binary) << content;
        return p;
    };

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(read_tensor(write_raw("magic", bad_magic)), TensorFileError);

    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(read_tensor(write_raw("version", bad_version)), TensorFileError);

    std::string bad_dtype = bytes;
    bad_dtype[6] = 1;
    CHECK_THROWS_AS(read_tensor(write_raw("dtype", bad_dtype)), TensorFileError);

    CHECK_THROWS_AS(read_tensor(write_raw("short", bytes.substr(0, bytes.size() - 3))), TensorFileError);
    CHECK_THROWS_AS(read_tensor(write_raw("header", bytes.substr(0, 6))), TensorFileError);
    CHECK_THROWS_AS(read_tensor(write_raw("trailing", bytes + "x")), TensorFileError);
    CHECK_THROWS(read_tensor(dir.path() / "missing.rgln"));
}

// ---- datasets -------------------------------------------------------------------

TEST_CASE("dataset files are identical across thread counts") {
    ScratchDir dir("determinism");
    const ExperimentConfig c = small_heat(24, 8);
    std::map<std::string, std::string> runs[2];
    for (int i = 0; i < 2; ++i) {
        const ThreadCount threads(i == 0 ? 1 : 3);
        const fs::path out = dir.path() / std::to_string(i);
        for (Split s : {Split::train, Split::validation}) write_dataset(generate_dataset(c, s), dataset_dir(out, s));
        runs[i] = tree_bytes(out);
    }
    CHECK(runs[0].size() == 2 * 7);  // manifest plus six tensors per split
    CHECK(runs[0] == runs[1]);
}

TEST_CASE("train and validation splits are disjoint draws") {
    const ExperimentConfig c = small_heat(16, 16);
    const Dataset tr = generate_dataset(c, Split::train);
    const Dataset va = generate_dataset(c, Split::validation);
    std::set<double> seen;
    for (std::size_t j = 0; j < tr.size(); ++j) seen.insert(tr.noise[j]);
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(seen.count(va.noise[j]) == 0);
    CHECK(tr.inputs.values() != va.inputs.values());

    // A prefix of a larger split is the smaller split.
    const Dataset more = generate_dataset(small_heat(20, 16), Split::train);
    for (std::size_t j = 0; j < tr.size(); ++j) {
        CHECK(more.noise[j] == tr.noise[j]);
        CHECK(more.label[j] == tr.label[j]);
    }
}

TEST_CASE("dataset round trip through files") {
    ScratchDir dir("dataset_io");
    const ExperimentConfig c = small_heat(6, 3);
    const Dataset d = generate_dataset(c, Split::validation);
    write_dataset(d, dir.path());
    const Dataset e = read_dataset(dir.path());
    CHECK(e.experiment == d.experiment);
    CHECK(e.split == Split::validation);
    CHECK(e.config_hash == data_hash(c));
    CHECK(e.inputs.values() == d.inputs.values());
    CHECK(e.truths.values() == d.truths.values());
    CHECK(e.label == d.label);
    CHECK(e.opt_error == d.opt_error);
    CHECK(e.failed == d.failed);
    CHECK_NOTHROW(check_dataset(e, c, Split::validation));

    const Json manifest = read_json_file(dir.path() / "manifest.json");
    CHECK(manifest.at("count") == 3);
    CHECK(manifest.at("files").at("inputs").at("shape") == Json::array({3, 100}));
}

TEST_CASE("heat oracle label minimizes the reconstruction error") {
    const ExperimentConfig c = small_heat(20, 1);
    const Dataset d = generate_dataset(c, Split::train);
    const DenseMatrix a = heat_operator(c.problem.n, c.problem.kappa).materialize();
    auto error_at = [&](std::size_t j, double lambda) {
        const Vector x = normal_equations_solve(a, d.inputs.sample(j), lambda * lambda);
        return rel_diff(x, d.truths.sample(j));
    };
    for (std::size_t j = 0; j < d.size(); ++j) {
        CAPTURE(j);
        REQUIRE_FALSE(d.failed[j]);
        const double l = d.label[j];
        const double e = error_at(j, l);
        CHECK(d.opt_error[j] == doctest::Approx(e).epsilon(1e-8));
        for (double step : {0.02, 0.2})
            for (double dir : {-1.0, 1.0}) CHECK(e <= error_at(j, l * std::pow(10.0, dir * step)) * (1 + 1e-9));
    }
}

TEST_CASE("diffusion labels are the best iterate") {
    Json j = config_json("diffusion_toy.json");
    j["samples"] = {{"train", 4}, {"validation", 1}};
    const ExperimentConfig c = config_from_json(j);
    const Dataset d = generate_dataset(c, Split::train);
    const ExperimentProblem problem(c);
    for (std::size_t s = 0; s < d.size(); ++s) {
        const auto h = problem.iterate(d.inputs.sample(s), d.truths.sample(s));
        const double k = d.label[s];
        CHECK(k == std::round(k));
        REQUIRE(k >= 1);
        REQUIRE(k <= static_cast<double>(h.size()));
        double best = std::numeric_limits<double>::infinity();
        for (const auto& x : h.iterates) best = std::min(best, rel_diff(x, d.truths.sample(s)));
        CHECK(d.opt_error[s] == doctest::Approx(best).epsilon(1e-12));
        CHECK(rel_diff(h.iterates[static_cast<std::size_t>(k) - 1], d.truths.sample(s)) == best);
    }
}

TEST_CASE("mismatched config and dataset are refused") {
    const ExperimentConfig c = small_heat(4, 2);
    const Dataset tr = generate_dataset(c, Split::train);
    CHECK_NOTHROW(check_dataset(tr, c, Split::train));
    CHECK_THROWS_AS(check_dataset(tr, c, Split::validation), DatasetMismatch);
    CHECK_THROWS_AS(check_dataset(tr, small_heat(4, 2, 6), Split::train), DatasetMismatch);
    CHECK_THROWS_AS(check_dataset(tr, small_heat(5, 2), Split::train), DatasetMismatch);
    CHECK_THROWS_AS(run_offline(small_heat(4, 2, 6), tr), DatasetMismatch);
}

// ---- offline and online phases --------------------------------------------------

TEST_CASE("offline phase on the heat toy") {
    const ExperimentConfig c = small_heat(60, 10);
    const Dataset tr = generate_dataset(c, Split::train);
    const OfflineArtifacts a = run_offline(c, tr);
    CHECK(a.excluded == 0);
    REQUIRE(a.checkpoint.history.count("loss"));
    CHECK(a.checkpoint.history.at("loss").size() == c.training.epochs);
    REQUIRE(a.elm);
    REQUIRE(a.oed);
    CHECK(a.oed->value > 0.0);

    ScratchDir dir("offline");
    write_offline(a, dir.path());
    for (const char* f : {"checkpoint.json", "elm.json", "oed.json"}) CHECK(fs::exists(dir.path() / f));
    const OfflineArtifacts b = read_offline(dir.path());
    CHECK(b.checkpoint.theta == a.checkpoint.theta);
    CHECK(b.oed->value == a.oed->value);
    CHECK(b.elm->predict(tr.inputs.sample(3)) == a.elm->predict(tr.inputs.sample(3)));

    // Retraining from the same data is bitwise reproducible.
    CHECK(run_offline(c, tr).checkpoint.theta == a.checkpoint.theta);
}

TEST_CASE("OED on a single training sample recovers its oracle lambda") {
    Json j = config_json("heat_toy.json");
    j["samples"] = {{"train", 1}, {"validation", 1}};
    j["training"]["epochs"] = 1;
    j["elm"] = false;
    const ExperimentConfig c = config_from_json(j);
    const Dataset tr = generate_dataset(c, Split::train);
    const OfflineArtifacts a = run_offline(c, tr);
    REQUIRE(a.oed);
    // Both are golden-section minima of the same function; OED minimizes the
    // squared error, the oracle the error itself.
    CHECK(std::abs(std::log10(a.oed->value) - std::log10(tr.label[0])) < 1e-3);
}

TEST_CASE("online phase on the heat toy") {
    const ExperimentConfig c = small_heat(60, 12);
    const Dataset tr = generate_dataset(c, Split::train);
    const Dataset va = generate_dataset(c, Split::validation);
    const OfflineArtifacts a = run_offline(c, tr);
    const EvaluationReport r = run_online(c, a, va);

    CHECK(r.methods == std::vector<std::string>{"opt", "dnn", "elm", "gcv", "upre", "dp", "oed"});
    REQUIRE(r.rows.size() == va.size());
    const auto opt_err = r.error_column("opt");
    const auto opt_par = r.parameter_column("opt");
    for (std::size_t j = 0; j < va.size(); ++j) {
        CHECK(opt_err[j] == doctest::Approx(va.opt_error[j]).epsilon(1e-12));
        CHECK(opt_par[j] == va.label[j]);
        CHECK(r.rows[j].noise == va.noise[j]);
    }

    // dnn column uses the checkpoint prediction.
    const auto pred = predict(a.checkpoint, va.inputs);
    const auto dnn = r.parameter_column("dnn");
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(dnn[j] == pred.at("lambda").values[j]);

    // Every OED entry is the single offline lambda.
    for (double l : r.parameter_column("oed")) CHECK(l == a.oed->value);

    // Independent thread count gives the same report.
    const ThreadCount threads(3);
    const EvaluationReport r3 = run_online(c, a, va);
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(r3.rows[j].error_l2 == r.rows[j].error_l2);
}

TEST_CASE("online phase refuses a foreign checkpoint") {
    const ExperimentConfig c = small_heat(20, 4);
    const Dataset tr = generate_dataset(c, Split::train);
    const Dataset va = generate_dataset(c, Split::validation);
    OfflineArtifacts a = run_offline(c, tr);
    a.checkpoint.spec = fully_connected_spec({100, 10, 1}, "lambda", TargetTransform::log10);
    CHECK_THROWS_AS(run_online(c, a, va), DatasetMismatch);
    CHECK_THROWS_AS(run_online(c, run_offline(c, tr), tr), DatasetMismatch);
}

TEST_CASE("single-observation solve agrees with the report") {
    const ExperimentConfig c = small_heat(40, 5);
    const Dataset tr = generate_dataset(c, Split::train);
    const Dataset va = generate_dataset(c, Split::validation);
    const OfflineArtifacts a = run_offline(c, tr);
    const EvaluationReport r = run_online(c, a, va);
    const std::size_t dnn = r.method_index("dnn");
    for (std::size_t j = 0; j < va.size(); ++j) {
        const SolveResult s = solve_observation(c, a.checkpoint, va.inputs.sample(j));
        CHECK(s.parameter == doctest::Approx(r.rows[j].parameter[dnn]).epsilon(1e-12));
        CHECK(rel_diff(s.reconstruction, va.truths.sample(j)) ==
              doctest::Approx(r.rows[j].error_l2[dnn]).epsilon(1e-10));
    }
    CHECK_THROWS_AS(solve_observation(c, a.checkpoint, Vector(99, 1.0)), std::invalid_argument);
}

// ---- reports --------------------------------------------------------------------

TEST_CASE("type-7 quantiles and summaries") {
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile({7}, 0.9) == 7);
    CHECK(std::isnan(quantile({}, 0.5)));
    const Vector v{3, std::nan(""), 1, 2, std::numeric_limits<double>::infinity()};
    const SummaryStats s = summarize(v);
    CHECK(s.count == 3);
    CHECK(s.median == 2);
    CHECK(s.mean == 2);
    CHECK(s.min == 1);
    CHECK(s.max == 3);
    CHECK(pearson_correlation(Vector{1, 2, 3}, Vector{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson_correlation(Vector{1, 2, 3}, Vector{3, 2, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("format_double round-trips") {
    RngStream s(9);
    for (int i = 0; i < 200; ++i) {
        const double v = rng_normal(s, 0.0, 1.0) * std::pow(10.0, rng_uniform(s, -300.0, 300.0));
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("report files round trip") {
    EvaluationReport r;
    r.experiment = ExperimentKind::deblur_star;
    r.config_hash = "abc";
    r.methods = {"opt", "dnn"};
    r.has_l1 = true;
    r.has_gamma = true;
    r.excluded = {4};
    RngStream s(1);
    for (std::size_t j = 0; j < 9; ++j) {
        ReportRow row;
        row.sample = j < 4 ? j : j + 1;
        row.noise = rng_uniform(s, 0.0, 0.05);
        row.parameter = {rng_uniform(s, 0.0, 1.0), j == 2 ? std::nan("") : 0.1 / 3.0};
        row.error_l2 = {rng_uniform(s, 0.0, 1.0), rng_uniform(s, 0.0, 1.0)};
        row.error_l1 = {rng_uniform(s, 0.0, 1.0), rng_uniform(s, 0.0, 1.0)};
        row.gamma_true = rng_uniform(s, 1.25, 2.5);
        row.gamma_dnn = row.gamma_true + rng_normal(s, 0.0, 0.1);
        row.dp_failed = j == 3;
        row.oracle_suboptimal = j == 5;
        r.rows.push_back(row);
    }
    ScratchDir dir("report");
    write_report(r, dir.path());
    const EvaluationReport q = read_report(dir.path());
    CHECK(q.methods == r.methods);
    CHECK(q.has_l1);
    CHECK(q.has_gamma);
    CHECK(q.excluded == r.excluded);
    REQUIRE(q.rows.size() == r.rows.size());
    for (std::size_t j = 0; j < r.rows.size(); ++j) {
        CHECK(q.rows[j].sample == r.rows[j].sample);
        CHECK(q.rows[j].noise == r.rows[j].noise);
        CHECK(q.rows[j].error_l2 == r.rows[j].error_l2);
        CHECK(q.rows[j].error_l1 == r.rows[j].error_l1);
        CHECK(q.rows[j].gamma_dnn == r.rows[j].gamma_dnn);
        CHECK(q.rows[j].dp_failed == r.rows[j].dp_failed);
        CHECK(q.rows[j].oracle_suboptimal == r.rows[j].oracle_suboptimal);
    }
    CHECK(std::isnan(q.rows[2].parameter[1]));

    // Summary medians recomputed from the CSV columns by sorting.
    const Json summary = read_json_file(dir.path() / "summary.json");
    CHECK(summary.at("count") == 9);
    CHECK(summary.at("dp_failed") == 1);
    CHECK(summary.at("oracle_suboptimal") == 1);
    for (std::size_t m = 0; m < 2; ++m) {
        Vector col;
        for (const auto& row : q.rows) col.push_back(row.error_l2[m]);
        std::sort(col.begin(), col.end());
        CHECK(summary.at("methods").at(r.methods[m]).at("error_l2").at("median").get<double>() == col[4]);
    }
    CHECK(summary.at("methods").at("dnn").at("parameter").at("count") == 8);

    const std::string header = file_bytes(dir.path() / "rows.csv").substr(0, 120);
    CHECK(header.rfind("sample,noise,param_opt,param_dnn,err_opt,err_dnn,l1err_opt,l1err_dnn,gamma_true,gamma_dnn,"
                       "dp_failed,oracle_suboptimal\n",
                       0) == 0);
}
