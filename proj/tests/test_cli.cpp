// Drives the reglearn executable end to end on the heat toy config.

#include "reglearn/pipeline/report.hpp"
#include "reglearn/pipeline/dataset.hpp"
#include "reglearn/pipeline/tensor_io.hpp"

#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace reglearn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

// Runs the CLI with stderr discarded; returns the exit code and stdout.
RunResult run(const std::string& args) {
    const std::string cmd = std::string(REGLEARN_CLI) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = file_bytes(e.path());
    return out;
}

const std::string kConfig = std::string(REGLEARN_SOURCE_DIR) + "/configs/heat_toy.json";

struct Scratch {
    fs::path root = fs::temp_directory_path() / ("reglearn_cli_" + std::to_string(::getpid()));
    Scratch() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
};

std::string pipeline_args(const fs::path& out, int threads) {
    return "--config " + kConfig + " --out " + out.string() + " --threads " + std::to_string(threads) + " --quiet";
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run("").code == 1);
    CHECK(run("frobnicate").code == 1);
    CHECK(run("generate").code == 1);                                 // missing --config
    CHECK(run("generate --config " + kConfig + " --bogus").code == 1);
    CHECK(run("generate --config " + kConfig + " --threads 0").code == 1);
    CHECK(run("solve --config " + kConfig + " --input /nonexistent.rgln").code == 1);
    CHECK(run("report").code == 1);
    CHECK(run("--help").code == 0);
}

TEST_CASE("runtime errors exit with 2") {
    Scratch s;
    CHECK(run("generate --config " + (s.root / "missing.json").string()).code == 2);
    const fs::path bad = s.root / "bad.json";
    std::ofstream(bad) << R"({"version": 1, "experiment": "heat", "colour": "blue"})";
    CHECK(run("generate --config " + bad.string()).code == 2);
    // Training before any data exists.
    CHECK(run("train " + pipeline_args(s.root / "empty", 1)).code == 2);
}

TEST_CASE("generate, train, evaluate, solve and report") {
    Scratch s;
    const fs::path a = s.root / "a";
    for (const char* cmd : {"generate", "train", "evaluate"}) {
        CAPTURE(cmd);
        REQUIRE(run(std::string(cmd) + " " + pipeline_args(a, 1)).code == 0);
    }
    CHECK(fs::exists(a / "data" / "train" / "manifest.json"));
    CHECK(fs::exists(a / "data" / "validation" / "inputs.rgln"));
    CHECK(fs::exists(a / "model" / "checkpoint.json"));
    CHECK(fs::exists(a / "report" / "rows.csv"));
    CHECK(fs::exists(a / "report" / "summary.json"));

    SUBCASE("rerun with another thread count is byte-identical") {
        const fs::path b = s.root / "b";
        for (const char* cmd : {"generate", "train", "evaluate"})
            REQUIRE(run(std::string(cmd) + " " + pipeline_args(b, 3)).code == 0);
        CHECK(tree_bytes(a) == tree_bytes(b));
    }

    SUBCASE("a different seed is refused against existing data") {
        CHECK(run("evaluate " + pipeline_args(a, 1) + " --seed 99").code == 2);
        CHECK(run("train " + pipeline_args(a, 1) + " --seed 99").code == 2);
    }

    SUBCASE("solve reproduces the report's dnn prediction") {
        const Dataset va = read_dataset(a / "data" / "validation");
        const EvaluationReport r = read_report(a / "report");
        const std::size_t dnn = r.method_index("dnn");
        for (std::size_t j : {std::size_t{0}, std::size_t{7}}) {
            const fs::path obs = s.root / ("obs" + std::to_string(j) + ".rgln");
            const auto b = va.inputs.sample(j);
            write_tensor(Tensor({b.size()}, Vector(b.begin(), b.end())), obs);
            const RunResult res = run("solve " + pipeline_args(a, 1) + " --input " + obs.string());
            REQUIRE(res.code == 0);
            std::istringstream in(res.out);
            std::string head;
            double lambda = 0.0;
            in >> head >> lambda;
            CHECK(head == "lambda");
            CHECK(lambda == doctest::Approx(r.rows[j].parameter[dnn]).epsilon(1e-12));
            const Tensor x = read_tensor(a / "solve" / "reconstruction.rgln");
            CHECK(x.size() == 100);
        }
        // Explicit checkpoint and output paths.
        const fs::path out = s.root / "x.rgln";
        CHECK(run("solve " + pipeline_args(a, 1) + " --input " + (s.root / "obs0.rgln").string() + " --checkpoint " +
                  (a / "model" / "checkpoint.json").string() + " --output " + out.string())
                  .code == 0);
        CHECK(fs::exists(out));
        // Observation of the wrong size.
        write_tensor(Tensor({3}, Vector{1, 2, 3}), s.root / "short.rgln");
        CHECK(run("solve " + pipeline_args(a, 1) + " --input " + (s.root / "short.rgln").string()).code == 2);
    }

    SUBCASE("report prints tables") {
        const RunResult res = run("report --out " + a.string());
        CHECK(res.code == 0);
        CHECK(res.out.find("error_l2") != std::string::npos);
        CHECK(res.out.find("upre") != std::string::npos);
        CHECK(run("report --report " + (s.root / "nowhere").string()).code == 2);
    }
}

TEST_CASE("gradcheck passes for the heat architecture") {
    const RunResult res = run("gradcheck --config " + kConfig + " --quiet");
    CHECK(res.code == 0);
    CHECK(res.out.find("train: max relative error") != std::string::npos);
    CHECK(res.out.find("eval: max relative error") != std::string::npos);
    CHECK(res.out.find("FAIL") == std::string::npos);
}
