// Command-line front end: generate -> train -> evaluate, plus the single
// observation online phase (solve), gradient checks and report printing.

#include "reglearn/nnet/gradcheck.hpp"
#include "reglearn/pipeline/online.hpp"
#include "reglearn/pipeline/tensor_io.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

using namespace reglearn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr double kGradcheckTolerance = 1e-6;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
    bool quiet = false;
};

class Log {
public:
    explicit Log(bool quiet) : quiet_(quiet), start_(std::chrono::steady_clock::now()) {}

    template <typename... Args>
    void operator()(const char* fmt, Args... args) const {
        if (quiet_) return;
        const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::fprintf(stderr, "[%7.1fs] ", t);
        if constexpr (sizeof...(Args) == 0)
            std::fputs(fmt, stderr);
        else
            std::fprintf(stderr, fmt, args...);
        std::fputc('\n', stderr);
    }

private:
    bool quiet_;
    std::chrono::steady_clock::time_point start_;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
    ExperimentConfig c = load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    return c;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required = true) {
    auto* cfg = cmd->add_option("--config", o.config, "Experiment config (JSON)");
    if (config_required) cfg->required();
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--threads", o.threads, "Worker threads (default: available parallelism)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "Override the output directory");
    cmd->add_flag("--quiet", o.quiet, "No progress output on stderr");
}

// ---- subcommands ----------------------------------------------------------------

void cmd_generate(const CommonOptions& o) {
    const Log log(o.quiet);
    const ExperimentConfig c = resolve_config(o);
    const std::filesystem::path out = c.output_dir;
    log("generate %s: %zu train + %zu validation samples, hash %s", std::string(to_string(c.experiment)).c_str(),
        c.j_train, c.j_val, data_hash(c).c_str());
    for (Split s : {Split::train, Split::validation}) {
        const Dataset d = generate_dataset(c, s);
        write_dataset(d, dataset_dir(out, s));
        log("  %s: %zu samples, %zu oracle failures -> %s", std::string(to_string(s)).c_str(), d.size(),
            d.failed_count(), dataset_dir(out, s).string().c_str());
    }
}

void cmd_train(const CommonOptions& o) {
    const Log log(o.quiet);
    const ExperimentConfig c = resolve_config(o);
    const std::filesystem::path out = c.output_dir;
    const Dataset d = read_dataset(dataset_dir(out, Split::train));
    log("train %s on %zu samples", std::string(to_string(c.experiment)).c_str(), d.size());
    const OfflineArtifacts a = run_offline(c, d);
    write_offline(a, model_dir(out));
    for (const auto& [stage, h] : a.checkpoint.history)
        log("  %s: %zu epochs, loss %.4g -> %.4g", stage.c_str(), h.size(), h.front(), h.back());
    if (a.excluded) log("  %zu samples excluded for failed oracle labels", a.excluded);
    if (a.oed) log("  lambda_oed = %.6g", a.oed->value);
    log("  artifacts -> %s", model_dir(out).string().c_str());
}

void cmd_evaluate(const CommonOptions& o) {
    const Log log(o.quiet);
    const ExperimentConfig c = resolve_config(o);
    const std::filesystem::path out = c.output_dir;
    const Dataset d = read_dataset(dataset_dir(out, Split::validation));
    const OfflineArtifacts a = read_offline(model_dir(out));
    log("evaluate %s on %zu validation samples", std::string(to_string(c.experiment)).c_str(), d.size());
    const EvaluationReport r = run_online(c, a, d);
    write_report(r, report_dir(out));
    log("  report -> %s", report_dir(out).string().c_str());
}

void cmd_solve(const CommonOptions& o, const std::string& input, const std::optional<std::string>& checkpoint,
               const std::optional<std::string>& output) {
    const Log log(o.quiet);
    const ExperimentConfig c = resolve_config(o);
    const std::filesystem::path out = c.output_dir;
    const Checkpoint ck = load_checkpoint(checkpoint ? std::filesystem::path(*checkpoint)
                                                     : model_dir(out) / "checkpoint.json");
    const Tensor b = read_tensor(input);
    const SolveResult r = solve_observation(c, ck, b.values());
    const std::filesystem::path dest = output ? std::filesystem::path(*output) : out / "solve" / "reconstruction.rgln";
    Shape shape{c.unknown_size()};
    if (c.experiment != ExperimentKind::heat) shape = {c.problem.side, c.problem.side};
    write_tensor(Tensor(shape, r.reconstruction), dest);
    std::cout << parameter_head(c.experiment) << ' ' << format_double(r.parameter) << '\n';
    if (r.gamma) std::cout << "gamma " << format_double(*r.gamma) << '\n';
    log("reconstruction -> %s", dest.string().c_str());
}

bool cmd_gradcheck(const CommonOptions& o, std::size_t coordinates, std::size_t batch) {
    const ExperimentConfig c = resolve_config(o);
    const Network net(c.network);
    RngStream stream(training_seed(c.seed));
    const Vector theta = net.initial_parameters(stream);
    Shape shape{batch};
    shape.insert(shape.end(), c.network.input_shape.begin(), c.network.input_shape.end());
    Tensor x(shape);
    for (double& v : x.values()) v = rng_normal(stream, 0.0, 1.0);
    // Running statistics from one train-mode pass, so eval mode is not trivial.
    Vector buffers = net.initial_buffers();
    RngStream drop(stream.next_u64());
    net.update_running_stats(net.forward(theta, buffers, x, Mode::train, &drop).cache, buffers, 0.5);

    std::cout << "network: " << net.parameter_count() << " parameters\n";
    bool ok = true;
    for (Mode mode : {Mode::train, Mode::eval}) {
        GradcheckOptions g;
        g.mode = mode;
        g.coordinates = coordinates;
        g.seed = c.seed;
        const auto r = gradient_check(net, theta, buffers, x, g);
        const bool pass = r.max_relative_error < kGradcheckTolerance;
        ok = ok && pass;
        std::cout << (mode == Mode::train ? "train" : "eval") << ": max relative error "
                  << format_double(r.max_relative_error) << " over " << r.checked << " coordinates ("
                  << r.skipped << " skipped at kinks) " << (pass ? "PASS" : "FAIL") << '\n';
    }
    return ok;
}

void print_stats_row(const std::string& label, const Json& s) {
    auto get = [&](const char* k) { return s.at(k).is_null() ? std::nan("") : s.at(k).get<double>(); };
    std::printf("  %-6s %12.5g %12.5g %12.5g %12.5g\n", label.c_str(), get("mean"), get("median"), get("q25"),
                get("q75"));
}

void cmd_report(const CommonOptions& o, const std::optional<std::string>& dir) {
    std::filesystem::path path;
    if (dir) {
        path = *dir;
    } else if (!o.config.empty()) {
        path = report_dir(resolve_config(o).output_dir);
    } else if (o.out) {
        path = report_dir(*o.out);
    } else {
        throw CLI::ValidationError("report", "need --report, --config or --out");
    }
    const EvaluationReport r = read_report(path);
    const Json s = summary_json(r);
    std::printf("%s: %zu validation samples, %zu excluded\n", std::string(to_string(r.experiment)).c_str(),
                r.rows.size(), r.excluded.size());
    for (const char* what : {"error_l2", "error_l1", "parameter"}) {
        if (std::string(what) == "error_l1" && !r.has_l1) continue;
        std::printf("\n%s\n  %-6s %12s %12s %12s %12s\n", what, "method", "mean", "median", "q25", "q75");
        for (const auto& m : r.methods) print_stats_row(m, s.at("methods").at(m).at(what));
    }
    std::printf("\ndp failures: %zu\nsuboptimal oracle samples: %zu\n", s.at("dp_failed").get<std::size_t>(),
                s.at("oracle_suboptimal").get<std::size_t>());
    if (s.contains("gamma_correlation") && !s.at("gamma_correlation").is_null())
        std::printf("gamma correlation: %.4f\n", s.at("gamma_correlation").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning regularization parameters for inverse problems"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    CommonOptions o;
    auto* gen = app.add_subcommand("generate", "Generate training and validation datasets with oracle labels");
    add_common(gen, o);
    auto* tr = app.add_subcommand("train", "Offline phase: train the network (and ELM/OED baselines)");
    add_common(tr, o);
    auto* ev = app.add_subcommand("evaluate", "Online phase on the validation set; writes the report");
    add_common(ev, o);
    auto* so = app.add_subcommand("solve", "Predict the parameter for one observation and reconstruct");
    add_common(so, o);
    std::string input;
    std::optional<std::string> checkpoint, output;
    so->add_option("--input", input, "Observation (RGLN tensor file)")->required()->check(CLI::ExistingFile);
    so->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/model/checkpoint.json)");
    so->add_option("--output", output, "Reconstruction file (default: <out>/solve/reconstruction.rgln)");
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the configured network's gradients");
    add_common(gc, o);
    std::size_t coordinates = 200, batch = 4;
    gc->add_option("--coordinates", coordinates, "Sampled parameter coordinates per mode")->check(CLI::PositiveNumber);
    gc->add_option("--batch", batch, "Batch size of the random input")->check(CLI::PositiveNumber);
    auto* rp = app.add_subcommand("report", "Print summary tables of an evaluation report");
    add_common(rp, o, false);
    std::optional<std::string> report_path;
    rp->add_option("--report", report_path, "Report directory (default: <out>/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (o.threads) omp_set_num_threads(*o.threads);
    try {
        if (*gen) cmd_generate(o);
        if (*tr) cmd_train(o);
        if (*ev) cmd_evaluate(o);
        if (*so) cmd_solve(o, input, checkpoint, output);
        if (*gc && !cmd_gradcheck(o, coordinates, batch)) return kExitRuntime;
        if (*rp) cmd_report(o, report_path);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: training diverged: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const DatasetMismatch& e) {
        std::cerr << "error: config/dataset mismatch: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
