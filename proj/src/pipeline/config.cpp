#include "reglearn/pipeline/config.hpp"

#include <sodium.h>

#include <array>
#include <cstdio>

namespace reglearn {

std::string_view to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::heat: return "heat";
        case ExperimentKind::tomography: return "tomography";
        case ExperimentKind::deblur_star: return "deblur_star";
        case ExperimentKind::diffusion: return "diffusion";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(std::string_view s) {
    for (auto k : {ExperimentKind::heat, ExperimentKind::tomography, ExperimentKind::deblur_star,
                   ExperimentKind::diffusion})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown experiment '" + std::string(s) + "'");
}

namespace {

std::string_view to_string(NoiseMode m) { return m == NoiseMode::variance ? "variance" : "relative_level"; }

NoiseMode noise_mode_from_string(const std::string& s) {
    if (s == "variance") return NoiseMode::variance;
    if (s == "relative_level") return NoiseMode::relative_level;
    throw std::invalid_argument("noise.mode: expected 'variance' or 'relative_level', got '" + s + "'");
}

std::array<double, 2> read_pair(const Json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument(ctx + ": expected [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

// Experiment-specific defaults applied before the JSON is read.
ExperimentConfig defaults_for(ExperimentKind k) {
    ExperimentConfig c;
    c.experiment = k;
    switch (k) {
        case ExperimentKind::heat:
            c.noise = {NoiseMode::variance, 1e-3, 1e-1};
            c.j_train = 2000;
            c.j_val = 500;
            c.search.interval = {-6.0, 2.0};
            c.elm.enabled = true;
            c.oed = true;
            break;
        case ExperimentKind::tomography:
            c.problem.side = 32;
            c.noise = {NoiseMode::relative_level, 1e-3, 5e-2};
            c.j_train = 800;
            c.j_val = 200;
            c.search.interval = {-6.0, 1.0};
            c.search.log_tol = 1e-2;
            break;
        case ExperimentKind::deblur_star:
            c.problem.side = 64;
            c.noise = {NoiseMode::relative_level, 1e-3, 5e-2};
            c.j_train = 1200;
            c.j_val = 300;
            c.search.interval = {-6.0, 1.0};
            c.search.log_tol = 1e-2;
            break;
        case ExperimentKind::diffusion:
            c.problem.side = 28;
            c.noise = {NoiseMode::relative_level, 1e-5, 0.5};
            c.j_train = 1500;
            c.j_val = 250;
            break;
    }
    return c;
}

void read_problem(const Json& j, ExperimentConfig& c) {
    auto& p = c.problem;
    const std::string ctx = "problem";
    switch (c.experiment) {
        case ExperimentKind::heat:
            require_known_keys(j, {"n", "kappa"}, ctx);
            p.n = j.value("n", p.n);
            p.kappa = j.value("kappa", p.kappa);
            break;
        case ExperimentKind::tomography:
            require_known_keys(j, {"side", "angles", "rays"}, ctx);
            p.side = j.value("side", p.side);
            p.n_angles = j.value("angles", p.n_angles);
            p.n_rays = j.value("rays", p.n_rays);
            break;
        case ExperimentKind::deblur_star:
            require_known_keys(j, {"side", "blur_sigma", "stencil", "gamma", "r0", "c", "n_terms"}, ctx);
            p.side = j.value("side", p.side);
            p.blur_sigma = j.value("blur_sigma", p.blur_sigma);
            p.stencil = j.value("stencil", p.stencil);
            if (j.contains("gamma")) {
                const auto g = read_pair(j.at("gamma"), "problem.gamma");
                p.gamma_lo = g[0];
                p.gamma_hi = g[1];
            }
            p.star.r0 = j.value("r0", p.star.r0);
            p.star.c = j.value("c", p.star.c);
            p.star.n_terms = j.value("n_terms", p.star.n_terms);
            break;
        case ExperimentKind::diffusion:
            require_known_keys(j, {"side", "t_final", "steps"}, ctx);
            p.side = j.value("side", p.side);
            p.t_final = j.value("t_final", p.t_final);
            p.n_steps = j.value("steps", p.n_steps);
            break;
    }
}

Json problem_to_json(const ExperimentConfig& c) {
    const auto& p = c.problem;
    switch (c.experiment) {
        case ExperimentKind::heat: return {{"n", p.n}, {"kappa", p.kappa}};
        case ExperimentKind::tomography: return {{"side", p.side}, {"angles", p.n_angles}, {"rays", p.n_rays}};
        case ExperimentKind::deblur_star:
            return {{"side", p.side},
                    {"blur_sigma", p.blur_sigma},
                    {"stencil", p.stencil},
                    {"gamma", {p.gamma_lo, p.gamma_hi}},
                    {"r0", p.star.r0},
                    {"c", p.star.c},
                    {"n_terms", p.star.n_terms}};
        case ExperimentKind::diffusion:
            return {{"side", p.side}, {"t_final", p.t_final}, {"steps", p.n_steps}};
    }
    return {};
}

void read_search(const Json& j, ExperimentConfig& c) {
    require_known_keys(j, {"log10_lambda", "tol", "split_bregman", "k_max", "dp_safety"}, "search");
    auto& s = c.search;
    if (j.contains("log10_lambda")) {
        const auto iv = read_pair(j.at("log10_lambda"), "search.log10_lambda");
        s.interval = {iv[0], iv[1]};
    }
    s.log_tol = j.value("tol", s.log_tol);
    s.k_max = j.value("k_max", s.k_max);
    s.dp_safety = j.value("dp_safety", s.dp_safety);
    if (j.contains("split_bregman")) {
        const Json& sb = j.at("split_bregman");
        require_known_keys(sb, {"mu", "outer_iters", "inner_cg_iters", "inner_cg_tol", "convergence_tol"},
                           "search.split_bregman");
        auto& o = s.split_bregman;
        if (sb.contains("mu") && !sb.at("mu").is_null()) o.mu = sb.at("mu").get<double>();
        o.outer_iters = sb.value("outer_iters", o.outer_iters);
        o.inner_cg_iters = sb.value("inner_cg_iters", o.inner_cg_iters);
        o.inner_cg_tol = sb.value("inner_cg_tol", o.inner_cg_tol);
        o.convergence_tol = sb.value("convergence_tol", o.convergence_tol);
    }
}

Json search_to_json(const ExperimentConfig& c) {
    const auto& s = c.search;
    Json j{{"log10_lambda", {s.interval.lo, s.interval.hi}}, {"tol", s.log_tol}};
    if (c.experiment == ExperimentKind::tomography || c.experiment == ExperimentKind::deblur_star) {
        const auto& o = s.split_bregman;
        j["split_bregman"] = {{"mu", o.mu ? Json(*o.mu) : Json(nullptr)},
                              {"outer_iters", o.outer_iters},
                              {"inner_cg_iters", o.inner_cg_iters},
                              {"inner_cg_tol", o.inner_cg_tol},
                              {"convergence_tol", o.convergence_tol}};
    }
    if (c.experiment == ExperimentKind::diffusion) {
        j = Json{{"k_max", s.k_max}, {"dp_safety", s.dp_safety}};
    }
    return j;
}

}  // namespace

// ---- training options -------------------------------------------------------

Json training_options_to_json(const TrainingOptions& t) {
    Json opt;
    if (const auto* a = std::get_if<AdamOptions>(&t.optimizer)) {
        opt = {{"type", "adam"}, {"learning_rate", a->lr}, {"beta1", a->beta1}, {"beta2", a->beta2},
               {"epsilon", a->epsilon}};
    } else {
        const auto& s = std::get<SgdMomentumOptions>(t.optimizer);
        opt = {{"type", "sgd_momentum"}, {"learning_rate", s.lr}, {"momentum", s.momentum}};
    }
    return {{"optimizer", opt},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"weight_decay", t.weight_decay},
            {"freeze", t.freeze},
            {"normalize_inputs", t.normalize_inputs},
            {"standardize_targets", t.standardize_targets}};
}

TrainingOptions training_options_from_json(const Json& j, std::string_view context) {
    const std::string ctx(context);
    require_known_keys(j, {"optimizer", "batch_size", "epochs", "weight_decay", "freeze", "normalize_inputs",
                           "standardize_targets"},
                       ctx);
    TrainingOptions t;
    if (j.contains("optimizer")) {
        const Json& o = j.at("optimizer");
        const std::string type = o.value("type", std::string("adam"));
        if (type == "adam") {
            require_known_keys(o, {"type", "learning_rate", "beta1", "beta2", "epsilon"}, ctx + ".optimizer");
            AdamOptions a;
            a.lr = o.value("learning_rate", a.lr);
            a.beta1 = o.value("beta1", a.beta1);
            a.beta2 = o.value("beta2", a.beta2);
            a.epsilon = o.value("epsilon", a.epsilon);
            t.optimizer = a;
        } else if (type == "sgd_momentum") {
            require_known_keys(o, {"type", "learning_rate", "momentum"}, ctx + ".optimizer");
            SgdMomentumOptions s;
            s.lr = o.value("learning_rate", s.lr);
            s.momentum = o.value("momentum", s.momentum);
            t.optimizer = s;
        } else {
            throw std::invalid_argument(ctx + ".optimizer.type: expected 'adam' or 'sgd_momentum', got '" + type +
                                        "'");
        }
    }
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.freeze = j.value("freeze", t.freeze);
    t.normalize_inputs = j.value("normalize_inputs", t.normalize_inputs);
    t.standardize_targets = j.value("standardize_targets", t.standardize_targets);
    t.validate();
    return t;
}

// ---- config -------------------------------------------------------------------

Shape ExperimentConfig::observation_shape() const {
    switch (experiment) {
        case ExperimentKind::heat: return {problem.n};
        case ExperimentKind::tomography: return {1, problem.n_angles, problem.n_rays};
        case ExperimentKind::deblur_star:
        case ExperimentKind::diffusion: return {1, problem.side, problem.side};
    }
    return {};
}

std::size_t ExperimentConfig::unknown_size() const {
    return experiment == ExperimentKind::heat ? problem.n : problem.side * problem.side;
}

std::vector<std::string> ExperimentConfig::head_names() const {
    switch (experiment) {
        case ExperimentKind::heat:
        case ExperimentKind::tomography: return {"lambda"};
        case ExperimentKind::deblur_star: return {"gamma", "lambda"};
        case ExperimentKind::diffusion: return {"k"};
    }
    return {};
}

void ExperimentConfig::validate() const {
    if (j_train < 1 || j_val < 1) throw std::invalid_argument("samples: train and validation must be >= 1");
    noise.validate();
    if (!(search.interval.lo < search.interval.hi))
        throw std::invalid_argument("search.log10_lambda: lo must be below hi");
    if (!(search.log_tol > 0.0)) throw std::invalid_argument("search.tol must be positive");
    search.split_bregman.validate();
    if (search.k_max < 1) throw std::invalid_argument("search.k_max must be >= 1");
    if (!(search.dp_safety > 0.0)) throw std::invalid_argument("search.dp_safety must be positive");
    switch (experiment) {
        case ExperimentKind::heat:
            if (problem.n < 2 || !(problem.kappa > 0.0)) throw std::invalid_argument("problem: need n >= 2, kappa > 0");
            break;
        case ExperimentKind::tomography:
            if (problem.side < 16 || problem.n_angles < 1 || problem.n_rays < 1)
                throw std::invalid_argument("problem: need side >= 16 and positive angles/rays");
            break;
        case ExperimentKind::deblur_star:
            if (problem.side < 8 || problem.stencil % 2 == 0 || !(problem.blur_sigma > 0.0))
                throw std::invalid_argument("problem: need side >= 8, odd stencil, blur_sigma > 0");
            if (!(problem.gamma_lo > 1.0) || problem.gamma_lo > problem.gamma_hi)
                throw std::invalid_argument("problem.gamma: need 1 < lo <= hi");
            problem.star.validate();
            break;
        case ExperimentKind::diffusion:
            if (problem.side < 8 || !(problem.t_final > 0.0) || problem.n_steps < 1)
                throw std::invalid_argument("problem: need side >= 8, t_final > 0, steps >= 1");
            break;
    }
    if (noise.mode == NoiseMode::variance && experiment != ExperimentKind::heat)
        throw std::invalid_argument("noise.mode 'variance' is only used by the heat experiment");

    // The network must read this experiment's observations and expose its heads.
    const Network net(network);
    if (network.input_shape != observation_shape())
        throw std::invalid_argument("network.input_shape " + shape_to_string(network.input_shape) +
                                    " does not match the observation shape " +
                                    shape_to_string(observation_shape()));
    const auto heads = head_names();
    if (network.heads.size() != heads.size())
        throw std::invalid_argument("network must have exactly the heads of the experiment");
    for (const auto& h : heads) {
        const auto& spec = network.heads[net.head_index(h)];
        const std::size_t out = spec.layers.back().out;
        if (out != 1) throw std::invalid_argument("network head '" + h + "' must have one output");
        if ((h == "k") != spec.stopping_iteration)
            throw std::invalid_argument("network head '" + h + "': stopping_iteration must be set exactly for 'k'");
    }
    training.validate();
    if (experiment == ExperimentKind::deblur_star) {
        if (!stage2) throw std::invalid_argument("deblur_star needs a 'stage2' training section");
        stage2->validate();
    } else if (stage2) {
        throw std::invalid_argument("'stage2' is only used by deblur_star");
    }
    if (elm.enabled && elm.pool < 1) throw std::invalid_argument("elm.pool must be >= 1");
    if (oed && experiment != ExperimentKind::heat)
        throw std::invalid_argument("the OED baseline is only defined for the heat experiment");
}

ExperimentConfig config_from_json(const Json& j) {
    require_known_keys(j, {"version", "experiment", "seed", "output_dir", "problem", "noise", "samples", "search",
                           "network", "training", "stage2", "elm", "oed"},
                       "config");
    if (!j.contains("version")) throw std::invalid_argument("config: missing 'version'");
    if (j.at("version").get<int>() != kConfigVersion)
        throw std::invalid_argument("config: unsupported version " + j.at("version").dump());
    if (!j.contains("experiment")) throw std::invalid_argument("config: missing 'experiment'");
    ExperimentConfig c = defaults_for(experiment_kind_from_string(j.at("experiment").get<std::string>()));

    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("problem")) read_problem(j.at("problem"), c);
    if (j.contains("noise")) {
        const Json& n = j.at("noise");
        require_known_keys(n, {"mode", "range"}, "noise");
        if (n.contains("mode")) c.noise.mode = noise_mode_from_string(n.at("mode").get<std::string>());
        if (n.contains("range")) {
            const auto r = read_pair(n.at("range"), "noise.range");
            c.noise.value_lo = r[0];
            c.noise.value_hi = r[1];
        }
    }
    if (j.contains("samples")) {
        const Json& s = j.at("samples");
        require_known_keys(s, {"train", "validation"}, "samples");
        c.j_train = s.value("train", c.j_train);
        c.j_val = s.value("validation", c.j_val);
    }
    if (j.contains("search")) read_search(j.at("search"), c);
    if (!j.contains("network")) throw std::invalid_argument("config: missing 'network'");
    c.network = network_spec_from_json(j.at("network"));
    if (j.contains("training")) c.training = training_options_from_json(j.at("training"), "training");
    if (j.contains("stage2")) c.stage2 = training_options_from_json(j.at("stage2"), "stage2");
    if (j.contains("elm")) {
        const Json& e = j.at("elm");
        if (e.is_boolean()) {
            c.elm.enabled = e.get<bool>();
        } else {
            require_known_keys(e, {"enabled", "pool"}, "elm");
            c.elm.enabled = e.value("enabled", true);
            c.elm.pool = e.value("pool", c.elm.pool);
        }
    }
    c.oed = j.value("oed", c.oed);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(read_json_file(path));
    } catch (const Json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

Json data_config_json(const ExperimentConfig& c) {
    return {{"version", kConfigVersion},
            {"experiment", std::string(to_string(c.experiment))},
            {"seed", c.seed},
            {"problem", problem_to_json(c)},
            {"noise", {{"mode", std::string(to_string(c.noise.mode))}, {"range", {c.noise.value_lo, c.noise.value_hi}}}},
            {"samples", {{"train", c.j_train}, {"validation", c.j_val}}},
            {"search", search_to_json(c)}};
}

Json to_json(const ExperimentConfig& c) {
    Json j = data_config_json(c);
    j["output_dir"] = c.output_dir;
    j["network"] = to_json(c.network);
    j["training"] = training_options_to_json(c.training);
    if (c.stage2) j["stage2"] = training_options_to_json(*c.stage2);
    j["elm"] = {{"enabled", c.elm.enabled}, {"pool", c.elm.pool}};
    j["oed"] = c.oed;
    return j;
}

std::string data_hash(const ExperimentConfig& c) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
    const std::string text = data_config_json(c).dump();
    std::array<unsigned char, 16> digest{};
    crypto_generichash(digest.data(), digest.size(), reinterpret_cast<const unsigned char*>(text.data()),
                       text.size(), nullptr, 0);
    std::string hex(2 * digest.size() + 1, '\0');
    sodium_bin2hex(hex.data(), hex.size(), digest.data(), digest.size());
    hex.pop_back();
    return hex;
}

std::uint64_t training_seed(std::uint64_t experiment_seed) {
    // Data streams use indices below 2^33; this index is far outside that range.
    return mix_seed(experiment_seed, 0x7472'6169'6e00'0000ULL);
}

}  // namespace reglearn
