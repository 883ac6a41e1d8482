#include "reglearn/pipeline/offline.hpp"

#include "reglearn/solvers/tikhonov.hpp"

#include <cmath>

namespace reglearn {

namespace {

double forward_transform(TargetTransform t, double v) { return t == TargetTransform::log10 ? std::log10(v) : v; }
double inverse_transform(TargetTransform t, double v) { return t == TargetTransform::log10 ? std::pow(10.0, v) : v; }

std::vector<std::size_t> usable_samples(const Dataset& d) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < d.size(); ++j)
        if (!d.failed[j]) idx.push_back(j);
    return idx;
}

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    Shape shape = t.shape();
    shape[0] = rows.size();
    const std::size_t w = t.sample_size();
    Tensor out(shape);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = t.sample(rows[r]);
        std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    return out;
}

Tensor column(const Vector& v, const std::vector<std::size_t>& rows) {
    Vector out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(v[r]);
    return Tensor({rows.size(), 1}, std::move(out));
}

}  // namespace

std::string parameter_head(ExperimentKind k) { return k == ExperimentKind::diffusion ? "k" : "lambda"; }

Vector pool_observation(std::span<const double> b, const Shape& shape, std::size_t pool) {
    if (pool <= 1 || shape.size() != 3) return Vector(b.begin(), b.end());
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    const std::size_t ph = (h + pool - 1) / pool, pw = (w + pool - 1) / pool;
    Vector out(c * ph * pw, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < ph; ++i)
            for (std::size_t j = 0; j < pw; ++j) {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (std::size_t a = i * pool; a < std::min(h, (i + 1) * pool); ++a)
                    for (std::size_t e = j * pool; e < std::min(w, (j + 1) * pool); ++e) {
                        sum += b[(ch * h + a) * w + e];
                        ++cnt;
                    }
                out[(ch * ph + i) * pw + j] = sum / static_cast<double>(cnt);
            }
    return out;
}

double ElmPredictor::predict(std::span<const double> b) const {
    return inverse_transform(transform, model.predict(pool_observation(b, observation_shape, pool)));
}

OfflineArtifacts run_offline(const ExperimentConfig& config, const Dataset& train_set) {
    check_dataset(train_set, config, Split::train);
    const auto rows = usable_samples(train_set);
    if (rows.empty()) throw std::runtime_error("every training sample has a failed oracle label");

    OfflineArtifacts out;
    out.excluded = train_set.size() - rows.size();

    TrainingData data;
    data.inputs = select_rows(train_set.inputs, rows);
    const std::string param = parameter_head(config.experiment);
    data.targets[param] = column(train_set.label, rows);

    const Network net(config.network);
    TrainingOptions opts = config.training;
    opts.seed = training_seed(config.seed);
    if (config.experiment == ExperimentKind::deblur_star) {
        data.targets["gamma"] = column(train_set.gamma, rows);
        TrainingOptions stage2 = *config.stage2;
        stage2.seed = opts.seed;
        out.checkpoint = train_two_stage(net, data, "gamma", param, opts, stage2);
    } else {
        out.checkpoint = train(net, data, opts);
    }

    if (config.elm.enabled) {
        ElmPredictor e;
        e.transform = config.network.heads[net.head_index(param)].target;
        e.pool = config.elm.pool;
        e.observation_shape = config.observation_shape();
        const Vector first = pool_observation(data.inputs.sample(0), e.observation_shape, e.pool);
        DenseMatrix features(rows.size(), first.size());
        Vector targets(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Vector f = pool_observation(data.inputs.sample(r), e.observation_shape, e.pool);
            std::copy(f.begin(), f.end(), features.row(r).begin());
            targets[r] = forward_transform(e.transform, train_set.label[rows[r]]);
        }
        e.model = elm_fit(features, targets);
        out.elm = std::move(e);
    }

    if (config.oed) {
        const ExperimentProblem problem(config);
        std::vector<TikhonovSpectrum> spectra;
        std::vector<Vector> truths;
        spectra.reserve(rows.size());
        for (std::size_t r : rows) {
            spectra.emplace_back(problem.svd(), train_set.inputs.sample(r));
            const auto x = train_set.truths.sample(r);
            truths.emplace_back(x.begin(), x.end());
        }
        out.oed = lambda_oed([&](double l, std::size_t j) { return spectra[j].solve(l); }, truths,
                             config.search.interval, config.search.log_tol);
    }
    return out;
}

// ---- files --------------------------------------------------------------------

Json to_json(const ElmPredictor& e) {
    return {{"model", to_json(e.model)},
            {"target", std::string(to_string(e.transform))},
            {"pool", e.pool},
            {"observation_shape", e.observation_shape}};
}

ElmPredictor elm_predictor_from_json(const Json& j) {
    require_known_keys(j, {"model", "target", "pool", "observation_shape"}, "elm");
    ElmPredictor e;
    e.model = elm_from_json(j.at("model"));
    e.transform = target_transform_from_string(j.at("target").get<std::string>());
    e.pool = j.at("pool").get<std::size_t>();
    e.observation_shape = j.at("observation_shape").get<Shape>();
    return e;
}

void write_offline(const OfflineArtifacts& a, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_checkpoint(a.checkpoint, dir / "checkpoint.json");
    std::filesystem::remove(dir / "elm.json");
    std::filesystem::remove(dir / "oed.json");
    if (a.elm) write_json_file(to_json(*a.elm), dir / "elm.json");
    if (a.oed)
        write_json_file({{"lambda", a.oed->value}, {"objective", a.oed->objective_at_value},
                         {"evaluations", a.oed->evaluations}},
                        dir / "oed.json");
}

OfflineArtifacts read_offline(const std::filesystem::path& dir) {
    OfflineArtifacts a;
    a.checkpoint = load_checkpoint(dir / "checkpoint.json");
    if (std::filesystem::exists(dir / "elm.json")) a.elm = elm_predictor_from_json(read_json_file(dir / "elm.json"));
    if (std::filesystem::exists(dir / "oed.json")) {
        const Json j = read_json_file(dir / "oed.json");
        require_known_keys(j, {"lambda", "objective", "evaluations"}, "oed.json");
        SelectionResult r;
        r.method = SelectionMethod::oed;
        r.value = j.at("lambda").get<double>();
        r.objective_at_value = j.at("objective").get<double>();
        r.evaluations = j.at("evaluations").get<int>();
        a.oed = r;
    }
    return a;
}

}  // namespace reglearn
