#include "reglearn/nnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reglearn {

// ---- loss -------------------------------------------------------------------

LossValue mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.size() != target.size() || pred.batch() != target.batch() || pred.batch() == 0)
        throw ShapeError("mse_loss: prediction " + shape_to_string(pred.shape()) + " and target " +
                         shape_to_string(target.shape()) + " differ");
    const double j = static_cast<double>(pred.batch());
    LossValue out;
    out.gradient = Tensor(pred.shape());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        sum += r * r;
        out.gradient[i] = r / j;
    }
    out.value = sum / (2.0 * j);
    return out;
}

// ---- optimizers -------------------------------------------------------------

void optimizer_step(OptimizerState& state, Vector& theta, const Vector& gradient, const OptimizerOptions& options,
                    const std::vector<bool>& frozen) {
    const std::size_t n = theta.size();
    if (gradient.size() != n || (!frozen.empty() && frozen.size() != n))
        throw std::invalid_argument("optimizer_step: size mismatch");
    if (state.m.size() != n) state.m.assign(n, 0.0);
    ++state.step;
    auto is_frozen = [&](std::size_t i) { return !frozen.empty() && frozen[i]; };

    if (const auto* adam = std::get_if<AdamOptions>(&options)) {
        if (state.v.size() != n) state.v.assign(n, 0.0);
        const double t = static_cast<double>(state.step);
        const double c1 = 1.0 - std::pow(adam->beta1, t);
        const double c2 = 1.0 - std::pow(adam->beta2, t);
        for (std::size_t i = 0; i < n; ++i) {
            if (is_frozen(i)) continue;
            const double g = gradient[i];
            state.m[i] = adam->beta1 * state.m[i] + (1.0 - adam->beta1) * g;
            state.v[i] = adam->beta2 * state.v[i] + (1.0 - adam->beta2) * g * g;
            const double mhat = state.m[i] / c1;
            const double vhat = state.v[i] / c2;
            theta[i] -= adam->lr * mhat / (std::sqrt(vhat) + adam->epsilon);
        }
    } else {
        const auto& sgd = std::get<SgdMomentumOptions>(options);
        for (std::size_t i = 0; i < n; ++i) {
            if (is_frozen(i)) continue;
            state.m[i] = sgd.momentum * state.m[i] - sgd.lr * gradient[i];
            theta[i] += state.m[i];
        }
    }
}

// ---- options ----------------------------------------------------------------

void TrainingOptions::validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainingOptions: batch_size must be at least 1");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainingOptions: weight_decay must be nonnegative");
    if (const auto* a = std::get_if<AdamOptions>(&optimizer)) {
        if (!(a->lr > 0.0) || !(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0) ||
            !(a->epsilon > 0.0))
            throw std::invalid_argument("TrainingOptions: invalid Adam settings");
    } else {
        const auto& s = std::get<SgdMomentumOptions>(optimizer);
        if (!(s.lr > 0.0) || !(s.momentum >= 0.0 && s.momentum < 1.0))
            throw std::invalid_argument("TrainingOptions: invalid SGD-momentum settings");
    }
}

TrainingDiverged::TrainingDiverged(std::size_t e, std::size_t b)
    : std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(e) + ", batch " +
                         std::to_string(b)),
      epoch(e),
      batch(b) {}

// ---- normalization ------------------------------------------------------------

void Affine::apply(std::span<double> x) const {
    if (empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - shift[i]) * scale[i];
}

void Affine::invert(std::span<double> x) const {
    if (empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] / scale[i] + shift[i];
}

namespace {

// Mean and inverse standard deviation per column of a batch.
Affine fit_standardization(const Tensor& t) {
    const std::size_t n = t.batch(), d = t.sample_size();
    Affine a;
    a.shift.assign(d, 0.0);
    a.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d; ++i) a.shift[i] += t[j * d + i];
    for (double& v : a.shift) v /= static_cast<double>(n);
    Vector var(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d; ++i) {
            const double r = t[j * d + i] - a.shift[i];
            var[i] += r * r;
        }
    for (std::size_t i = 0; i < d; ++i) {
        const double sd = std::sqrt(var[i] / static_cast<double>(n));
        a.scale[i] = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    return a;
}

Affine identity_affine(std::size_t d) { return {Vector(d, 0.0), Vector(d, 1.0)}; }

void forward_transform(TargetTransform t, std::span<double> v) {
    if (t != TargetTransform::log10) return;
    for (double& x : v) {
        if (!(x > 0.0)) throw std::invalid_argument("log10 target transform needs positive targets");
        x = std::log10(x);
    }
}

void inverse_transform(TargetTransform t, std::span<double> v) {
    if (t != TargetTransform::log10) return;
    for (double& x : v) x = std::pow(10.0, x);
}

Tensor gather(const Tensor& src, std::span<const std::size_t> rows) {
    Shape shape = src.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    const std::size_t d = src.sample_size();
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(src.data() + rows[r] * d, d, out.data() + r * d);
    return out;
}

Tensor normalized_inputs(const Tensor& inputs, const Affine& affine) {
    Tensor x = inputs;
    for (std::size_t j = 0; j < x.batch(); ++j) affine.apply(x.sample(j));
    return x;
}

}  // namespace

// ---- train ------------------------------------------------------------------

Checkpoint train(const Network& net, const TrainingData& data, const TrainingOptions& options,
                 const std::optional<Vector>& initial_theta, const std::optional<Vector>& initial_buffers) {
    options.validate();
    const std::size_t j_total = data.inputs.batch();
    if (j_total == 0) throw std::invalid_argument("train: empty dataset");
    if (data.inputs.sample_size() != net.input_size()) throw ShapeError("train: input size does not match network");
    if (data.targets.empty()) throw std::invalid_argument("train: no targets");
    if (!data.inputs.all_finite()) throw std::invalid_argument("train: inputs contain non-finite values");

    Checkpoint ck;
    ck.spec = net.spec();

    RngStream init_stream = RngStream::substream(options.seed, 0);
    RngStream stream = RngStream::substream(options.seed, 1);
    Vector theta = initial_theta ? *initial_theta : net.initial_parameters(init_stream);
    Vector buffers = initial_buffers ? *initial_buffers : net.initial_buffers();
    if (theta.size() != net.parameter_count() || buffers.size() != net.buffer_count())
        throw ShapeError("train: initial parameters do not match network");

    if (options.normalize_inputs) ck.input = fit_standardization(data.inputs);
    const Tensor x_all = normalized_inputs(data.inputs, ck.input);

    // Targets in training space, one tensor per head (empty when untrained).
    std::vector<Tensor> y_all(net.head_count());
    for (const auto& [name, target] : data.targets) {
        const std::size_t h = net.head_index(name);
        const HeadSpec& head = net.spec().heads[h];
        const std::size_t out = head.layers.back().out;
        if (target.batch() != j_total || target.sample_size() != out)
            throw ShapeError("train: targets for head '" + name + "' have shape " + shape_to_string(target.shape()));
        Tensor y(Shape{j_total, out}, target.values());
        forward_transform(head.target, y.values());
        TargetNormalization tn;
        tn.transform = head.target;
        tn.affine = options.standardize_targets ? fit_standardization(y) : identity_affine(out);
        for (std::size_t j = 0; j < j_total; ++j) tn.affine.apply(y.sample(j));
        ck.targets[name] = tn;
        y_all[h] = std::move(y);
    }

    const std::vector<bool> frozen = net.frozen_mask(options.freeze);
    std::vector<std::pair<std::size_t, std::size_t>> frozen_buffers;
    for (const auto& info : net.layers())
        if (info.buffer_count > 0 && info.param_count > 0 && frozen[info.param_offset])
            frozen_buffers.emplace_back(info.buffer_offset, info.buffer_count);

    OptimizerState state;
    std::vector<std::size_t> order(j_total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double>& history = ck.history["loss"];
    const double decay = 2.0 * options.weight_decay * options.weight_decay;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = j_total; i > 1; --i) std::swap(order[i - 1], order[rng_index(stream, i)]);
        double epoch_loss = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < j_total; start += options.batch_size, ++batch_no) {
            const std::size_t stop = std::min(j_total, start + options.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            const Tensor xb = gather(x_all, rows);
            ForwardResult fwd = net.forward(theta, buffers, xb, Mode::train, &stream);

            std::vector<Tensor> grads(net.head_count());
            double loss = 0.0;
            for (std::size_t h = 0; h < net.head_count(); ++h) {
                if (y_all[h].empty()) continue;
                LossValue lv = mse_loss(fwd.outputs[h], gather(y_all[h], rows));
                loss += lv.value;
                grads[h] = std::move(lv.gradient);
            }
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch, batch_no);

            Vector g = net.backward(theta, fwd.cache, grads);
            if (decay > 0.0)
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += decay * theta[i];
            optimizer_step(state, theta, g, options.optimizer, frozen);

            Vector saved = buffers;
            net.update_running_stats(fwd.cache, buffers);
            for (const auto& [off, count] : frozen_buffers)
                std::copy_n(saved.begin() + static_cast<std::ptrdiff_t>(off), count,
                            buffers.begin() + static_cast<std::ptrdiff_t>(off));

            epoch_loss += loss * static_cast<double>(rows.size());
        }
        history.push_back(epoch_loss / static_cast<double>(j_total));
    }
    ck.theta = std::move(theta);
    ck.buffers = std::move(buffers);
    return ck;
}

// ---- two-stage training -------------------------------------------------------

Checkpoint train_two_stage(const Network& net, const TrainingData& data, const std::string& first_head,
                           const std::string& second_head, const TrainingOptions& stage1,
                           const TrainingOptions& stage2) {
    if (!data.targets.count(first_head) || !data.targets.count(second_head))
        throw std::invalid_argument("train_two_stage: targets for both heads are required");

    TrainingData d1;
    d1.inputs = data.inputs;
    d1.targets[first_head] = data.targets.at(first_head);
    TrainingOptions o1 = stage1;
    o1.freeze.push_back(second_head);
    Checkpoint ck = train(net, d1, o1);

    // Stage 2 sees the trunk as a fixed feature map.
    const Tensor features = net.trunk_features(ck.theta, ck.buffers, normalized_inputs(data.inputs, ck.input));
    const Network head_net(net.head_subnetwork(second_head));
    const ParamSlice ps = net.group_slice(second_head);
    const ParamSlice bs = net.buffer_group_slice(second_head);
    const auto p0 = ck.theta.begin() + static_cast<std::ptrdiff_t>(ps.offset);
    const auto b0 = ck.buffers.begin() + static_cast<std::ptrdiff_t>(bs.offset);
    const Vector theta2(p0, p0 + static_cast<std::ptrdiff_t>(ps.count));
    const Vector buffers2(b0, b0 + static_cast<std::ptrdiff_t>(bs.count));

    TrainingData d2;
    d2.inputs = features;
    d2.targets[second_head] = data.targets.at(second_head);
    TrainingOptions o2 = stage2;
    o2.normalize_inputs = false;
    const Checkpoint head_ck = train(head_net, d2, o2, theta2, buffers2);

    std::copy(head_ck.theta.begin(), head_ck.theta.end(), p0);
    std::copy(head_ck.buffers.begin(), head_ck.buffers.end(), b0);
    ck.targets[second_head] = head_ck.targets.at(second_head);
    ck.history["stage1"] = ck.history["loss"];
    ck.history.erase("loss");
    ck.history["stage2"] = head_ck.history.at("loss");
    return ck;
}

// ---- inference --------------------------------------------------------------

long long round_stopping_iteration(double raw) {
    if (!std::isfinite(raw)) throw std::domain_error("stopping iteration prediction is not finite");
    return std::max(1LL, std::llround(raw));
}

std::map<std::string, HeadPrediction> predict(const Checkpoint& ckpt, const Tensor& inputs) {
    const Network net(ckpt.spec);
    if (inputs.sample_size() != net.input_size()) throw ShapeError("predict: input size does not match network");
    if (ckpt.theta.size() != net.parameter_count() || ckpt.buffers.size() != net.buffer_count())
        throw ShapeError("predict: checkpoint parameters do not match network");
    const Tensor x = normalized_inputs(inputs, ckpt.input);
    const std::size_t n = x.batch();

    std::map<std::string, HeadPrediction> out;
    for (const HeadSpec& head : ckpt.spec.heads)
        out[head.name].values = Tensor(Shape{n, head.layers.back().out});

    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
        std::vector<std::size_t> rows(std::min(kChunk, n - start));
        std::iota(rows.begin(), rows.end(), start);
        const ForwardResult fwd = net.forward(ckpt.theta, ckpt.buffers, gather(x, rows), Mode::eval);
        for (std::size_t h = 0; h < net.head_count(); ++h) {
            Tensor& dst = out[ckpt.spec.heads[h].name].values;
            const std::size_t d = dst.sample_size();
            std::copy_n(fwd.outputs[h].data(), rows.size() * d, dst.data() + start * d);
        }
    }
    for (const HeadSpec& head : ckpt.spec.heads) {
        HeadPrediction& p = out[head.name];
        const auto it = ckpt.targets.find(head.name);
        for (std::size_t j = 0; j < n; ++j) {
            if (it != ckpt.targets.end()) {
                it->second.affine.invert(p.values.sample(j));
                inverse_transform(it->second.transform, p.values.sample(j));
            }
        }
        if (head.stopping_iteration)
            for (double v : p.values.values()) p.rounded.push_back(round_stopping_iteration(v));
    }
    return out;
}

}  // namespace reglearn
