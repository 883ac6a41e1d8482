#include "reglearn/core/svd.hpp"
#include "reglearn/forward/operators.hpp"
#include "reglearn/forward/samplers.hpp"
#include "reglearn/nnet/elm.hpp"
#include "reglearn/nnet/gradcheck.hpp"
#include "reglearn/nnet/kernels.hpp"
#include "reglearn/nnet/serialization.hpp"
#include "reglearn/nnet/training.hpp"
#include "reglearn/regparam/selection.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <cstring>
#include <string>

using namespace reglearn;
using namespace reglearn::testing;

namespace {

Tensor random_tensor(RngStream& s, Shape shape, double sd = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng_normal(s, 0.0, sd);
    return t;
}

NetworkSpec single_head(Shape input, std::vector<LayerSpec> layers, std::size_t flat_in, std::size_t out = 2) {
    NetworkSpec s;
    s.input_shape = std::move(input);
    HeadSpec h;
    h.name = "out";
    h.layers = std::move(layers);
    h.layers.push_back(linear_output(flat_in, out));
    s.heads.push_back(std::move(h));
    return s;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

GradcheckResult check_both_modes(const Network& net, std::uint64_t seed, std::size_t batch) {
    RngStream s(seed);
    const Vector theta = net.initial_parameters(s);
    Vector buffers = net.initial_buffers();
    // Nontrivial running statistics for eval mode.
    for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i] = 0.5 + rng_uniform(s, 0.0, 1.0);
    Shape shape{batch};
    for (std::size_t d : net.spec().input_shape) shape.push_back(d);
    const Tensor x = random_tensor(s, shape);
    GradcheckResult worst;
    for (Mode mode : {Mode::train, Mode::eval}) {
        GradcheckOptions opts;
        opts.mode = mode;
        opts.seed = seed;
        const auto r = gradient_check(net, theta, buffers, x, opts);
        if (r.max_relative_error >= worst.max_relative_error) worst = r;
        CHECK(r.checked > 0);
        MESSAGE(std::string(mode == Mode::train ? "train" : "eval") << " mode: max rel err " << r.max_relative_error
                        << " over " << r.checked << " coords, skipped " << r.skipped);
    }
    return worst;
}

}  // namespace

// ---- forward examples ---------------------------------------------------------

TEST_CASE("dense then relu by hand") {
    NetworkSpec s;
    s.input_shape = {2};
    s.trunk = {dense(2, 1), relu()};
    s.heads.push_back({"out", {linear_output(1, 1)}, TargetTransform::identity, false});
    const Network net(s);
    Vector theta{1.0, -1.0, 0.0, 1.0};
    const auto r = net.forward(theta, {}, Tensor({1, 2}, {2.0, 3.0}), Mode::eval);
    CHECK(r.cache.layers[1].input[0] == -1.0);
    CHECK(r.outputs[0][0] == 0.0);
    const auto r2 = net.forward(theta, {}, Tensor({1, 2}, {3.0, 2.0}), Mode::eval);
    CHECK(r2.outputs[0][0] == 1.0);
}

TEST_CASE("conv2d with a centred delta kernel is the identity") {
    const Network net(single_head({2, 5, 6}, {conv2d(3, 3, 2, 2, 1)}, 60, 1));
    Vector theta(net.parameter_count(), 0.0);
    // weights [oc][c][3][3]: delta at the centre for oc == c
    theta[(0 * 2 + 0) * 9 + 4] = 1.0;
    theta[(1 * 2 + 1) * 9 + 4] = 1.0;
    RngStream s(1);
    const Tensor x = random_tensor(s, {3, 2, 5, 6});
    const auto r = net.forward(theta, {}, x, Mode::eval);
    CHECK(r.cache.layers.back().input.values() == x.values());
}

TEST_CASE("pooling by hand") {
    const Network avg(single_head({1, 2, 2}, {avgpool2d(2)}, 1, 1));
    const Network mx(single_head({1, 2, 2}, {maxpool2d(2)}, 1, 1));
    const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(avg.forward({1.0}, {}, x, Mode::eval).outputs[0][0] == 2.5);
    CHECK(mx.forward({1.0}, {}, x, Mode::eval).outputs[0][0] == 4.0);
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(Network(single_head({4}, {dense(3, 2)}, 2)), ShapeError);
    CHECK_THROWS_AS(Network(single_head({1, 4, 4}, {conv2d(3, 3, 2, 1, 1)}, 16)), ShapeError);
    NetworkSpec no_linear;
    no_linear.input_shape = {3};
    no_linear.heads.push_back({"h", {dense(3, 1)}, TargetTransform::identity, false});
    CHECK_THROWS_AS(Network{no_linear}, ShapeError);
    const Network net(single_head({3}, {}, 3));
    CHECK_THROWS_AS(net.forward(Vector(6, 0.0), {}, Tensor({2, 4}), Mode::eval), ShapeError);
}

// ---- backward ---------------------------------------------------------------

TEST_CASE("single dense layer gradient matches the linear-regression formula") {
    NetworkSpec s;
    s.input_shape = {3};
    s.heads.push_back({"out", {dense(3, 2), linear_output(2, 2)}, TargetTransform::identity, false});
    const Network net(s);
    RngStream st(2);
    Vector theta = net.initial_parameters(st);
    // Make the output layer the identity so the dense layer is the whole map.
    const std::size_t lo = net.layers()[1].param_offset;
    theta[lo + 0] = 1.0;
    theta[lo + 1] = 0.0;
    theta[lo + 2] = 0.0;
    theta[lo + 3] = 1.0;
    const Tensor b({1, 3}, {0.5, -1.0, 2.0});
    const Tensor t({1, 2}, {0.3, 0.1});
    const auto fwd = net.forward(theta, {}, b, Mode::train);
    const auto loss = mse_loss(fwd.outputs[0], t);
    const Vector g = net.backward(theta, fwd.cache, {loss.gradient});
    for (std::size_t o = 0; o < 2; ++o) {
        double pred = theta[6 + o];
        for (std::size_t i = 0; i < 3; ++i) pred += theta[o * 3 + i] * b[i];
        const double r = pred - t[o];
        for (std::size_t i = 0; i < 3; ++i) CHECK(g[o * 3 + i] == doctest::Approx(2 * r * b[i] / 2).epsilon(1e-14));
        CHECK(g[6 + o] == doctest::Approx(r).epsilon(1e-14));
    }
}

TEST_CASE("zero upstream gradient gives a zero parameter gradient") {
    NetworkSpec s;
    s.input_shape = {1, 6, 6};
    s.trunk = {conv2d(3, 3, 1, 2, 1), batchnorm2d(2), relu(), maxpool2d(2)};
    s.heads.push_back({"a", {dense(18, 4), relu(), linear_output(4, 1)}, TargetTransform::identity, false});
    const Network net(s);
    RngStream st(3);
    const Vector theta = net.initial_parameters(st);
    const auto fwd = net.forward(theta, net.initial_buffers(), random_tensor(st, {3, 1, 6, 6}), Mode::train);
    const Vector g = net.backward(theta, fwd.cache, {Tensor({3, 1}, 0.0)});
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("backward rejects a stale cache") {
    const Network net(single_head({3}, {dense(3, 3), relu()}, 3));
    RngStream st(4);
    Vector theta = net.initial_parameters(st);
    const auto fwd = net.forward(theta, {}, random_tensor(st, {2, 3}), Mode::train);
    theta[0] += 1e-3;
    CHECK_THROWS_AS(net.backward(theta, fwd.cache, {Tensor({2, 2}, 1.0)}), StaleCache);
}

// ---- gradient checks ----------------------------------------------------------

TEST_CASE("gradient check for every layer type in isolation") {
    struct Case {
        const char* name;
        NetworkSpec spec;
    };
    std::vector<Case> cases;
    cases.push_back({"dense", single_head({5}, {dense(5, 4)}, 4)});
    cases.push_back({"dense no bias", single_head({5}, {dense(5, 4, false)}, 4)});
    cases.push_back({"relu", single_head({5}, {dense(5, 6), relu()}, 6)});
    cases.push_back({"conv2d", single_head({2, 5, 5}, {conv2d(3, 3, 2, 3, 1)}, 75)});
    cases.push_back({"conv2d no bias", single_head({2, 4, 4}, {conv2d(3, 3, 2, 2, 1, false)}, 32)});
    cases.push_back({"conv2d 5x5 unpadded", single_head({1, 7, 6}, {conv2d(5, 5, 1, 2, 0)}, 12)});
    cases.push_back({"avgpool2d", single_head({2, 4, 4}, {conv2d(3, 3, 2, 2, 1), avgpool2d(2)}, 8)});
    cases.push_back({"maxpool2d", single_head({2, 4, 4}, {conv2d(3, 3, 2, 2, 1), maxpool2d(2)}, 8)});
    cases.push_back({"batchnorm2d", single_head({2, 3, 3}, {conv2d(3, 3, 2, 2, 1, false), batchnorm2d(2)}, 18)});
    cases.push_back({"dropout", single_head({6}, {dense(6, 8), dropout(0.3)}, 8)});
    cases.push_back({"linear_output", single_head({4}, {}, 4, 3)});
    for (auto& c : cases) {
        INFO(std::string(c.name));
        const Network net(c.spec);
        const auto r = check_both_modes(net, 100, 4);
        CHECK(r.max_relative_error < 1e-6);
    }
}

TEST_CASE("gradient check for two-headed convolutional networks") {
    NetworkSpec s;
    s.input_shape = {1, 12, 12};
    s.trunk = {conv2d(5, 5, 1, 3, 2, false), batchnorm2d(3), relu(), maxpool2d(2),
               conv2d(3, 3, 3, 4, 1, false), batchnorm2d(4), relu(), maxpool2d(2)};
    s.heads.push_back({"gamma", {dense(36, 6), relu(), linear_output(6, 1)}, TargetTransform::identity, false});
    s.heads.push_back({"lambda",
                       {dense(36, 8), relu(), dense(8, 6), relu(), dense(6, 4), relu(), linear_output(4, 1)},
                       TargetTransform::log10,
                       false});
    const auto r = check_both_modes(Network(s), 200, 3);
    CHECK(r.max_relative_error < 1e-6);

    NetworkSpec d;
    d.input_shape = {1, 8, 8};
    d.trunk = {conv2d(3, 3, 1, 2, 1), relu(), conv2d(3, 3, 2, 3, 1), relu(), avgpool2d(2), dropout(0.2)};
    d.heads.push_back({"k", {linear_output(48, 1)}, TargetTransform::identity, true});
    const auto r2 = check_both_modes(Network(d), 201, 3);
    CHECK(r2.max_relative_error < 1e-6);
}

// ---- loss and optimizers ------------------------------------------------------

TEST_CASE("mse loss") {
    const Tensor p({1, 2}, {2.0, 3.0});
    CHECK(mse_loss(p, p).value == 0.0);
    const auto l = mse_loss(p, Tensor({1, 2}, {1.0, 2.0}));
    CHECK(l.value == 1.0);
    CHECK(l.gradient.values() == Vector{1.0, 1.0});

    RngStream s(5);
    const Tensor a = random_tensor(s, {7, 3}), b = random_tensor(s, {7, 3});
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
        double row = 0.0;
        for (std::size_t i = 0; i < 3; ++i) row += (a[j * 3 + i] - b[j * 3 + i]) * (a[j * 3 + i] - b[j * 3 + i]);
        total += row;
    }
    const auto lr = mse_loss(a, b);
    CHECK(std::abs(lr.value - total / 14.0) <= 1e-14 * total);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(lr.gradient[i] == doctest::Approx((a[i] - b[i]) / 7).epsilon(1e-15));
    CHECK_THROWS_AS(mse_loss(a, Tensor({7, 2})), ShapeError);
}

TEST_CASE("optimizer steps") {
    OptimizerState st;
    Vector theta{0.0};
    optimizer_step(st, theta, {1.0}, AdamOptions{0.1});
    CHECK(theta[0] == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-15));
    CHECK(std::abs(theta[0] + 0.0999999990) < 1e-10);

    OptimizerState z;
    Vector t2{1.5, -2.0};
    optimizer_step(z, t2, {0.0, 0.0}, AdamOptions{});
    CHECK(t2 == Vector{1.5, -2.0});

    OptimizerState sg;
    Vector t3{1.0, 2.0};
    optimizer_step(sg, t3, {0.5, -1.0}, SgdMomentumOptions{0.1, 0.0});
    CHECK(t3[0] == doctest::Approx(0.95));
    CHECK(t3[1] == doctest::Approx(2.1));

    OptimizerState fr;
    Vector t4{1.0, 2.0};
    optimizer_step(fr, t4, {1.0, 1.0}, AdamOptions{}, {true, false});
    CHECK(t4[0] == 1.0);
    CHECK(t4[1] < 2.0);
}

// ---- batchnorm and dropout statistics ---------------------------------------------

TEST_CASE("batchnorm train-mode normalization") {
    NetworkSpec s;
    s.input_shape = {3, 4, 5};
    s.trunk = {batchnorm2d(3)};
    s.heads.push_back({"out", {linear_output(60, 1)}, TargetTransform::identity, false});
    const Network net(s);
    RngStream st(6);
    // A large input spread keeps eps/var below the variance tolerance.
    Tensor x = random_tensor(st, {8, 3, 4, 5}, 300.0);
    for (double& v : x.values()) v += 50.0;
    const Vector theta = net.initial_parameters(st);
    const auto fwd = net.forward(theta, net.initial_buffers(), x, Mode::train);
    const Vector& xhat = fwd.cache.layers[0].aux;
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < 8; ++j)
            for (std::size_t i = 0; i < 20; ++i) {
                const double v = xhat[(j * 3 + c) * 20 + i];
                sum += v;
                sq += v * v;
            }
        const double mean = sum / 160.0;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(sq / 160.0 - mean * mean - 1.0) < 1e-8);
    }
    Vector buffers = net.initial_buffers();
    net.update_running_stats(fwd.cache, buffers);
    CHECK(buffers[0] == doctest::Approx(0.1 * fwd.cache.layers[0].stats[0]));
}

TEST_CASE("dropout statistics") {
    const double rate = 0.2;
    NetworkSpec s;
    s.input_shape = {100000};
    s.trunk = {dropout(rate)};
    s.heads.push_back({"out", {linear_output(100000, 1)}, TargetTransform::identity, false});
    const Network net(s);
    const Tensor x({1, 100000}, 1.0);
    const Vector theta(100000, 0.0);
    const auto eval = net.forward(theta, {}, x, Mode::eval);
    CHECK(eval.cache.layers[1].input.values() == x.values());
    RngStream st(7);
    const auto tr = net.forward(theta, {}, x, Mode::train, &st);
    const Vector& y = tr.cache.layers[1].input.values();
    std::size_t zeros = 0;
    for (double v : y) {
        if (v == 0.0) {
            ++zeros;
        } else {
            CHECK(v == 1.0 / (1.0 - rate));
        }
    }
    const double n = 100000.0;
    const double sigma = std::sqrt(n * rate * (1 - rate));
    CHECK(std::abs(static_cast<double>(zeros) - n * rate) <= 3 * sigma);
    CHECK_THROWS_AS(net.forward(theta, {}, x, Mode::train), std::invalid_argument);
}

// ---- parameter layout ---------------------------------------------------------

TEST_CASE("heat architecture has 13046 parameters") {
    const Network net(fully_connected_spec({100, 75, 50, 25, 12, 6, 1}));
    CHECK(net.parameter_count() == 13046);
}

TEST_CASE("group slices and freezing") {
    NetworkSpec s;
    s.input_shape = {4};
    s.trunk = {dense(4, 3), relu()};
    s.heads.push_back({"a", {linear_output(3, 1)}, TargetTransform::identity, false});
    s.heads.push_back({"b", {dense(3, 2), relu(), linear_output(2, 1)}, TargetTransform::identity, false});
    const Network net(s);
    CHECK(net.group_slice("trunk").offset == 0);
    CHECK(net.group_slice("trunk").count == 15);
    CHECK(net.group_slice("a").offset == 15);
    CHECK(net.group_slice("a").count == 3);
    CHECK(net.group_slice("b").count == 8 + 2);
    const auto mask = net.frozen_mask({"b"});
    for (std::size_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == (i >= 18));
    CHECK(net.frozen_mask({"trunk.0"})[0]);
    CHECK_THROWS(net.frozen_mask({"nope"}));
}

// ---- kernels ------------------------------------------------------------------

TEST_CASE("parallel kernels agree with the serial reference and with themselves across thread counts") {
    RngStream s(8);
    kernels::ConvShape cs;
    cs.batch = 3;
    cs.in_channels = 2;
    cs.height = 9;
    cs.width = 7;
    cs.out_channels = 4;
    cs.kernel_h = 3;
    cs.kernel_w = 5;
    cs.pad = 2;
    const std::size_t nx = cs.batch * cs.in_channels * cs.height * cs.width;
    const std::size_t ny = cs.batch * cs.out_channels * cs.out_height() * cs.out_width();
    const std::size_t nw = cs.out_channels * cs.in_channels * cs.kernel_h * cs.kernel_w;
    const Vector x = random_vector(s, nx), w = random_vector(s, nw), b = random_vector(s, 4), dy = random_vector(s, ny);

    auto run = [&](bool reference) {
        Vector y(ny), dw(nw), db(4), dx(nx);
        if (reference) {
            kernels::reference::conv2d_forward(cs, x.data(), w.data(), b.data(), y.data());
            kernels::reference::conv2d_backward_weights(cs, x.data(), dy.data(), dw.data(), db.data());
            kernels::reference::conv2d_backward_input(cs, w.data(), dy.data(), dx.data());
        } else {
            kernels::conv2d_forward(cs, x.data(), w.data(), b.data(), y.data());
            kernels::conv2d_backward_weights(cs, x.data(), dy.data(), dw.data(), db.data());
            kernels::conv2d_backward_input(cs, w.data(), dy.data(), dx.data());
        }
        return std::vector<Vector>{y, dw, db, dx};
    };
    const auto ref = run(true);
    const auto par = run(false);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(rel_diff(par[k], ref[k]) < 1e-13);

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto one = run(false);
    omp_set_num_threads(3);
    const auto three = run(false);
    omp_set_num_threads(saved);
    for (std::size_t k = 0; k < one.size(); ++k) CHECK(bitwise_equal(one[k], three[k]));

    const Vector dxx = random_vector(s, 5 * 6), dww = random_vector(s, 4 * 6), dbb = random_vector(s, 4);
    const Vector dgy = random_vector(s, 5 * 4);
    Vector y1(20), y2(20), g1(24), g2(24), c1(4), c2(4), i1(30), i2(30);
    kernels::dense_forward(5, 6, 4, dxx.data(), dww.data(), dbb.data(), y1.data());
    kernels::reference::dense_forward(5, 6, 4, dxx.data(), dww.data(), dbb.data(), y2.data());
    kernels::dense_backward_weights(5, 6, 4, dxx.data(), dgy.data(), g1.data(), c1.data());
    kernels::reference::dense_backward_weights(5, 6, 4, dxx.data(), dgy.data(), g2.data(), c2.data());
    kernels::dense_backward_input(5, 6, 4, dww.data(), dgy.data(), i1.data());
    kernels::reference::dense_backward_input(5, 6, 4, dww.data(), dgy.data(), i2.data());
    CHECK(rel_diff(y1, y2) < 1e-14);
    CHECK(rel_diff(g1, g2) < 1e-14);
    CHECK(rel_diff(c1, c2) < 1e-14);
    CHECK(rel_diff(i1, i2) < 1e-14);
}

// ---- training -----------------------------------------------------------------

TEST_CASE("a single sample is memorized") {
    NetworkSpec s;
    s.input_shape = {4};
    s.heads.push_back({"out", {dense(4, 16), relu(), linear_output(16, 2)}, TargetTransform::identity, false});
    const Network net(s);
    TrainingData d;
    d.inputs = Tensor({1, 4}, {0.3, -1.0, 2.0, 0.5});
    d.targets["out"] = Tensor({1, 2}, {1.5, -0.7});
    TrainingOptions o;
    o.optimizer = AdamOptions{1e-2};
    o.epochs = 2000;
    o.batch_size = 1;
    o.standardize_targets = false;
    o.normalize_inputs = false;
    const auto ck = train(net, d, o);
    CHECK(ck.history.at("loss").size() == 2000);
    CHECK(ck.history.at("loss").back() < 1e-4);
}

namespace {

struct HeatToy {
    TrainingData data;
    std::vector<double> lambdas;
};

HeatToy heat_toy(std::size_t j_total) {
    const auto a = heat_operator(100).materialize();
    const auto f = svd(a);
    HeatToy toy;
    std::vector<Vector> rows;
    for (std::size_t j = 0; j < j_total; ++j) {
        RngStream st = RngStream::substream(9, j);
        const Vector x = sample_heat_source(st, 100);
        const auto noisy = add_noise(a.apply(x), {NoiseMode::variance, 1e-3, 1e-1}, st);
        const TikhonovSpectrum spec(f, noisy.b);
        toy.lambdas.push_back(lambda_opt([&](double l) { return spec.solve(l); }, x, {}, 1e-4).value);
        rows.push_back(noisy.b);
    }
    toy.data.inputs = stack_samples(rows, {100});
    toy.data.targets["lambda"] = Tensor({j_total, 1}, toy.lambdas);
    return toy;
}

}  // namespace

TEST_CASE("heat training reduces the loss and is reproducible") {
    const HeatToy toy = heat_toy(2000);
    const Network net(fully_connected_spec({100, 75, 50, 25, 12, 6, 1}, "lambda", TargetTransform::log10));
    TrainingOptions o;
    o.epochs = 4;
    o.seed = 42;
    const auto a = train(net, toy.data, o);
    const auto& h = a.history.at("loss");
    CHECK(h.back() < h.front());
    const auto b = train(net, toy.data, o);
    CHECK(bitwise_equal(a.theta, b.theta));
    CHECK(bitwise_equal(h, b.history.at("loss")));

    // Round trip through JSON is bit exact and predictions agree.
    const auto c = checkpoint_from_json(Json::parse(to_json(a).dump()));
    CHECK(bitwise_equal(c.theta, a.theta));
    CHECK(bitwise_equal(c.input.shift, a.input.shift));
    CHECK(bitwise_equal(c.input.scale, a.input.scale));
    CHECK(bitwise_equal(c.history.at("loss"), h));
    const Tensor probe({3, 100}, Vector(toy.data.inputs.values().begin(), toy.data.inputs.values().begin() + 300));
    CHECK(bitwise_equal(predict(a, probe).at("lambda").values.values(),
                        predict(c, probe).at("lambda").values.values()));
    for (double v : predict(a, probe).at("lambda").values.values()) CHECK(v > 0.0);
}

TEST_CASE("training aborts on a non-finite loss") {
    const Network net(fully_connected_spec({2, 3, 1}));
    TrainingData d;
    d.inputs = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
    d.targets["lambda"] = Tensor({2, 1}, {1.0, 2.0});
    TrainingOptions o;
    o.optimizer = SgdMomentumOptions{1e200, 0.0};
    o.epochs = 50;
    o.standardize_targets = false;
    CHECK_THROWS_AS(train(net, d, o), TrainingDiverged);
}

TEST_CASE("two-stage training leaves the trunk untouched and learns the second head") {
    // Images whose mean intensity is gamma; the second target is 2 gamma.
    const std::size_t n = 200;
    RngStream st(10);
    std::vector<Vector> rows;
    Vector gammas, lambdas;
    for (std::size_t j = 0; j < n; ++j) {
        const double g = rng_uniform(st, 1.25, 2.5);
        Vector img(64);
        for (double& v : img) v = g + rng_normal(st, 0.0, 0.05);
        rows.push_back(img);
        gammas.push_back(g);
        lambdas.push_back(2 * g);
    }
    NetworkSpec s;
    s.input_shape = {1, 8, 8};
    s.trunk = {conv2d(3, 3, 1, 2, 1), batchnorm2d(2), relu(), maxpool2d(2)};
    s.heads.push_back({"gamma", {dense(32, 8), relu(), linear_output(8, 1)}, TargetTransform::identity, false});
    s.heads.push_back({"lambda", {dense(32, 8), relu(), dense(8, 8), relu(), linear_output(8, 1)},
                       TargetTransform::identity, false});
    const Network net(s);
    TrainingData d;
    d.inputs = stack_samples(rows, {1, 8, 8});
    d.targets["gamma"] = Tensor({n, 1}, gammas);
    d.targets["lambda"] = Tensor({n, 1}, lambdas);
    TrainingOptions o1;
    o1.epochs = 30;
    o1.batch_size = 16;
    o1.seed = 3;
    TrainingOptions o2 = o1;
    o2.epochs = 60;

    // Stage 1 alone, for comparison of the trunk.
    TrainingOptions o1f = o1;
    o1f.freeze.push_back("lambda");
    TrainingData d1;
    d1.inputs = d.inputs;
    d1.targets["gamma"] = d.targets["gamma"];
    const auto stage1 = train(net, d1, o1f);

    const auto ck = train_two_stage(net, d, "gamma", "lambda", o1, o2);
    const auto ts = net.group_slice("trunk");
    const auto gs = net.group_slice("gamma");
    const auto ls = net.group_slice("lambda");
    auto sub = [](const Vector& v, ParamSlice p) {
        return Vector(v.begin() + static_cast<std::ptrdiff_t>(p.offset),
                      v.begin() + static_cast<std::ptrdiff_t>(p.offset + p.count));
    };
    CHECK(bitwise_equal(sub(ck.theta, ts), sub(stage1.theta, ts)));
    CHECK(bitwise_equal(sub(ck.theta, gs), sub(stage1.theta, gs)));
    CHECK(bitwise_equal(ck.buffers, stage1.buffers));
    CHECK_FALSE(bitwise_equal(sub(ck.theta, ls), sub(stage1.theta, ls)));
    // The lambda head was frozen in stage 1: still at its initial values.
    RngStream init = RngStream::substream(3, 0);
    CHECK(bitwise_equal(sub(stage1.theta, ls), sub(net.initial_parameters(init), ls)));

    CHECK(ck.history.at("stage2").back() < 1e-2);
    const auto pred = predict(ck, d.inputs);
    CHECK(pred.at("gamma").values.size() == n);
    double err = 0.0;
    for (std::size_t j = 0; j < n; ++j) err += std::abs(pred.at("lambda").values[j] - lambdas[j]);
    MESSAGE("mean |lambda_pred - 2 gamma| = " << err / n);
    CHECK(err / n < 0.1);
}

// ---- prediction -----------------------------------------------------------------

TEST_CASE("predict undoes normalization and rounds stopping heads") {
    Checkpoint ck;
    ck.spec.input_shape = {1};
    ck.spec.heads.push_back({"k", {linear_output(1, 1)}, TargetTransform::identity, true});
    ck.theta = {1.0};
    const auto p = predict(ck, Tensor({1, 1}, {3.0}));
    CHECK(p.at("k").values[0] == 3.0);
    CHECK(p.at("k").rounded == std::vector<long long>{3});
    CHECK(round_stopping_iteration(11.6) == 12);
    CHECK(round_stopping_iteration(0.2) == 1);
    CHECK(round_stopping_iteration(-4.0) == 1);

    ck.spec.heads[0].target = TargetTransform::log10;
    ck.targets["k"] = {TargetTransform::log10, {{1.0}, {0.5}}};
    // raw 3 -> 3 / 0.5 + 1 = 7 -> 10^7
    CHECK(predict(ck, Tensor({1, 1}, {3.0})).at("k").values[0] == doctest::Approx(1e7));
}

// ---- ELM ----------------------------------------------------------------------

TEST_CASE("ELM fits") {
    RngStream s(11);
    const DenseMatrix b = random_matrix(s, 30, 5);
    const Vector w = random_vector(s, 5);
    Vector t(30);
    for (std::size_t j = 0; j < 30; ++j) t[j] = dot(w, b.row(j)) + 0.7;
    const auto m = elm_fit(b, t);
    CHECK(rel_diff(m.w, w) < 1e-10);
    CHECK(std::abs(m.y - 0.7) < 1e-10);

    // One sample: exact fit with the minimum-norm augmented solution.
    DenseMatrix one(1, 3);
    one(0, 0) = 1.0;
    one(0, 1) = 2.0;
    one(0, 2) = -1.0;
    const auto m1 = elm_fit(one, Vector{3.0});
    CHECK(m1.predict(one.row(0)) == doctest::Approx(3.0));
    // (w; y) is parallel to the augmented row (1, 2, -1, 1).
    CHECK(m1.w[1] == doctest::Approx(2 * m1.w[0]));
    CHECK(m1.y == doctest::Approx(m1.w[0]));

    const DenseMatrix big = random_matrix(s, 200, 50);
    const Vector tb = random_vector(s, 200);
    const auto mb = elm_fit(big, tb);
    DenseMatrix aug(200, 51);
    for (std::size_t j = 0; j < 200; ++j) {
        for (std::size_t i = 0; i < 50; ++i) aug(j, i) = big(j, i);
        aug(j, 50) = 1.0;
    }
    const Vector oracle = normal_equations_solve(aug, tb, 0.0);
    Vector sol = mb.w;
    sol.push_back(mb.y);
    CHECK(rel_diff(sol, oracle) < 1e-8);

    auto residual = [&](const Vector& v) { return norm2(subtract(aug.apply(v), tb)); };
    const double r0 = residual(sol);
    for (int k = 0; k < 20; ++k) {
        Vector dir = random_vector(s, 51);
        const double nd = norm2(dir);
        for (double& v : dir) v *= 1e-3 / nd;
        for (double sign : {1.0, -1.0}) {
            Vector p = sol;
            axpy(sign, dir, p);
            CHECK(residual(p) >= r0);
        }
    }
}

TEST_CASE("checkpoint JSON is strict") {
    const Network net(fully_connected_spec({3, 2, 1}));
    Checkpoint ck;
    ck.spec = net.spec();
    RngStream s(12);
    ck.theta = net.initial_parameters(s);
    Json j = to_json(ck);
    CHECK_NOTHROW(checkpoint_from_json(j));
    j["extra"] = 1;
    CHECK_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);
    j.erase("extra");
    j["theta"] = encode_f64(Vector(3, 0.0));
    CHECK_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);

    const Vector special{0.0, -0.0, 1e-310, 1.0 / 3.0, -1e300};
    CHECK(bitwise_equal(decode_f64(encode_f64(special)), special));
    CHECK(decode_f64(encode_f64(Vector{})).empty());
}
