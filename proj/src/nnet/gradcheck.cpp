#include "reglearn/nnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace reglearn {

GradcheckResult gradient_check(const Network& net, const Vector& theta, const Vector& buffers, const Tensor& input,
                               const GradcheckOptions& options) {
    if (!(options.epsilon > 0.0)) throw std::invalid_argument("gradient_check: epsilon must be positive");
    RngStream setup = RngStream::substream(options.seed, 0);
    const std::uint64_t dropout_seed = setup.next_u64();

    auto run = [&](const Vector& th) {
        RngStream s(dropout_seed);
        return net.forward(th, buffers, input, options.mode, &s);
    };

    const ForwardResult base = run(theta);
    std::vector<Tensor> weights;
    for (const Tensor& out : base.outputs) {
        Tensor r(out.shape());
        for (double& v : r.values()) v = rng_normal(setup, 0.0, 1.0);
        weights.push_back(std::move(r));
    }
    auto functional = [&](const ForwardResult& f) {
        double total = 0.0;
        for (std::size_t h = 0; h < weights.size(); ++h)
            for (std::size_t i = 0; i < weights[h].size(); ++i) total += weights[h][i] * f.outputs[h][i];
        return total;
    };
    const Vector analytic = net.backward(theta, base.cache, weights);
    const std::uint64_t signature = base.cache.kink_signature();

    // Round-robin over layers that own parameters.
    std::vector<const LayerInfo*> owners;
    for (const auto& info : net.layers())
        if (info.param_count > 0) owners.push_back(&info);
    if (owners.empty()) return {};
    // Exhaustive for small networks. Otherwise coordinates are drawn until
    // `coordinates` of them have been compared, skipping kink crossings, with
    // at most kMaxDrawFactor times as many draws.
    constexpr std::size_t kMaxDrawFactor = 4;
    const bool exhaustive = net.parameter_count() <= options.coordinates;
    const std::size_t max_draws = exhaustive ? net.parameter_count() : kMaxDrawFactor * options.coordinates;

    GradcheckResult res;
    Vector probe = theta;
    for (std::size_t k = 0; k < max_draws && (exhaustive || res.checked < options.coordinates); ++k) {
        std::size_t idx = k;
        if (!exhaustive) {
            const LayerInfo* info = owners[k % owners.size()];
            idx = info->param_offset + rng_index(setup, info->param_count);
        }
        const double orig = probe[idx];
        probe[idx] = orig + options.epsilon;
        const ForwardResult plus = run(probe);
        probe[idx] = orig - options.epsilon;
        const ForwardResult minus = run(probe);
        probe[idx] = orig;
        if (plus.cache.kink_signature() != signature || minus.cache.kink_signature() != signature) {
            ++res.skipped;
            continue;
        }
        const double numeric = (functional(plus) - functional(minus)) / (2.0 * options.epsilon);
        const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), options.floor});
        const double rel = std::abs(analytic[idx] - numeric) / denom;
        ++res.checked;
        if (rel > res.max_relative_error) {
            res.max_relative_error = rel;
            res.worst_index = idx;
        }
    }
    return res;
}

}  // namespace reglearn
