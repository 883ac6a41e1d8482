#include "reglearn/nnet/network.hpp"

#include "reglearn/nnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace reglearn {

// ---- layer descriptors ------------------------------------------------------

std::string_view to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::avgpool2d: return "avgpool2d";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::batchnorm2d: return "batchnorm2d";
        case LayerKind::dropout: return "dropout";
        case LayerKind::linear_output: return "linear_output";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view s) {
    for (LayerKind k : {LayerKind::dense, LayerKind::relu, LayerKind::conv2d, LayerKind::avgpool2d,
                        LayerKind::maxpool2d, LayerKind::batchnorm2d, LayerKind::dropout, LayerKind::linear_output})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown layer type '" + std::string(s) + "'");
}

std::string_view to_string(TargetTransform t) { return t == TargetTransform::log10 ? "log10" : "identity"; }

TargetTransform target_transform_from_string(std::string_view s) {
    if (s == "identity") return TargetTransform::identity;
    if (s == "log10") return TargetTransform::log10;
    throw std::invalid_argument("unknown target transform '" + std::string(s) + "'");
}

LayerSpec dense(std::size_t in, std::size_t out, bool bias) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in = in;
    l.out = out;
    l.bias = bias;
    return l;
}

LayerSpec relu() { return LayerSpec{}; }

LayerSpec conv2d(std::size_t kernel_h, std::size_t kernel_w, std::size_t in_channels, std::size_t out_channels,
                 std::size_t pad, bool bias) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.bias = bias;
    l.kernel_h = kernel_h;
    l.kernel_w = kernel_w;
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.pad = pad;
    return l;
}

LayerSpec avgpool2d(std::size_t k) {
    LayerSpec l;
    l.kind = LayerKind::avgpool2d;
    l.pool = k;
    return l;
}

LayerSpec maxpool2d(std::size_t k) {
    LayerSpec l;
    l.kind = LayerKind::maxpool2d;
    l.pool = k;
    return l;
}

LayerSpec batchnorm2d(std::size_t channels) {
    LayerSpec l;
    l.kind = LayerKind::batchnorm2d;
    l.channels = channels;
    return l;
}

LayerSpec dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.rate = rate;
    return l;
}

LayerSpec linear_output(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::linear_output;
    l.in = in;
    l.out = out;
    l.bias = false;
    return l;
}

NetworkSpec fully_connected_spec(const std::vector<std::size_t>& widths, const std::string& head_name,
                                 TargetTransform target) {
    if (widths.size() < 2) throw std::invalid_argument("fully_connected_spec: need at least input and output width");
    NetworkSpec s;
    s.input_shape = {widths.front()};
    HeadSpec h;
    h.name = head_name;
    h.target = target;
    for (std::size_t i = 0; i + 2 < widths.size(); ++i) {
        h.layers.push_back(dense(widths[i], widths[i + 1]));
        h.layers.push_back(relu());
    }
    h.layers.push_back(linear_output(widths[widths.size() - 2], widths.back()));
    s.heads.push_back(std::move(h));
    return s;
}

// ---- hashing ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace

std::uint64_t hash_values(std::span<const double> v) { return fnv_bytes(kFnvOffset, v.data(), v.size_bytes()); }

std::uint64_t ForwardCache::kink_signature() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& lc : layers) {
        if (!lc.index.empty()) h = fnv_bytes(h, lc.index.data(), lc.index.size() * sizeof(std::uint32_t));
        if (lc.relu) {
            for (std::size_t i = 0; i < lc.input.size(); ++i) {
                const unsigned char active = lc.input[i] > 0.0 ? 1 : 0;
                h = fnv_bytes(h, &active, 1);
            }
        }
    }
    return h;
}

// ---- construction -----------------------------------------------------------

namespace {

std::string where(const std::string& name) { return "layer '" + name + "': "; }

Shape infer_shape(LayerSpec& l, const Shape& in) {
    const std::size_t flat = shape_size(in);
    switch (l.kind) {
        case LayerKind::dense:
        case LayerKind::linear_output:
            if (l.in == 0 || l.out == 0) throw ShapeError(where(l.name) + "dimensions must be positive");
            if (l.in != flat)
                throw ShapeError(where(l.name) + "expects " + std::to_string(l.in) + " inputs, got " +
                                 shape_to_string(in));
            if (l.kind == LayerKind::linear_output) l.bias = false;
            return {l.out};
        case LayerKind::relu:
            return in;
        case LayerKind::dropout:
            if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ShapeError(where(l.name) + "dropout rate must be in [0, 1)");
            return in;
        case LayerKind::conv2d: {
            if (in.size() != 3) throw ShapeError(where(l.name) + "conv2d needs (channels, height, width) input");
            if (l.in_channels != in[0])
                throw ShapeError(where(l.name) + "expects " + std::to_string(l.in_channels) + " channels, got " +
                                 shape_to_string(in));
            if (l.kernel_h == 0 || l.kernel_w == 0 || l.out_channels == 0)
                throw ShapeError(where(l.name) + "kernel and channel counts must be positive");
            if (in[1] + 2 * l.pad < l.kernel_h || in[2] + 2 * l.pad < l.kernel_w)
                throw ShapeError(where(l.name) + "kernel larger than padded input");
            return {l.out_channels, in[1] + 2 * l.pad - l.kernel_h + 1, in[2] + 2 * l.pad - l.kernel_w + 1};
        }
        case LayerKind::avgpool2d:
        case LayerKind::maxpool2d:
            if (in.size() != 3) throw ShapeError(where(l.name) + "pooling needs (channels, height, width) input");
            if (l.pool == 0 || in[1] < l.pool || in[2] < l.pool)
                throw ShapeError(where(l.name) + "pool window must be positive and fit the input");
            return {in[0], in[1] / l.pool, in[2] / l.pool};
        case LayerKind::batchnorm2d:
            if (in.size() != 3 || in[0] != l.channels)
                throw ShapeError(where(l.name) + "batchnorm2d expects " + std::to_string(l.channels) +
                                 " channels, got " + shape_to_string(in));
            return in;
    }
    throw ShapeError("unknown layer kind");
}

std::size_t param_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::dense: return l.in * l.out + (l.bias ? l.out : 0);
        case LayerKind::linear_output: return l.in * l.out;
        case LayerKind::conv2d:
            return l.out_channels * l.in_channels * l.kernel_h * l.kernel_w + (l.bias ? l.out_channels : 0);
        case LayerKind::batchnorm2d: return 2 * l.channels;
        default: return 0;
    }
}

}  // namespace

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.input_shape.empty() || shape_size(spec_.input_shape) == 0)
        throw ShapeError("network input shape must be nonempty");
    if (spec_.heads.empty()) throw ShapeError("network needs at least one head");

    auto add = [&](LayerSpec& l, int head, const Shape& in, const std::string& prefix, std::size_t idx) {
        if (l.name.empty()) l.name = prefix + "." + std::to_string(idx);
        LayerInfo info;
        info.head = head;
        info.in_shape = in;
        info.out_shape = infer_shape(l, in);
        info.spec = l;
        info.param_offset = n_params_;
        info.param_count = param_count(l);
        n_params_ += info.param_count;
        info.buffer_offset = n_buffers_;
        info.buffer_count = l.kind == LayerKind::batchnorm2d ? 2 * l.channels : 0;
        n_buffers_ += info.buffer_count;
        layers_.push_back(info);
        return layers_.back().out_shape;
    };

    Shape cur = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.trunk.size(); ++i) {
        if (spec_.trunk[i].kind == LayerKind::linear_output)
            throw ShapeError("linear_output is only allowed as the last layer of a head");
        cur = add(spec_.trunk[i], -1, cur, "trunk", i);
    }
    trunk_out_ = cur;
    trunk_end_ = layers_.size();

    std::vector<std::string> seen;
    for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
        HeadSpec& head = spec_.heads[h];
        if (head.name.empty() || head.name == "trunk") throw ShapeError("head names must be nonempty and not 'trunk'");
        if (std::find(seen.begin(), seen.end(), head.name) != seen.end())
            throw ShapeError("duplicate head name '" + head.name + "'");
        seen.push_back(head.name);
        if (head.layers.empty() || head.layers.back().kind != LayerKind::linear_output)
            throw ShapeError("head '" + head.name + "' must end with linear_output");
        head_begin_.push_back(layers_.size());
        Shape hc = trunk_out_;
        for (std::size_t i = 0; i < head.layers.size(); ++i) {
            if (i + 1 < head.layers.size() && head.layers[i].kind == LayerKind::linear_output)
                throw ShapeError("linear_output is only allowed as the last layer of a head");
            hc = add(head.layers[i], static_cast<int>(h), hc, head.name, i);
        }
    }
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (layers_[i].spec.name == layers_[j].spec.name)
                throw ShapeError("duplicate layer name '" + layers_[i].spec.name + "'");
}

std::size_t Network::head_index(std::string_view name) const {
    for (std::size_t h = 0; h < spec_.heads.size(); ++h)
        if (spec_.heads[h].name == name) return h;
    throw std::invalid_argument("unknown head '" + std::string(name) + "'");
}

std::pair<std::size_t, std::size_t> Network::head_range(std::size_t h) const {
    const std::size_t end = h + 1 < head_begin_.size() ? head_begin_[h + 1] : layers_.size();
    return {head_begin_[h], end};
}

ParamSlice Network::group_slice(std::string_view group) const {
    std::size_t b = 0, e = 0;
    if (group == "trunk") {
        b = 0;
        e = trunk_end_;
    } else {
        std::tie(b, e) = head_range(head_index(group));
    }
    if (b == e) return {n_params_, 0};
    const std::size_t off = layers_[b].param_offset;
    return {off, layers_[e - 1].param_offset + layers_[e - 1].param_count - off};
}

ParamSlice Network::buffer_group_slice(std::string_view group) const {
    std::size_t b = 0, e = 0;
    if (group == "trunk") {
        e = trunk_end_;
    } else {
        std::tie(b, e) = head_range(head_index(group));
    }
    if (b == e) return {n_buffers_, 0};
    const std::size_t off = layers_[b].buffer_offset;
    return {off, layers_[e - 1].buffer_offset + layers_[e - 1].buffer_count - off};
}

std::vector<bool> Network::frozen_mask(const std::vector<std::string>& names) const {
    std::vector<bool> mask(n_params_, false);
    for (const std::string& n : names) {
        bool matched = false;
        for (const auto& info : layers_) {
            const bool group_match = (n == "trunk" && info.head < 0) ||
                                     (info.head >= 0 && spec_.heads[static_cast<std::size_t>(info.head)].name == n);
            if (group_match || info.spec.name == n) {
                matched = true;
                std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(info.param_offset), info.param_count, true);
            }
        }
        if (!matched) throw std::invalid_argument("freeze: no layer or group named '" + n + "'");
    }
    return mask;
}

Vector Network::initial_parameters(RngStream& stream) const {
    Vector theta(n_params_, 0.0);
    for (const auto& info : layers_) {
        const LayerSpec& l = info.spec;
        double* p = theta.data() + info.param_offset;
        switch (l.kind) {
            case LayerKind::dense:
            case LayerKind::linear_output: {
                const double gain = l.kind == LayerKind::dense ? 2.0 : 1.0;
                const double sd = std::sqrt(gain / static_cast<double>(l.in));
                for (std::size_t i = 0; i < l.in * l.out; ++i) p[i] = rng_normal(stream, 0.0, sd);
                break;
            }
            case LayerKind::conv2d: {
                const std::size_t fan_in = l.in_channels * l.kernel_h * l.kernel_w;
                const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (std::size_t i = 0; i < l.out_channels * fan_in; ++i) p[i] = rng_normal(stream, 0.0, sd);
                break;
            }
            case LayerKind::batchnorm2d:
                std::fill_n(p, l.channels, 1.0);
                break;
            default:
                break;
        }
    }
    return theta;
}

Vector Network::initial_buffers() const {
    Vector b(n_buffers_, 0.0);
    for (const auto& info : layers_)
        if (info.spec.kind == LayerKind::batchnorm2d)
            std::fill_n(b.begin() + static_cast<std::ptrdiff_t>(info.buffer_offset + info.spec.channels),
                        info.spec.channels, 1.0);
    return b;
}

NetworkSpec Network::head_subnetwork(std::string_view head) const {
    NetworkSpec s;
    s.input_shape = trunk_out_;
    s.heads.push_back(spec_.heads[head_index(head)]);
    return s;
}

// ---- layer forward ----------------------------------------------------------

namespace {

Shape batched(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

kernels::ConvShape conv_shape(const LayerInfo& info, std::size_t batch) {
    kernels::ConvShape s;
    s.batch = batch;
    s.in_channels = info.in_shape[0];
    s.height = info.in_shape[1];
    s.width = info.in_shape[2];
    s.out_channels = info.spec.out_channels;
    s.kernel_h = info.spec.kernel_h;
    s.kernel_w = info.spec.kernel_w;
    s.pad = info.spec.pad;
    return s;
}

Tensor layer_forward(const LayerInfo& info, const Vector& theta, const Vector& buffers, const Tensor& x, Mode mode,
                     RngStream* stream, LayerCache& lc) {
    const LayerSpec& l = info.spec;
    const std::size_t n = x.batch();
    Tensor y(batched(n, info.out_shape));
    const double* p = theta.data() + info.param_offset;

    switch (l.kind) {
        case LayerKind::dense:
        case LayerKind::linear_output:
            kernels::dense_forward(n, l.in, l.out, x.data(), p, l.bias ? p + l.in * l.out : nullptr, y.data());
            break;
        case LayerKind::relu:
            lc.relu = true;
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case LayerKind::dropout:
            if (mode == Mode::eval || l.rate == 0.0) {
                y = x;
                break;
            }
            if (!stream) throw std::invalid_argument("forward: dropout in train mode needs a random stream");
            lc.aux.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                lc.aux[i] = stream->next_unit() < l.rate ? 0.0 : 1.0 / (1.0 - l.rate);
                y[i] = x[i] * lc.aux[i];
            }
            break;
        case LayerKind::conv2d: {
            const auto s = conv_shape(info, n);
            const double* w = p;
            const double* b = l.bias ? p + s.out_channels * s.in_channels * s.kernel_h * s.kernel_w : nullptr;
            kernels::conv2d_forward(s, x.data(), w, b, y.data());
            break;
        }
        case LayerKind::avgpool2d:
        case LayerKind::maxpool2d: {
            const std::size_t c = info.in_shape[0], h = info.in_shape[1], w = info.in_shape[2];
            const std::size_t oh = info.out_shape[1], ow = info.out_shape[2], k = l.pool;
            const bool is_max = l.kind == LayerKind::maxpool2d;
            if (is_max) lc.index.assign(y.size(), 0);
            for (std::size_t plane = 0; plane < n * c; ++plane) {
                const double* xp = x.data() + plane * h * w;
                double* yp = y.data() + plane * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double acc = is_max ? -INFINITY : 0.0;
                        std::uint32_t arg = 0;
                        for (std::size_t a = 0; a < k; ++a)
                            for (std::size_t b = 0; b < k; ++b) {
                                const std::size_t idx = (oy * k + a) * w + ox * k + b;
                                if (is_max) {
                                    if (xp[idx] > acc) {
                                        acc = xp[idx];
                                        arg = static_cast<std::uint32_t>(idx);
                                    }
                                } else {
                                    acc += xp[idx];
                                }
                            }
                        yp[oy * ow + ox] = is_max ? acc : acc / static_cast<double>(k * k);
                        if (is_max) lc.index[plane * oh * ow + oy * ow + ox] = arg;
                    }
            }
            break;
        }
        case LayerKind::batchnorm2d: {
            const std::size_t c = l.channels, hw = info.in_shape[1] * info.in_shape[2];
            const double m = static_cast<double>(n * hw);
            const double* gamma = p;
            const double* beta = p + c;
            lc.stats.assign(3 * c, 0.0);
            lc.aux.resize(x.size());
            for (std::size_t ch = 0; ch < c; ++ch) {
                double mean, var;
                if (mode == Mode::train) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double* xp = x.data() + (j * c + ch) * hw;
                        for (std::size_t i = 0; i < hw; ++i) s += xp[i];
                    }
                    mean = s / m;
                    double ss = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double* xp = x.data() + (j * c + ch) * hw;
                        for (std::size_t i = 0; i < hw; ++i) ss += (xp[i] - mean) * (xp[i] - mean);
                    }
                    var = ss / m;
                } else {
                    mean = buffers[info.buffer_offset + ch];
                    var = buffers[info.buffer_offset + c + ch];
                }
                const double inv_std = 1.0 / std::sqrt(var + kBatchnormEps);
                lc.stats[ch] = mean;
                lc.stats[c + ch] = var;
                lc.stats[2 * c + ch] = inv_std;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t off = (j * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xh = (x[off + i] - mean) * inv_std;
                        lc.aux[off + i] = xh;
                        y[off + i] = gamma[ch] * xh + beta[ch];
                    }
                }
            }
            break;
        }
    }
    return y;
}

// ---- layer backward -----------------------------------------------------------

Tensor layer_backward(const LayerInfo& info, const Vector& theta, const LayerCache& lc, Mode mode, const Tensor& dy,
                      Vector& grad) {
    const LayerSpec& l = info.spec;
    const Tensor& x = lc.input;
    const std::size_t n = x.batch();
    Tensor dx(x.shape());
    const double* p = theta.data() + info.param_offset;
    double* g = grad.data() + info.param_offset;

    switch (l.kind) {
        case LayerKind::dense:
        case LayerKind::linear_output:
            kernels::dense_backward_weights(n, l.in, l.out, x.data(), dy.data(), g,
                                            l.bias ? g + l.in * l.out : nullptr);
            kernels::dense_backward_input(n, l.in, l.out, p, dy.data(), dx.data());
            break;
        case LayerKind::relu:
            for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
            break;
        case LayerKind::dropout:
            if (lc.aux.empty()) {
                dx = dy;
            } else {
                for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * lc.aux[i];
            }
            break;
        case LayerKind::conv2d: {
            const auto s = conv_shape(info, n);
            const std::size_t wsize = s.out_channels * s.in_channels * s.kernel_h * s.kernel_w;
            kernels::conv2d_backward_weights(s, x.data(), dy.data(), g, l.bias ? g + wsize : nullptr);
            kernels::conv2d_backward_input(s, p, dy.data(), dx.data());
            break;
        }
        case LayerKind::avgpool2d:
        case LayerKind::maxpool2d: {
            const std::size_t c = info.in_shape[0], h = info.in_shape[1], w = info.in_shape[2];
            const std::size_t oh = info.out_shape[1], ow = info.out_shape[2], k = l.pool;
            const double scale = 1.0 / static_cast<double>(k * k);
            for (std::size_t plane = 0; plane < n * c; ++plane) {
                double* dxp = dx.data() + plane * h * w;
                const double* gp = dy.data() + plane * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::size_t o = oy * ow + ox;
                        if (l.kind == LayerKind::maxpool2d) {
                            dxp[lc.index[plane * oh * ow + o]] += gp[o];
                        } else {
                            for (std::size_t a = 0; a < k; ++a)
                                for (std::size_t b = 0; b < k; ++b) dxp[(oy * k + a) * w + ox * k + b] += gp[o] * scale;
                        }
                    }
            }
            break;
        }
        case LayerKind::batchnorm2d: {
            const std::size_t c = l.channels, hw = info.in_shape[1] * info.in_shape[2];
            const double m = static_cast<double>(n * hw);
            const double* gamma = p;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double dgamma = 0.0, dbeta = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t off = (j * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        dgamma += dy[off + i] * lc.aux[off + i];
                        dbeta += dy[off + i];
                    }
                }
                g[ch] = dgamma;
                g[c + ch] = dbeta;
                const double inv_std = lc.stats[2 * c + ch];
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t off = (j * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        if (mode == Mode::train) {
                            dx[off + i] = gamma[ch] * inv_std / m * (m * dy[off + i] - dbeta - lc.aux[off + i] * dgamma);
                        } else {
                            dx[off + i] = gamma[ch] * inv_std * dy[off + i];
                        }
                    }
                }
            }
            break;
        }
    }
    return dx;
}

}  // namespace

// ---- network passes -------------------------------------------------------------

Tensor Network::run_layers(std::size_t begin, std::size_t end, const Vector& theta, const Vector& buffers, Tensor x,
                           Mode mode, RngStream* stream, ForwardCache* cache) const {
    for (std::size_t i = begin; i < end; ++i) {
        if (cache) {
            LayerCache& lc = cache->layers[i];
            lc.input = std::move(x);
            x = layer_forward(layers_[i], theta, buffers, lc.input, mode, stream, lc);
        } else {
            LayerCache scratch;
            x = layer_forward(layers_[i], theta, buffers, x, mode, stream, scratch);
        }
    }
    return x;
}

ForwardResult Network::forward(const Vector& theta, const Vector& buffers, const Tensor& input, Mode mode,
                               RngStream* stream) const {
    if (theta.size() != n_params_) throw ShapeError("forward: parameter vector has wrong length");
    if (buffers.size() != n_buffers_) throw ShapeError("forward: buffer vector has wrong length");
    if (input.rank() < 2 || input.sample_shape() != spec_.input_shape) {
        // Accept flat rows for any input shape with the right sample size.
        if (!(input.rank() == 2 && input.sample_size() == input_size()))
            throw ShapeError("forward: input shape " + shape_to_string(input.shape()) + " does not match " +
                             shape_to_string(spec_.input_shape));
    }
    if (input.batch() == 0) throw ShapeError("forward: empty batch");

    ForwardResult res;
    res.cache.mode = mode;
    res.cache.theta_hash = hash_values(theta);
    res.cache.layers.resize(layers_.size());
    Tensor x(batched(input.batch(), spec_.input_shape), input.values());
    Tensor features = run_layers(0, trunk_end_, theta, buffers, std::move(x), mode, stream, &res.cache);
    for (std::size_t h = 0; h < head_count(); ++h) {
        const auto [b, e] = head_range(h);
        res.outputs.push_back(run_layers(b, e, theta, buffers, features, mode, stream, &res.cache));
    }
    return res;
}

Tensor Network::trunk_features(const Vector& theta, const Vector& buffers, const Tensor& input) const {
    if (input.sample_size() != input_size()) throw ShapeError("trunk_features: input size mismatch");
    // Chunked so that wide early layers never hold the whole batch.
    constexpr std::size_t kChunk = 256;
    const std::size_t n = input.batch(), in = input_size(), out = shape_size(trunk_out_);
    Tensor features(batched(n, trunk_out_));
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t rows = std::min(kChunk, n - start);
        const auto first = input.values().begin() + static_cast<std::ptrdiff_t>(start * in);
        Tensor x(batched(rows, spec_.input_shape), Vector(first, first + static_cast<std::ptrdiff_t>(rows * in)));
        const Tensor y = run_layers(0, trunk_end_, theta, buffers, std::move(x), Mode::eval, nullptr, nullptr);
        std::copy(y.values().begin(), y.values().end(),
                  features.values().begin() + static_cast<std::ptrdiff_t>(start * out));
    }
    return features;
}

Tensor Network::back_layers(std::size_t begin, std::size_t end, const Vector& theta, const ForwardCache& cache,
                            Tensor grad, Vector& out) const {
    for (std::size_t i = end; i-- > begin;)
        grad = layer_backward(layers_[i], theta, cache.layers[i], cache.mode, grad, out);
    return grad;
}

Vector Network::backward(const Vector& theta, const ForwardCache& cache, const std::vector<Tensor>& output_grads) const {
    if (cache.layers.size() != layers_.size() || cache.theta_hash != hash_values(theta)) throw StaleCache();
    if (output_grads.size() != head_count()) throw ShapeError("backward: need one gradient tensor per head");

    Vector grad(n_params_, 0.0);
    Tensor trunk_grad;
    for (std::size_t h = 0; h < head_count(); ++h) {
        if (output_grads[h].empty()) continue;
        const auto [b, e] = head_range(h);
        const Tensor& expected = cache.layers[e - 1].input;
        if (output_grads[h].batch() != expected.batch() ||
            output_grads[h].sample_size() != shape_size(layers_[e - 1].out_shape))
            throw ShapeError("backward: gradient for head '" + spec_.heads[h].name + "' has wrong shape");
        Tensor g = back_layers(b, e, theta, cache, output_grads[h], grad);
        if (trunk_grad.empty()) {
            trunk_grad = std::move(g);
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) trunk_grad[i] += g[i];
        }
    }
    if (!trunk_grad.empty()) {
        Tensor shaped(batched(trunk_grad.batch(), trunk_out_), std::move(trunk_grad.values()));
        back_layers(0, trunk_end_, theta, cache, std::move(shaped), grad);
    }
    return grad;
}

void Network::update_running_stats(const ForwardCache& cache, Vector& buffers, double momentum) const {
    if (cache.mode != Mode::train) return;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerInfo& info = layers_[i];
        if (info.spec.kind != LayerKind::batchnorm2d) continue;
        const LayerCache& lc = cache.layers[i];
        if (lc.stats.empty()) continue;
        const std::size_t c = info.spec.channels;
        const double m = static_cast<double>(lc.input.batch() * info.in_shape[1] * info.in_shape[2]);
        const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double& rm = buffers[info.buffer_offset + ch];
            double& rv = buffers[info.buffer_offset + c + ch];
            rm = (1.0 - momentum) * rm + momentum * lc.stats[ch];
            rv = (1.0 - momentum) * rv + momentum * lc.stats[c + ch] * unbias;
        }
    }
}

}  // namespace reglearn
