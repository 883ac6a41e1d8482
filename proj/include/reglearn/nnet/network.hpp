#pragma once

// ---------------------------------------------------------------------------
// Feedforward / convolutional networks with a shared trunk and named heads.
//
// All trainable weights live in one flat vector theta; each layer owns a
// contiguous slice (weights first, then bias). Batchnorm running statistics
// are not trainable and live in a separate "buffers" vector.
// ---------------------------------------------------------------------------

#include "reglearn/core/rng.hpp"
#include "reglearn/nnet/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reglearn {

enum class LayerKind { dense, relu, conv2d, avgpool2d, maxpool2d, batchnorm2d, dropout, linear_output };

std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_string(std::string_view s);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::string name;  // assigned "<trunk|head>.<index>" when left empty

    // dense / linear_output / conv2d
    std::size_t in = 0;
    std::size_t out = 0;
    bool bias = true;
    // conv2d
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t pad = 0;
    // pooling window (square, non-overlapping)
    std::size_t pool = 0;
    // batchnorm2d
    std::size_t channels = 0;
    // dropout
    double rate = 0.0;
};

LayerSpec dense(std::size_t in, std::size_t out, bool bias = true);
LayerSpec relu();
LayerSpec conv2d(std::size_t kernel_h, std::size_t kernel_w, std::size_t in_channels, std::size_t out_channels,
                 std::size_t pad, bool bias = true);
LayerSpec avgpool2d(std::size_t k);
LayerSpec maxpool2d(std::size_t k);
LayerSpec batchnorm2d(std::size_t channels);
LayerSpec dropout(double rate);
LayerSpec linear_output(std::size_t in, std::size_t out);

enum class TargetTransform { identity, log10 };

std::string_view to_string(TargetTransform t);
TargetTransform target_transform_from_string(std::string_view s);

struct HeadSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    TargetTransform target = TargetTransform::identity;
    bool stopping_iteration = false;  // predictions are also rounded to integers >= 1
};

struct NetworkSpec {
    Shape input_shape;  // per sample: {features} or {channels, height, width}
    std::vector<LayerSpec> trunk;
    std::vector<HeadSpec> heads;
};

// Plain fully connected network: ReLU after every hidden dense layer and a
// bias-free linear output.
NetworkSpec fully_connected_spec(const std::vector<std::size_t>& widths, const std::string& head_name = "lambda",
                                 TargetTransform target = TargetTransform::identity);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class StaleCache : public std::logic_error {
public:
    StaleCache() : std::logic_error("backward: cache was produced with different parameters") {}
};

enum class Mode { train, eval };

struct LayerInfo {
    LayerSpec spec;
    int head = -1;  // -1 for trunk layers
    std::size_t param_offset = 0;
    std::size_t param_count = 0;
    std::size_t buffer_offset = 0;
    std::size_t buffer_count = 0;
    Shape in_shape;   // per sample
    Shape out_shape;  // per sample
};

struct ParamSlice {
    std::size_t offset = 0;
    std::size_t count = 0;
};

struct LayerCache {
    Tensor input;
    Vector aux;                       // dropout mask, batchnorm normalized input
    Vector stats;                     // batchnorm: mean, variance, inverse std per channel
    std::vector<std::uint32_t> index; // maxpool argmax
    bool relu = false;
};

struct ForwardCache {
    Mode mode = Mode::eval;
    std::uint64_t theta_hash = 0;
    std::vector<LayerCache> layers;  // parallel to Network::layers()

    // Hash of every piecewise-linear branch taken (ReLU signs, maxpool winners).
    std::uint64_t kink_signature() const;
};

struct ForwardResult {
    std::vector<Tensor> outputs;  // one per head, in head order
    ForwardCache cache;
};

std::uint64_t hash_values(std::span<const double> v);

class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<LayerInfo>& layers() const { return layers_; }
    std::size_t parameter_count() const { return n_params_; }
    std::size_t buffer_count() const { return n_buffers_; }
    std::size_t head_count() const { return spec_.heads.size(); }
    std::size_t head_index(std::string_view name) const;
    Shape trunk_output_shape() const { return trunk_out_; }
    std::size_t input_size() const { return shape_size(spec_.input_shape); }

    // Union of the parameter slices of the trunk ("trunk") or of one head.
    ParamSlice group_slice(std::string_view group) const;
    ParamSlice buffer_group_slice(std::string_view group) const;
    // Per-parameter mask: true where the owning layer's name or group is listed.
    std::vector<bool> frozen_mask(const std::vector<std::string>& names) const;

    // He-normal weights, zero biases, unit batchnorm scale.
    Vector initial_parameters(RngStream& stream) const;
    // Running mean 0 and running variance 1.
    Vector initial_buffers() const;

    // Train mode with dropout needs a stream; batchnorm then uses batch
    // statistics. Eval mode is deterministic and uses running statistics.
    ForwardResult forward(const Vector& theta, const Vector& buffers, const Tensor& input, Mode mode,
                          RngStream* stream = nullptr) const;

    // Output of the trunk only, in eval mode.
    Tensor trunk_features(const Vector& theta, const Vector& buffers, const Tensor& input) const;

    // Gradient of sum_h <output_grads[h], outputs[h]> with respect to theta.
    // Heads whose gradient tensor is empty contribute nothing.
    Vector backward(const Vector& theta, const ForwardCache& cache, const std::vector<Tensor>& output_grads) const;

    // Folds the batch statistics of a train-mode forward pass into the
    // running averages.
    void update_running_stats(const ForwardCache& cache, Vector& buffers, double momentum = 0.1) const;

    // Spec of a network consisting of one head fed by trunk features.
    NetworkSpec head_subnetwork(std::string_view head) const;

private:
    NetworkSpec spec_;
    std::vector<LayerInfo> layers_;
    std::vector<std::size_t> head_begin_;  // index into layers_ of each head's first layer
    Shape trunk_out_;
    std::size_t trunk_end_ = 0;
    std::size_t n_params_ = 0;
    std::size_t n_buffers_ = 0;

    Tensor run_layers(std::size_t begin, std::size_t end, const Vector& theta, const Vector& buffers, Tensor x,
                      Mode mode, RngStream* stream, ForwardCache* cache) const;
    Tensor back_layers(std::size_t begin, std::size_t end, const Vector& theta, const ForwardCache& cache,
                       Tensor grad, Vector& out) const;
    std::pair<std::size_t, std::size_t> head_range(std::size_t h) const;
};

inline constexpr double kBatchnormEps = 1e-5;

}  // namespace reglearn
