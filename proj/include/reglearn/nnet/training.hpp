#pragma once

#include "reglearn/nnet/network.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace reglearn {

// ---- loss -------------------------------------------------------------------

struct LossValue {
    double value = 0.0;
    Tensor gradient;
};

// value = (1/2J) sum_j ||pred_j - target_j||^2, gradient = (pred - target)/J.
LossValue mse_loss(const Tensor& pred, const Tensor& target);

// ---- optimizers -------------------------------------------------------------

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct SgdMomentumOptions {
    double lr = 1e-2;
    double momentum = 0.9;
};

using OptimizerOptions = std::variant<AdamOptions, SgdMomentumOptions>;

struct OptimizerState {
    Vector m;  // Adam first moment, or SGD velocity
    Vector v;  // Adam second moment
    std::uint64_t step = 0;
};

// One update of theta in place. Entries with frozen[i] set are left untouched
// (an empty mask freezes nothing).
void optimizer_step(OptimizerState& state, Vector& theta, const Vector& gradient, const OptimizerOptions& options,
                    const std::vector<bool>& frozen = {});

// ---- training ---------------------------------------------------------------

struct TrainingOptions {
    OptimizerOptions optimizer = AdamOptions{};
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double weight_decay = 0.0;  // alpha in the penalty alpha^2 ||theta||^2
    std::uint64_t seed = 0;
    std::vector<std::string> freeze;  // layer names, head names, or "trunk"
    bool normalize_inputs = true;
    bool standardize_targets = true;

    void validate() const;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch);
    std::size_t epoch;
    std::size_t batch;
};

// Per-feature affine map x -> (x - shift) * scale.
struct Affine {
    Vector shift;
    Vector scale;

    bool empty() const { return shift.empty(); }
    void apply(std::span<double> x) const;
    void invert(std::span<double> x) const;
};

// Fitted standardization of one head's (transformed) targets.
struct TargetNormalization {
    TargetTransform transform = TargetTransform::identity;
    Affine affine;
};

struct Checkpoint {
    NetworkSpec spec;
    Vector theta;
    Vector buffers;
    Affine input;  // empty when inputs are fed unnormalized
    std::map<std::string, TargetNormalization> targets;
    std::map<std::string, std::vector<double>> history;  // per-epoch mean training loss by stage
};

struct TrainingData {
    Tensor inputs;                          // batch x per-sample input
    std::map<std::string, Tensor> targets;  // head name -> batch x head output, natural units
};

// Trains on the heads that have targets. Initial parameters default to a
// seeded He initialization. The recorded loss is the data term averaged over
// samples in the transformed, standardized target space.
Checkpoint train(const Network& net, const TrainingData& data, const TrainingOptions& options,
                 const std::optional<Vector>& initial_theta = {}, const std::optional<Vector>& initial_buffers = {});

// Stage 1 trains trunk and the first head with the second head frozen. Stage
// 2 trains only the second head on cached eval-mode trunk features.
Checkpoint train_two_stage(const Network& net, const TrainingData& data, const std::string& first_head,
                           const std::string& second_head, const TrainingOptions& stage1,
                           const TrainingOptions& stage2);

// ---- inference --------------------------------------------------------------

struct HeadPrediction {
    Tensor values;                    // natural units (transform and standardization undone)
    std::vector<long long> rounded;   // stopping heads: nearest integer clamped to >= 1
};

std::map<std::string, HeadPrediction> predict(const Checkpoint& ckpt, const Tensor& inputs);

long long round_stopping_iteration(double raw);

}  // namespace reglearn
