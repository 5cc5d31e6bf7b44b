#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dcis/datamodel.hpp"
#include "dcis/image.hpp"
#include "dcis/nn.hpp"
#include "dcis/rng.hpp"

namespace dcis {

struct BackboneConfig {
    enum class Arch { small_cnn, densenet121 };

    Arch architecture = Arch::small_cnn;
    int input_size_px = 512;                       // small_cnn: any multiple of 32
    std::vector<int> block_widths = {16, 32, 64, 64, 64};
    int trunk_units = 64;
    std::string pretrained_weights;                // optional checkpoint to warm-start from

    void validate() const;
};

const char* arch_name(BackboneConfig::Arch arch);
BackboneConfig::Arch arch_from_name(const std::string& name);

// Raw head outputs for one patch: grade logits and observer-agreement logits,
// each over the three ordinal categories.
struct DualHeadOutputs {
    std::array<double, 3> grade_logits{};
    std::array<double, 3> agreement_logits{};
};

struct TrainConfig {
    int batch_size = 12;
    int per_grade_per_batch = 4;
    double learning_rate = 1e-4;
    double momentum = 0.95;
    int max_epochs = 20;
    int early_stop_patience = 3;
    bool dual_target = true;        // false: consensus-grade head only (baseline)
    double agreement_loss_weight = 1.0;
    // Batches per epoch. 0 = one full cycle of the largest grade class
    // (minority grades oversample within the epoch).
    int steps_per_epoch = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

std::array<double, 3> softmax3(const std::array<double, 3>& logits);

// Argmax category (1..3), ties broken toward the lower category.
int argmax_category(const std::array<double, 3>& logits);

Grade predicted_grade(const std::array<double, 3>& grade_logits);

// Cross-entropy against the true category scaled by (|predicted - true| + 1),
// where "predicted" is the argmax category. The multiplier is a constant with
// respect to the logits: the gradient is m * (softmax - onehot).
double ordinal_ce_loss(const std::array<double, 3>& logits, int true_category);
double ordinal_ce_loss_grad(const std::array<double, 3>& logits, int true_category,
                            std::array<double, 3>& dlogits);

// Grade-head loss plus, when dual_target is on, the agreement-head loss
// weighted by agreement_loss_weight.
double combined_loss(const DualHeadOutputs& outputs, const ConsensusLabel& label,
                     const TrainConfig& config);
double combined_loss_grad(const DualHeadOutputs& outputs, const ConsensusLabel& label,
                          const TrainConfig& config, std::array<double, 3>& dgrade,
                          std::array<double, 3>& dagree);

// Per-channel statistics of the training split on the [0, 1] intensity scale.
struct NormStats {
    std::array<double, 3> mean = {0.5, 0.5, 0.5};
    std::array<double, 3> stdev = {0.25, 0.25, 0.25};
};

nn::Tensor patch_to_tensor(const Image& pixels, const NormStats& norm);

// The dual-head classifier: conv/relu/maxpool blocks, global average pooling,
// a shared dense trunk, and one 3-way dense head per target.
class DualHeadNet {
public:
    explicit DualHeadNet(const BackboneConfig& config);

    const BackboneConfig& config() const { return config_; }

    void init_params(Rng& rng);
    std::vector<nn::ParamTensor*> params();

    // Forward one normalized patch; activations are kept for backward.
    DualHeadOutputs forward(const nn::Tensor& input);

    // Accumulate gradients from head-logit gradients of the last forward.
    void backward(const std::array<double, 3>& dgrade, const std::array<double, 3>& dagree,
                  bool skip_agreement_head = false);

    void sgd_step(double lr, double momentum, double grad_scale);
    void zero_grads();

private:
    BackboneConfig config_;
    std::vector<std::unique_ptr<nn::Layer>> trunk_;
    std::unique_ptr<nn::Dense> grade_head_;
    std::unique_ptr<nn::Dense> agree_head_;
    std::vector<nn::Tensor> acts_;  // acts_[0] = input, acts_[i] = trunk_[i-1] output
    nn::Tensor grade_out_, agree_out_;
    nn::Tensor dgrade_t_, dagree_t_, dtrunk_, scratch_a_, scratch_b_;
};

// Cycles each consensus-grade class in seeded shuffled order, reshuffling on
// exhaustion, and emits batches of per_grade lesions from every class.
class BalancedBatchStream {
public:
    BalancedBatchStream(std::vector<const LesionRecord*> train_lesions, int per_grade, Rng rng);

    std::vector<const LesionRecord*> next_batch();

private:
    struct ClassCycle {
        std::vector<const LesionRecord*> items;
        std::size_t pos = 0;
    };

    std::array<ClassCycle, 3> classes_;
    int per_grade_;
    Rng rng_;
};

struct TensorBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

// Self-describing single-file archive: JSON header (config, statistics, RNG
// state, shape table) followed by raw little-endian float32 weights.
struct Checkpoint {
    int version = 1;
    BackboneConfig backbone;
    std::string config_json;  // full run-configuration snapshot, opaque here
    int epoch = 0;
    double best_val_kappa = 0.0;
    NormStats norm;
    std::string rng_state;
    std::vector<TensorBlob> tensors;
};

Checkpoint snapshot_net(DualHeadNet& net);  // fills backbone + tensors
void load_into_net(const Checkpoint& checkpoint, DualHeadNet& net);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dcis
