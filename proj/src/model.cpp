#include "dcis/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dcis/kernels.hpp"

namespace dcis {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

void BackboneConfig::validate() const {
    if (architecture == Arch::densenet121)
        throw CapabilityError(
            "densenet121 backbone is not available in this build; "
            "use small_cnn (densenet121 is a full-scale configuration point only)");
    if (input_size_px <= 0 || input_size_px % 32 != 0)
        throw ValidationError("small_cnn input size must be a positive multiple of 32, got " +
                              std::to_string(input_size_px));
    if (block_widths.empty()) throw ValidationError("backbone needs at least one block");
    for (int w : block_widths)
        if (w <= 0) throw ValidationError("block widths must be positive");
    const int down = 1 << static_cast<int>(block_widths.size());
    if (input_size_px % down != 0)
        throw ValidationError("input size must be divisible by 2^blocks = " + std::to_string(down));
    if (trunk_units <= 0) throw ValidationError("trunk_units must be positive");
}

const char* arch_name(BackboneConfig::Arch arch) {
    return arch == BackboneConfig::Arch::densenet121 ? "densenet121" : "small_cnn";
}

BackboneConfig::Arch arch_from_name(const std::string& name) {
    if (name == "small_cnn") return BackboneConfig::Arch::small_cnn;
    if (name == "densenet121") return BackboneConfig::Arch::densenet121;
    throw ValidationError("unknown backbone architecture: " + name);
}

void TrainConfig::validate() const {
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (per_grade_per_batch * 3 != batch_size)
        throw ValidationError("balanced batching requires per_grade_per_batch * 3 == batch_size (" +
                              std::to_string(per_grade_per_batch) + " * 3 != " +
                              std::to_string(batch_size) + ")");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must lie in [0, 1)");
    if (max_epochs < 0) throw ValidationError("max_epochs must be >= 0");
    if (early_stop_patience < 1) throw ValidationError("early_stop_patience must be >= 1");
    if (steps_per_epoch < 0) throw ValidationError("steps_per_epoch must be >= 0");
    if (agreement_loss_weight < 0.0) throw ValidationError("agreement_loss_weight must be >= 0");
}

std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
    const double m = std::max({logits[0], logits[1], logits[2]});
    std::array<double, 3> e{};
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        e[i] = std::exp(logits[i] - m);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return e;
}

int argmax_category(const std::array<double, 3>& logits) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (logits[i] > logits[best]) best = i;
    return best + 1;
}

Grade predicted_grade(const std::array<double, 3>& grade_logits) {
    return Grade(argmax_category(grade_logits));
}

namespace {

void check_finite(const std::array<double, 3>& logits) {
    for (double v : logits)
        if (!std::isfinite(v)) throw ValidationError("non-finite logits in loss computation");
}

void check_category(int c) {
    if (c < 1 || c > 3)
        throw ValidationError("ordinal category must be 1..3, got " + std::to_string(c));
}

}  // namespace

double ordinal_ce_loss(const std::array<double, 3>& logits, int true_category) {
    check_finite(logits);
    check_category(true_category);
    const auto p = softmax3(logits);
    const int multiplier = std::abs(argmax_category(logits) - true_category) + 1;
    return multiplier * -std::log(p[true_category - 1]);
}

double ordinal_ce_loss_grad(const std::array<double, 3>& logits, int true_category,
                            std::array<double, 3>& dlogits) {
    check_finite(logits);
    check_category(true_category);
    const auto p = softmax3(logits);
    const int multiplier = std::abs(argmax_category(logits) - true_category) + 1;
    for (int i = 0; i < 3; ++i)
        dlogits[i] = multiplier * (p[i] - (i == true_category - 1 ? 1.0 : 0.0));
    return multiplier * -std::log(p[true_category - 1]);
}

double combined_loss(const DualHeadOutputs& outputs, const ConsensusLabel& label,
                     const TrainConfig& config) {
    const double grade_loss = ordinal_ce_loss(outputs.grade_logits, label.consensus.value());
    if (!config.dual_target) return grade_loss;
    return grade_loss + config.agreement_loss_weight *
                            ordinal_ce_loss(outputs.agreement_logits, label.agreement_count);
}

double combined_loss_grad(const DualHeadOutputs& outputs, const ConsensusLabel& label,
                          const TrainConfig& config, std::array<double, 3>& dgrade,
                          std::array<double, 3>& dagree) {
    const double grade_loss =
        ordinal_ce_loss_grad(outputs.grade_logits, label.consensus.value(), dgrade);
    dagree = {0.0, 0.0, 0.0};
    if (!config.dual_target) return grade_loss;
    std::array<double, 3> da{};
    const double agree_loss =
        ordinal_ce_loss_grad(outputs.agreement_logits, label.agreement_count, da);
    for (int i = 0; i < 3; ++i) dagree[i] = config.agreement_loss_weight * da[i];
    return grade_loss + config.agreement_loss_weight * agree_loss;
}

nn::Tensor patch_to_tensor(const Image& pixels, const NormStats& norm) {
    nn::Tensor t(3, pixels.height, pixels.width);
    const std::size_t plane = static_cast<std::size_t>(pixels.height) * pixels.width;
    for (int c = 0; c < 3; ++c) {
        const double inv_std = 1.0 / norm.stdev[c];
        float* dst = t.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i)
            dst[i] = static_cast<float>((pixels.rgb[i * 3 + c] / 255.0 - norm.mean[c]) * inv_std);
    }
    return t;
}

DualHeadNet::DualHeadNet(const BackboneConfig& config) : config_(config) {
    config_.validate();
    int in_ch = 3;
    int block = 0;
    for (int width : config_.block_widths) {
        trunk_.push_back(std::make_unique<nn::Conv3x3>("block" + std::to_string(block) + ".conv",
                                                       in_ch, width));
        trunk_.push_back(std::make_unique<nn::ReLU>());
        trunk_.push_back(std::make_unique<nn::MaxPool2>());
        in_ch = width;
        ++block;
    }
    trunk_.push_back(std::make_unique<nn::GlobalAvgPool>());
    trunk_.push_back(std::make_unique<nn::Dense>("trunk", in_ch, config_.trunk_units));
    trunk_.push_back(std::make_unique<nn::ReLU>());
    grade_head_ = std::make_unique<nn::Dense>("grade_head", config_.trunk_units, 3);
    agree_head_ = std::make_unique<nn::Dense>("agreement_head", config_.trunk_units, 3);
    acts_.resize(trunk_.size() + 1);
}

void DualHeadNet::init_params(Rng& rng) { nn::init_he_uniform(params(), rng); }

std::vector<nn::ParamTensor*> DualHeadNet::params() {
    std::vector<nn::ParamTensor*> out;
    for (auto& layer : trunk_)
        for (auto* p : layer->params()) out.push_back(p);
    for (auto* p : grade_head_->params()) out.push_back(p);
    for (auto* p : agree_head_->params()) out.push_back(p);
    return out;
}

DualHeadOutputs DualHeadNet::forward(const nn::Tensor& input) {
    if (input.c != 3 || input.h != config_.input_size_px || input.w != config_.input_size_px)
        throw ValidationError("forward: expected 3x" + std::to_string(config_.input_size_px) + "x" +
                              std::to_string(config_.input_size_px) + " input, got " +
                              std::to_string(input.c) + "x" + std::to_string(input.h) + "x" +
                              std::to_string(input.w));
    acts_[0] = input;
    for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i]->forward(acts_[i], acts_[i + 1]);
    grade_head_->forward(acts_.back(), grade_out_);
    agree_head_->forward(acts_.back(), agree_out_);

    DualHeadOutputs out;
    for (int i = 0; i < 3; ++i) {
        out.grade_logits[i] = grade_out_.v[i];
        out.agreement_logits[i] = agree_out_.v[i];
    }
    return out;
}

void DualHeadNet::backward(const std::array<double, 3>& dgrade, const std::array<double, 3>& dagree,
                           bool skip_agreement_head) {
    dgrade_t_.resize(3, 1, 1);
    for (int i = 0; i < 3; ++i) dgrade_t_.v[i] = static_cast<float>(dgrade[i]);
    grade_head_->backward(acts_.back(), grade_out_, dgrade_t_, dtrunk_);

    if (!skip_agreement_head) {
        dagree_t_.resize(3, 1, 1);
        for (int i = 0; i < 3; ++i) dagree_t_.v[i] = static_cast<float>(dagree[i]);
        agree_head_->backward(acts_.back(), agree_out_, dagree_t_, scratch_a_);
        for (std::size_t i = 0; i < dtrunk_.count(); ++i) dtrunk_.v[i] += scratch_a_.v[i];
    }

    nn::Tensor* dy = &dtrunk_;
    nn::Tensor* dx = &scratch_b_;
    for (std::size_t i = trunk_.size(); i-- > 0;) {
        trunk_[i]->backward(acts_[i], acts_[i + 1], *dy, *dx);
        std::swap(dy, dx);
    }
}

void DualHeadNet::sgd_step(double lr, double momentum, double grad_scale) {
    const float lr_eff = static_cast<float>(lr * grad_scale);
    for (nn::ParamTensor* p : params())
        kernels::sgd_momentum_f32(p->value.data(), p->momentum.data(), p->grad.data(), p->count(),
                                  lr_eff, static_cast<float>(momentum));
}

void DualHeadNet::zero_grads() {
    for (nn::ParamTensor* p : params()) p->zero_grad();
}

BalancedBatchStream::BalancedBatchStream(std::vector<const LesionRecord*> train_lesions,
                                         int per_grade, Rng rng)
    : per_grade_(per_grade), rng_(rng) {
    if (per_grade <= 0) throw ValidationError("per_grade must be positive");
    for (const LesionRecord* l : train_lesions)
        classes_[l->label.consensus.index()].items.push_back(l);
    for (int g = 0; g < 3; ++g) {
        if (classes_[g].items.empty())
            throw ValidationError("balanced batching needs at least one lesion of grade " +
                                  std::to_string(g + 1));
        rng_.shuffle(classes_[g].items);
    }
}

std::vector<const LesionRecord*> BalancedBatchStream::next_batch() {
    std::vector<const LesionRecord*> batch;
    batch.reserve(static_cast<std::size_t>(per_grade_) * 3);
    for (int g = 0; g < 3; ++g) {
        auto& cls = classes_[g];
        for (int i = 0; i < per_grade_; ++i) {
            if (cls.pos == cls.items.size()) {
                rng_.shuffle(cls.items);
                cls.pos = 0;
            }
            batch.push_back(cls.items[cls.pos++]);
        }
    }
    rng_.shuffle(batch);
    return batch;
}

// ---- checkpoint serialization ----

namespace {

constexpr char kMagic[8] = {'D', 'C', 'I', 'S', 'C', 'K', 'P', '\0'};

json backbone_to_json(const BackboneConfig& b) {
    return json{{"architecture", arch_name(b.architecture)},
                {"input_size_px", b.input_size_px},
                {"block_widths", b.block_widths},
                {"trunk_units", b.trunk_units},
                {"pretrained_weights", b.pretrained_weights}};
}

BackboneConfig backbone_from_json(const json& j) {
    BackboneConfig b;
    b.architecture = arch_from_name(j.at("architecture").get<std::string>());
    b.input_size_px = j.at("input_size_px").get<int>();
    b.block_widths = j.at("block_widths").get<std::vector<int>>();
    b.trunk_units = j.at("trunk_units").get<int>();
    if (j.contains("pretrained_weights")) b.pretrained_weights = j.at("pretrained_weights");
    return b;
}

}  // namespace

Checkpoint snapshot_net(DualHeadNet& net) {
    Checkpoint ckpt;
    ckpt.backbone = net.config();
    for (nn::ParamTensor* p : net.params())
        ckpt.tensors.push_back(TensorBlob{p->name, p->shape, p->value});
    return ckpt;
}

void load_into_net(const Checkpoint& checkpoint, DualHeadNet& net) {
    auto params = net.params();
    if (params.size() != checkpoint.tensors.size())
        throw ValidationError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                              " tensors but the network has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const TensorBlob& blob = checkpoint.tensors[i];
        if (params[i]->name != blob.name || params[i]->count() != blob.data.size())
            throw ValidationError("checkpoint tensor " + blob.name +
                                  " does not match network tensor " + params[i]->name);
        params[i]->value = blob.data;
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    json header;
    header["version"] = checkpoint.version;
    header["backbone"] = backbone_to_json(checkpoint.backbone);
    header["config"] = checkpoint.config_json;
    header["epoch"] = checkpoint.epoch;
    header["best_val_kappa"] = checkpoint.best_val_kappa;
    header["norm"] = {{"mean", checkpoint.norm.mean}, {"stdev", checkpoint.norm.stdev}};
    header["rng_state"] = checkpoint.rng_state;
    header["tensors"] = json::array();
    std::uint64_t offset = 0;
    for (const TensorBlob& t : checkpoint.tensors) {
        header["tensors"].push_back(
            {{"name", t.name}, {"shape", t.shape}, {"count", t.data.size()}, {"offset", offset}});
        offset += t.data.size() * sizeof(float);
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = static_cast<std::uint32_t>(checkpoint.version);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const TensorBlob& t : checkpoint.tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!out) throw PipelineError("failed while writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open checkpoint: " + path.string());

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("not a checkpoint file: " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1)
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ValidationError("truncated checkpoint header: " + path.string());

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw ValidationError("corrupt checkpoint header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.version = static_cast<int>(version);
    ckpt.backbone = backbone_from_json(header.at("backbone"));
    ckpt.config_json = header.value("config", std::string{});
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.best_val_kappa = header.at("best_val_kappa").get<double>();
    ckpt.norm.mean = header.at("norm").at("mean").get<std::array<double, 3>>();
    ckpt.norm.stdev = header.at("norm").at("stdev").get<std::array<double, 3>>();
    ckpt.rng_state = header.value("rng_state", std::string{});

    for (const auto& jt : header.at("tensors")) {
        TensorBlob blob;
        blob.name = jt.at("name").get<std::string>();
        blob.shape = jt.at("shape").get<std::vector<int>>();
        blob.data.resize(jt.at("count").get<std::size_t>());
        in.read(reinterpret_cast<char*>(blob.data.data()),
                static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
        if (!in) throw ValidationError("truncated checkpoint data: " + path.string());
        ckpt.tensors.push_back(std::move(blob));
    }
    return ckpt;
}

}  // namespace dcis
