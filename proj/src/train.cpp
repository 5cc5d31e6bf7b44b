#include "dcis/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "dcis/agreement.hpp"

namespace dcis {

using nlohmann::json;

void RunConfig::validate() const {
    backbone.validate();
    train.validate();
    augment.validate();
    infer.validate();
    if (patch.size_px != backbone.input_size_px)
        throw ValidationError("patch size (" + std::to_string(patch.size_px) +
                              ") must equal the backbone input size (" +
                              std::to_string(backbone.input_size_px) + ")");
    if (!(patch.target_mpp > 0.0) || patch.border_um < 0.0)
        throw ValidationError("patch spec has invalid mpp/border");
}

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["backbone"] = {{"architecture", arch_name(c.backbone.architecture)},
                     {"input_size_px", c.backbone.input_size_px},
                     {"block_widths", c.backbone.block_widths},
                     {"trunk_units", c.backbone.trunk_units},
                     {"pretrained_weights", c.backbone.pretrained_weights}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"per_grade_per_batch", c.train.per_grade_per_batch},
                  {"learning_rate", c.train.learning_rate},
                  {"momentum", c.train.momentum},
                  {"max_epochs", c.train.max_epochs},
                  {"early_stop_patience", c.train.early_stop_patience},
                  {"dual_target", c.train.dual_target},
                  {"agreement_loss_weight", c.train.agreement_loss_weight},
                  {"steps_per_epoch", c.train.steps_per_epoch},
                  {"seed", c.train.seed}};
    j["patch"] = {{"size_px", c.patch.size_px},
                  {"target_mpp", c.patch.target_mpp},
                  {"border_um", c.patch.border_um}};
    j["augment"] = {{"enabled", c.augment.enabled},
                    {"max_translate_frac", c.augment.max_translate_frac},
                    {"max_rotate_deg", c.augment.max_rotate_deg},
                    {"allow_flips", c.augment.allow_flips},
                    {"max_shear_frac", c.augment.max_shear_frac},
                    {"max_zoom_frac", c.augment.max_zoom_frac},
                    {"max_channel_shift_frac", c.augment.max_channel_shift_frac}};
    j["inference"] = {{"n_patches", c.infer.n_patches},
                      {"percentile_P", c.infer.percentile_P},
                      {"seed", c.infer.seed}};
    return j;
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void merge_from_json(RunConfig& c, const json& j) {
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        if (b.contains("architecture"))
            c.backbone.architecture = arch_from_name(b.at("architecture").get<std::string>());
        maybe(b, "input_size_px", c.backbone.input_size_px);
        maybe(b, "block_widths", c.backbone.block_widths);
        maybe(b, "trunk_units", c.backbone.trunk_units);
        maybe(b, "pretrained_weights", c.backbone.pretrained_weights);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "per_grade_per_batch", c.train.per_grade_per_batch);
        maybe(t, "learning_rate", c.train.learning_rate);
        maybe(t, "momentum", c.train.momentum);
        maybe(t, "max_epochs", c.train.max_epochs);
        maybe(t, "early_stop_patience", c.train.early_stop_patience);
        maybe(t, "dual_target", c.train.dual_target);
        maybe(t, "agreement_loss_weight", c.train.agreement_loss_weight);
        maybe(t, "steps_per_epoch", c.train.steps_per_epoch);
        maybe(t, "seed", c.train.seed);
    }
    if (j.contains("patch")) {
        const auto& p = j.at("patch");
        maybe(p, "size_px", c.patch.size_px);
        maybe(p, "target_mpp", c.patch.target_mpp);
        maybe(p, "border_um", c.patch.border_um);
    }
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        maybe(a, "enabled", c.augment.enabled);
        maybe(a, "max_translate_frac", c.augment.max_translate_frac);
        maybe(a, "max_rotate_deg", c.augment.max_rotate_deg);
        maybe(a, "allow_flips", c.augment.allow_flips);
        maybe(a, "max_shear_frac", c.augment.max_shear_frac);
        maybe(a, "max_zoom_frac", c.augment.max_zoom_frac);
        maybe(a, "max_channel_shift_frac", c.augment.max_channel_shift_frac);
    }
    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        maybe(i, "n_patches", c.infer.n_patches);
        maybe(i, "percentile_P", c.infer.percentile_P);
        maybe(i, "seed", c.infer.seed);
    }
}

}  // namespace

std::string run_config_to_json(const RunConfig& config) { return to_json(config).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
    RunConfig c;
    try {
        merge_from_json(c, json::parse(text, nullptr, true, true));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid run configuration: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return run_config_from_json(text);
}

NormStats compute_norm_stats(const DatasetManifest& manifest, const PatchSpec& patch_spec,
                             ImageCache& cache) {
    const auto train_lesions = manifest.subset_lesions(Subset::train);
    if (train_lesions.empty()) throw ValidationError("no training lesions for normalization");

    double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
    double count = 0.0;
    for (const LesionRecord* lesion : train_lesions) {
        const RegionImage& region = cache.get(manifest, *lesion);
        const LesionBox box =
            fit_lesion_box(lesion->polygon, lesion->mpp, patch_spec, lesion->lesion_id,
                           std::array<long, 2>{region.image.width, region.image.height});
        const Patch patch = extract_centered(region, box, patch_spec, lesion->lesion_id);
        for (std::size_t i = 0; i < patch.pixels.rgb.size(); i += 3)
            for (int c = 0; c < 3; ++c) {
                const double v = patch.pixels.rgb[i + c] / 255.0;
                sum[c] += v;
                sum_sq[c] += v * v;
            }
        count += static_cast<double>(patch.pixels.rgb.size() / 3);
    }

    NormStats norm;
    for (int c = 0; c < 3; ++c) {
        norm.mean[c] = sum[c] / count;
        const double var = std::max(0.0, sum_sq[c] / count - norm.mean[c] * norm.mean[c]);
        norm.stdev[c] = std::max(1e-3, std::sqrt(var));
    }
    return norm;
}

namespace {

double validation_kappa(DualHeadNet& net, const NormStats& norm, const DatasetManifest& manifest,
                        const RunConfig& config, ImageCache& cache) {
    InferenceConfig val_cfg = config.infer;
    val_cfg.seed = Rng(config.train.seed).child("validation").seed();
    const auto preds = predict_lesions(net, norm, manifest, Subset::validation, config.patch,
                                       val_cfg, cache);
    if (preds.empty()) throw ValidationError("validation split is empty");

    std::vector<Grade> model, consensus;
    model.reserve(preds.size());
    consensus.reserve(preds.size());
    for (const auto& p : preds) {
        model.push_back(p.predicted);
        consensus.push_back(manifest.lesion(p.lesion_id).label.consensus);
    }
    try {
        return qwk(confusion(model, consensus));
    } catch (const ValidationError&) {
        return 0.0;  // degenerate marginals early in training: treat as uninformative
    }
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const RunConfig& config, ImageCache& cache,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    const auto train_lesions = manifest.subset_lesions(Subset::train);
    if (train_lesions.empty()) throw ValidationError("manifest has no train split");
    if (manifest.subset_lesions(Subset::validation).empty())
        throw ValidationError("manifest has no validation split");

    Rng root(config.train.seed);
    DualHeadNet net(config.backbone);
    Rng init_rng = root.child("init");
    net.init_params(init_rng);
    if (!config.backbone.pretrained_weights.empty()) {
        const Checkpoint warm = load_checkpoint(config.backbone.pretrained_weights);
        load_into_net(warm, net);
    }

    const NormStats norm = compute_norm_stats(manifest, config.patch, cache);

    TrainResult result;
    auto make_checkpoint = [&](int epoch, double kappa, Rng& data_rng) {
        Checkpoint ckpt = snapshot_net(net);
        ckpt.config_json = run_config_to_json(config);
        ckpt.epoch = epoch;
        ckpt.best_val_kappa = kappa;
        ckpt.norm = norm;
        ckpt.rng_state = data_rng.save_state();
        return ckpt;
    };

    Rng batch_rng = root.child("batches");
    if (config.train.max_epochs == 0) {
        result.best = make_checkpoint(0, 0.0, batch_rng);
        return result;
    }

    BalancedBatchStream stream(train_lesions, config.train.per_grade_per_batch,
                               root.child("stream"));
    long steps_per_epoch = config.train.steps_per_epoch;
    if (steps_per_epoch == 0) {
        long largest_class = 0;
        long class_sizes[3] = {0, 0, 0};
        for (const LesionRecord* l : train_lesions) ++class_sizes[l->label.consensus.index()];
        for (long s : class_sizes) largest_class = std::max(largest_class, s);
        steps_per_epoch = (largest_class + config.train.per_grade_per_batch - 1) /
                          config.train.per_grade_per_batch;
    }

    // per-lesion boxes are geometry-only; compute them once
    std::unordered_map<std::string, LesionBox> boxes;

    double best_kappa = -2.0;
    int epochs_without_improvement = 0;
    long batch_index = 0;
    std::uint64_t patch_counter = 0;

    for (int epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;

        for (long step = 0; step < steps_per_epoch; ++step, ++batch_index) {
            const auto batch = stream.next_batch();
            net.zero_grads();
            double batch_loss = 0.0;

            for (const LesionRecord* lesion : batch) {
                const RegionImage& region = cache.get(manifest, *lesion);
                auto box_it = boxes.find(lesion->lesion_id);
                if (box_it == boxes.end()) {
                    box_it = boxes.emplace(lesion->lesion_id,
                                           fit_lesion_box(lesion->polygon, lesion->mpp,
                                                          config.patch, lesion->lesion_id,
                                                          std::array<long, 2>{region.image.width,
                                                                              region.image.height}))
                                 .first;
                }
                Rng patch_rng = root.child("patch", patch_counter++);
                Patch patch = extract_patch(region, box_it->second, config.patch, patch_rng,
                                            lesion->lesion_id);
                patch = augment(patch, config.augment, patch_rng);

                const nn::Tensor input = patch_to_tensor(patch.pixels, norm);
                const DualHeadOutputs outputs = net.forward(input);
                std::array<double, 3> dgrade{}, dagree{};
                batch_loss +=
                    combined_loss_grad(outputs, lesion->label, config.train, dgrade, dagree);
                net.backward(dgrade, dagree, /*skip_agreement_head=*/!config.train.dual_target);
            }

            batch_loss /= static_cast<double>(batch.size());
            if (!std::isfinite(batch_loss))
                throw DivergenceError("training diverged (non-finite loss) at batch " +
                                          std::to_string(batch_index),
                                      batch_index);
            loss_sum += batch_loss;
            net.sgd_step(config.train.learning_rate, config.train.momentum,
                         1.0 / static_cast<double>(batch.size()));
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss_mean = loss_sum / static_cast<double>(steps_per_epoch);
        entry.val_kappa = validation_kappa(net, norm, manifest, config, cache);
        entry.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);

        if (entry.val_kappa > best_kappa) {
            best_kappa = entry.val_kappa;
            result.best = make_checkpoint(epoch, best_kappa, batch_rng);
            result.best_epoch = epoch;
            epochs_without_improvement = 0;
        } else if (++epochs_without_improvement >= config.train.early_stop_patience) {
            break;
        }
    }

    if (result.best_epoch == 0) result.best = make_checkpoint(0, best_kappa, batch_rng);
    return result;
}

void write_train_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write " + path.string());
    out << "epoch,train_loss_mean,val_kappa,seconds\n";
    char line[128];
    for (const EpochLog& e : log) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss_mean,
                      e.val_kappa, e.seconds);
        out << line;
    }
}

}  // namespace dcis
