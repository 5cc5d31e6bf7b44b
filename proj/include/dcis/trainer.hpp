#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dcis/datamodel.hpp"
#include "dcis/inference.hpp"
#include "dcis/model.hpp"
#include "dcis/patchkit.hpp"

namespace dcis {

// Everything a training run needs, and exactly what gets snapshotted into the
// run directory. Defaults are the published protocol values.
struct RunConfig {
    BackboneConfig backbone;
    TrainConfig train;
    PatchSpec patch;
    AugmentationConfig augment;
    InferenceConfig infer;  // validation/test-time inference settings

    void validate() const;
};

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

// Merge settings from a JSON config file (comments allowed) over defaults.
RunConfig load_run_config(const std::filesystem::path& path);

// Per-channel mean/stdev over the training split, computed on one centred
// patch per lesion on the [0, 1] scale. Deterministic.
NormStats compute_norm_stats(const DatasetManifest& manifest, const PatchSpec& patch_spec,
                             ImageCache& cache);

struct EpochLog {
    int epoch = 0;             // 1-based
    double train_loss_mean = 0.0;
    double val_kappa = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    Checkpoint best;           // best-validation-kappa weights
    std::vector<EpochLog> log;
    int best_epoch = 0;        // 0 when training never ran an epoch
};

// SGD with momentum on the combined ordinal loss over balanced batches; after
// each epoch the lesion-level QWK of the model against consensus on the
// validation split decides early stopping (patience epochs without
// improvement) and which weights are kept.
TrainResult train(const DatasetManifest& manifest, const RunConfig& config, ImageCache& cache,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

void write_train_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace dcis
