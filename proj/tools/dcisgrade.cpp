// Command-line front end: synthesize data, split, extract patches, train,
// evaluate, and aggregate multi-run reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcis/agreement.hpp"
#include "dcis/datamodel.hpp"
#include "dcis/inference.hpp"
#include "dcis/kernels.hpp"
#include "dcis/synthgen.hpp"
#include "dcis/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// exit code 1: bad flag values that CLI11 itself cannot catch
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out;
    bool quiet = false;
};

void say(const GlobalOpts& g, const std::string& line) {
    if (!g.quiet) std::cout << line << '\n';
}

std::vector<double> parse_doubles(const std::string& text, std::size_t expected,
                                  const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(flag + ": cannot parse '" + item + "' as a number");
        }
    }
    if (out.size() != expected)
        throw UsageError(flag + ": expected " + std::to_string(expected) + " comma-separated values, got " +
                         std::to_string(out.size()));
    return out;
}

std::pair<int, int> parse_int_range(const std::string& text, const std::string& flag) {
    const auto v = parse_doubles(text, 2, flag);
    const auto lo = static_cast<int>(v[0]), hi = static_cast<int>(v[1]);
    if (lo != v[0] || hi != v[1]) throw UsageError(flag + ": values must be integers");
    return {lo, hi};
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw dcis::PipelineError("cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------- synth ----

struct SynthOpts {
    int patients = 109;
    std::string lesions = "3,6";
    std::string grade_mix;
    double eps = 0.2;
    double mpp = 0.88;
    std::string size = "256,1024";
};

int cmd_synth(const GlobalOpts& g, const SynthOpts& o) {
    if (g.out.empty()) throw UsageError("synth requires --out <dir>");
    dcis::SynthSpec spec;
    spec.n_patients = o.patients;
    spec.lesions_per_patient = parse_int_range(o.lesions, "--lesions");
    if (!o.grade_mix.empty()) {
        const auto mix = parse_doubles(o.grade_mix, 3, "--grade-mix");
        spec.grade_mix = {mix[0], mix[1], mix[2]};
    }
    spec.observer_error_rate = o.eps;
    spec.image_mpp = o.mpp;
    spec.lesion_size_px = parse_int_range(o.size, "--size");
    spec.seed = g.seed;

    const auto ds = dcis::generate_dataset(spec, g.out);

    long lesion_hist[3] = {0, 0, 0};
    for (const auto& l : ds.manifest.lesions) ++lesion_hist[l.label.consensus.index()];
    long patient_hist[3] = {0, 0, 0};
    double lesion_count_sum = 0;
    for (const auto& p : ds.manifest.patients) {
        ++patient_hist[ds.manifest.patient_consensus_grade(p).index()];
        lesion_count_sum += static_cast<double>(p.lesion_ids.size());
    }
    const auto n_les = static_cast<long>(ds.manifest.lesions.size());
    const auto n_pat = static_cast<long>(ds.manifest.patients.size());

    say(g, "dataset written to " + g.out);
    say(g, "patients: " + std::to_string(n_pat) +
               "  (lesions per patient, mean: " + fmt6(lesion_count_sum / n_pat) + ")");
    for (int i = 0; i < 3; ++i)
        say(g, "  consensus grade " + std::to_string(i + 1) + ": " + std::to_string(patient_hist[i]) +
                   " (" + fmt6(100.0 * patient_hist[i] / n_pat) + "%)");
    say(g, "lesions: " + std::to_string(n_les));
    for (int i = 0; i < 3; ++i)
        say(g, "  consensus grade " + std::to_string(i + 1) + ": " + std::to_string(lesion_hist[i]) +
                   " (" + fmt6(100.0 * lesion_hist[i] / n_les) + "%)");
    return 0;
}

// ---------------------------------------------------------------- split ----

struct SplitOpts {
    std::string manifest;
    std::string fractions = "";  // default: the 40/19/50-patient proportions
};

dcis::SplitFractions parse_fractions(const std::string& text) {
    if (text.empty()) return {40.0 / 109.0, 19.0 / 109.0, 50.0 / 109.0};
    const auto v = parse_doubles(text, 3, "--fractions");
    return {v[0], v[1], v[2]};
}

int cmd_split(const GlobalOpts& g, const SplitOpts& o) {
    auto manifest = dcis::load_manifest(o.manifest);
    const auto warnings = dcis::stratified_patient_split(manifest, parse_fractions(o.fractions), g.seed);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    fs::path out_dir = g.out.empty() ? fs::path(o.manifest).parent_path() : fs::path(g.out);
    fs::create_directories(out_dir);
    if (out_dir != manifest.base_dir) {
        // keep image references valid from the new location
        for (auto& l : manifest.lesions) {
            const fs::path resolved = fs::absolute(manifest.base_dir / l.image_ref);
            const fs::path rel = resolved.lexically_proximate(fs::absolute(out_dir));
            l.image_ref = rel.string();
        }
        manifest.base_dir = out_dir;
    }
    dcis::save_manifest(manifest, out_dir / "manifest_split.json");
    dcis::write_split_csv(manifest, out_dir / "split.csv");

    long counts[3] = {0, 0, 0};
    for (const auto& [pid, s] : manifest.split) ++counts[static_cast<int>(s)];
    say(g, "split written: train=" + std::to_string(counts[0]) +
               " validation=" + std::to_string(counts[1]) + " test=" + std::to_string(counts[2]) +
               " patients -> " + (out_dir / "split.csv").string());
    return 0;
}

// -------------------------------------------------------------- extract ----

struct ExtractOpts {
    std::string manifest;
    std::vector<std::string> lesions;  // empty = all
    int count = 1;
    int size = 512;
    double mpp = 0.88;
    double border = 90.0;
};

int cmd_extract(const GlobalOpts& g, const ExtractOpts& o) {
    if (g.out.empty()) throw UsageError("extract requires --out <dir>");
    const auto manifest = dcis::load_manifest(o.manifest);
    fs::create_directories(g.out);

    dcis::PatchSpec spec{o.size, o.mpp, o.border};
    dcis::ImageCache cache;
    std::ofstream index(fs::path(g.out) / "index.csv");
    index << "lesion_id,draw_index,offset_x,offset_y,seed\n";

    auto wanted = [&](const dcis::LesionRecord& l) {
        if (o.lesions.empty()) return true;
        for (const auto& id : o.lesions)
            if (id == l.lesion_id) return true;
        return false;
    };

    long written = 0;
    for (const auto& lesion : manifest.lesions) {
        if (!wanted(lesion)) continue;
        const dcis::RegionImage& region = cache.get(manifest, lesion);
        const auto box = dcis::fit_lesion_box(
            lesion.polygon, lesion.mpp, spec, lesion.lesion_id,
            std::array<long, 2>{region.image.width, region.image.height});
        dcis::Rng rng = dcis::Rng(g.seed).child("extract").child(lesion.lesion_id);
        const std::uint64_t stream_seed = rng.seed();
        for (int i = 0; i < o.count; ++i) {
            const auto patch = dcis::extract_patch(region, box, spec, rng, lesion.lesion_id);
            dcis::save_png(patch.pixels,
                           fs::path(g.out) / (lesion.lesion_id + "_" + std::to_string(i) + ".png"));
            index << lesion.lesion_id << ',' << i << ',' << patch.offset_x << ','
                  << patch.offset_y << ',' << stream_seed << '\n';
            ++written;
        }
    }
    say(g, std::to_string(written) + " patches written to " + g.out);
    return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainOpts {
    std::string manifest;
    std::string split_fractions;  // when set (or manifest lacks a split), split first
    int runs = 1;
    bool baseline = false;
    // optional overrides; negative/empty = keep config value
    int epochs = -1;
    int batch = -1;
    int per_grade = -1;
    double lr = -1.0;
    double momentum = -1.0;
    int patience = -1;
    double lambda = -1.0;
    int input_size = -1;
    int steps = -1;
    bool no_augment = false;
};

void write_metadata(const fs::path& run_dir, const dcis::RunConfig& config, bool baseline,
                    const dcis::TrainResult& result, double seconds) {
    json meta;
    meta["tool_version"] = kToolVersion;
    meta["created_utc"] = utc_timestamp();
    meta["seed"] = config.train.seed;
    meta["eval_seed"] = config.infer.seed;
    meta["baseline"] = baseline;
    meta["kernel_backend"] = dcis::kernels::backend_name(dcis::kernels::active());
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_kappa"] = result.best.best_val_kappa;
    meta["train_seconds"] = seconds;
    write_text(run_dir / "metadata.json", meta.dump(2) + "\n");
}

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
    if (g.out.empty()) throw UsageError("train requires --out <run dir>");

    dcis::RunConfig config;
    if (!g.config_path.empty()) config = dcis::load_run_config(g.config_path);
    if (o.epochs >= 0) config.train.max_epochs = o.epochs;
    if (o.batch > 0) config.train.batch_size = o.batch;
    if (o.per_grade > 0) config.train.per_grade_per_batch = o.per_grade;
    if (o.lr > 0) config.train.learning_rate = o.lr;
    if (o.momentum >= 0) config.train.momentum = o.momentum;
    if (o.patience > 0) config.train.early_stop_patience = o.patience;
    if (o.lambda >= 0) config.train.agreement_loss_weight = o.lambda;
    if (o.steps >= 0) config.train.steps_per_epoch = o.steps;
    if (o.baseline) config.train.dual_target = false;
    if (o.input_size > 0) {
        config.backbone.input_size_px = o.input_size;
        config.patch.size_px = o.input_size;
    }
    if (o.no_augment) config.augment.enabled = false;
    config.train.seed = g.seed;
    config.infer.seed = g.seed;  // dedicated evaluation stream, recorded in metadata

    auto manifest = dcis::load_manifest(o.manifest);
    if (manifest.split.empty() || !o.split_fractions.empty()) {
        const auto warnings = dcis::stratified_patient_split(
            manifest, parse_fractions(o.split_fractions), g.seed);
        for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    }

    for (int run = 0; run < o.runs; ++run) {
        const fs::path run_dir =
            o.runs == 1 ? fs::path(g.out) : fs::path(g.out) / ("run-" + std::to_string(run + 1));
        fs::create_directories(run_dir);

        dcis::RunConfig rc = config;
        rc.train.seed = g.seed + static_cast<std::uint64_t>(run);
        rc.infer.seed = rc.train.seed;
        rc.validate();

        write_text(run_dir / "config.json", dcis::run_config_to_json(rc) + "\n");
        dcis::write_split_csv(manifest, run_dir / "split.csv");

        say(g, "training run " + std::to_string(run + 1) + "/" + std::to_string(o.runs) +
                   " (seed " + std::to_string(rc.train.seed) + ")");
        dcis::ImageCache cache;
        const auto t0 = std::chrono::steady_clock::now();
        const auto result =
            dcis::train(manifest, rc, cache, [&](const dcis::EpochLog& e) {
                say(g, "  epoch " + std::to_string(e.epoch) + ": loss " + fmt6(e.train_loss_mean) +
                           ", val kappa " + fmt6(e.val_kappa) + " (" + fmt6(e.seconds) + "s)");
            });
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        dcis::save_checkpoint(result.best, run_dir / "checkpoint.bin");
        dcis::write_train_log_csv(result.log, run_dir / "train_log.csv");
        write_metadata(run_dir, rc, o.baseline, result, seconds);
        say(g, "  best epoch " + std::to_string(result.best_epoch) + ", val kappa " +
                   fmt6(result.best.best_val_kappa) + " -> " + run_dir.string());
    }
    return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalOpts {
    std::string run_dir;
    std::string manifest;
    std::string level = "both";
    std::string subset = "test";
    std::string truth;
    std::string grid;
};

// One pairwise row; kappa is absent when the marginals are degenerate (the
// row is still written, flagged as nan, and warned about on stderr).
struct PairRow {
    std::string rater_a, rater_b;
    dcis::ConfusionMatrix matrix;
    std::optional<dcis::KappaResult> kappa;
};

std::vector<PairRow> pairwise_rows(const std::vector<dcis::RaterColumn>& raters) {
    std::vector<PairRow> out;
    for (std::size_t i = 0; i < raters.size(); ++i)
        for (std::size_t j = i + 1; j < raters.size(); ++j) {
            PairRow row;
            row.rater_a = raters[i].name;
            row.rater_b = raters[j].name;
            row.matrix = dcis::confusion(raters[i].grades, raters[j].grades);
            try {
                row.kappa = dcis::qwk_ci(row.matrix);
            } catch (const dcis::ValidationError& e) {
                std::cerr << "warning: " << row.rater_a << " vs " << row.rater_b << ": " << e.what()
                          << '\n';
            }
            out.push_back(std::move(row));
        }
    return out;
}

void write_kappa_csv(const std::vector<PairRow>& pairs, const fs::path& path) {
    std::ofstream out(path);
    out << "rater_a,rater_b,kappa,ci_low,ci_high,n\n";
    for (const auto& p : pairs) {
        out << p.rater_a << ',' << p.rater_b << ',';
        if (p.kappa)
            out << fmt6(p.kappa->kappa) << ',' << fmt6(p.kappa->ci_low) << ','
                << fmt6(p.kappa->ci_high);
        else
            out << "nan,nan,nan";
        out << ',' << p.matrix.n() << '\n';
    }
}

void write_confusion_csv(const std::vector<PairRow>& pairs, const fs::path& path) {
    std::ofstream out(path);
    out << "rater_a,rater_b,row,c1,c2,c3\n";
    for (const auto& p : pairs)
        for (int i = 0; i < 3; ++i)
            out << p.rater_a << ',' << p.rater_b << ',' << (i + 1) << ',' << p.matrix.counts[i][0]
                << ',' << p.matrix.counts[i][1] << ',' << p.matrix.counts[i][2] << '\n';
}

int cmd_eval(const GlobalOpts& g, const EvalOpts& o) {
    const fs::path run_dir(o.run_dir);
    const fs::path ckpt_path = run_dir / "checkpoint.bin";
    if (!fs::exists(ckpt_path))
        throw dcis::ValidationError("no checkpoint at " + ckpt_path.string() +
                                    " (is this a completed run directory?)");
    if (o.level != "lesion" && o.level != "patient" && o.level != "both")
        throw UsageError("--level must be lesion, patient or both");

    const auto checkpoint = dcis::load_checkpoint(ckpt_path);
    dcis::RunConfig config = dcis::run_config_from_json(checkpoint.config_json);
    dcis::DualHeadNet net(checkpoint.backbone);
    dcis::load_into_net(checkpoint, net);

    auto manifest = dcis::load_manifest(o.manifest);
    // the split recorded at train time wins; the run dir alone defines the run
    if (fs::exists(run_dir / "split.csv"))
        dcis::apply_split(manifest, dcis::load_split_csv(run_dir / "split.csv"));
    const dcis::Subset subset = dcis::subset_from_name(o.subset);
    if (manifest.subset_lesions(subset).empty())
        throw dcis::ValidationError("manifest has no '" + o.subset + "' split to evaluate");

    // fixed evaluation stream: the seed recorded at train time unless overridden
    dcis::InferenceConfig infer = config.infer;
    if (g.seed != 0) infer.seed = g.seed;

    const fs::path out_dir = g.out.empty() ? run_dir / "eval" : fs::path(g.out);
    fs::create_directories(out_dir);

    // truth, when available (synthetic datasets)
    std::map<std::string, dcis::Grade> truth;
    fs::path truth_path =
        o.truth.empty() ? fs::path(o.manifest).parent_path() / "truth.csv" : fs::path(o.truth);
    if (fs::exists(truth_path))
        for (const auto& [id, grade] : dcis::load_truth_csv(truth_path)) truth.emplace(id, grade);

    dcis::ImageCache cache;
    say(g, "predicting " + o.subset + " lesions...");
    const auto predictions =
        dcis::predict_lesions(net, checkpoint.norm, manifest, subset, config.patch, infer, cache);

    std::map<std::string, dcis::Grade> predicted;
    for (const auto& p : predictions) predicted.emplace(p.lesion_id, p.predicted);

    json meta;
    meta["eval_seed"] = infer.seed;
    meta["subset"] = o.subset;
    meta["created_utc"] = utc_timestamp();

    if (o.level == "lesion" || o.level == "both") {
        // predictions CSV, manifest order
        std::ofstream csv(out_dir / "lesion_predictions.csv");
        csv << "lesion_id,patient_id,predicted_grade,consensus_grade,obs1,obs2,obs3\n";
        std::vector<dcis::RaterColumn> cols(4 + (truth.empty() ? 0 : 1));
        cols[0].name = "observer1";
        cols[1].name = "observer2";
        cols[2].name = "observer3";
        cols[3].name = "model";
        if (!truth.empty()) cols[4].name = "truth";
        for (const auto* lesion : manifest.subset_lesions(subset)) {
            const dcis::Grade model_grade = predicted.at(lesion->lesion_id);
            csv << lesion->lesion_id << ',' << lesion->patient_id << ',' << model_grade.value()
                << ',' << lesion->label.consensus.value() << ','
                << lesion->observer_grades[0].value() << ',' << lesion->observer_grades[1].value()
                << ',' << lesion->observer_grades[2].value() << '\n';
            for (int i = 0; i < 3; ++i) cols[i].grades.push_back(lesion->observer_grades[i]);
            cols[3].grades.push_back(model_grade);
            if (!truth.empty()) cols[4].grades.push_back(truth.at(lesion->lesion_id));
        }
        const auto pairs = pairwise_rows(cols);
        write_kappa_csv(pairs, out_dir / "lesion_kappa.csv");
        write_confusion_csv(pairs, out_dir / "confusion_lesion.csv");
        for (const auto& p : pairs)
            if (p.kappa)
                say(g, "lesion kappa " + p.rater_a + " vs " + p.rater_b + ": " +
                           fmt6(p.kappa->kappa) + " (" + fmt6(p.kappa->ci_low) + " - " +
                           fmt6(p.kappa->ci_high) + ")");
    }

    if (o.level == "patient" || o.level == "both") {
        // choose P on the validation split, then aggregate the eval subset
        if (manifest.subset_lesions(dcis::Subset::validation).empty())
            throw dcis::ValidationError("patient-level evaluation needs a validation split to choose P");
        say(g, "sweeping percentile P on the validation split...");
        const auto val_preds = dcis::predict_lesions(net, checkpoint.norm, manifest,
                                                     dcis::Subset::validation, config.patch, infer,
                                                     cache);
        std::vector<double> grid;
        if (o.grid.empty())
            for (double p = 50.0; p <= 100.0; p += 5.0) grid.push_back(p);
        else {
            std::stringstream ss(o.grid);
            std::string item;
            while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
            if (grid.empty()) throw UsageError("--grid is empty");
        }
        const auto sweep = dcis::sweep_percentile(manifest, val_preds, grid);
        meta["chosen_P"] = sweep.best_P;
        {
            std::ofstream sweep_csv(out_dir / "percentile_sweep.csv");
            sweep_csv << "P,val_patient_kappa\n";
            for (const auto& [p, k] : sweep.kappa_by_P) sweep_csv << p << ',' << fmt6(k) << '\n';
        }
        say(g, "chosen P = " + std::to_string(sweep.best_P));

        const auto model_patient = dcis::patient_grades_from_predictions(manifest, predictions,
                                                                         sweep.best_P);
        std::map<std::string, dcis::Grade> model_patient_map(model_patient.begin(),
                                                             model_patient.end());

        std::ofstream csv(out_dir / "patient_predictions.csv");
        csv << "patient_id,predicted_grade,consensus_grade,obs1,obs2,obs3\n";
        std::vector<dcis::RaterColumn> cols(4 + (truth.empty() ? 0 : 1));
        cols[0].name = "observer1";
        cols[1].name = "observer2";
        cols[2].name = "observer3";
        cols[3].name = "model";
        if (!truth.empty()) cols[4].name = "truth";
        for (const auto* patient : manifest.subset_patients(subset)) {
            std::vector<dcis::Grade> obs[3], consensus_grades, truth_grades;
            for (const auto* lesion : manifest.lesions_of(*patient)) {
                for (int i = 0; i < 3; ++i) obs[i].push_back(lesion->observer_grades[i]);
                consensus_grades.push_back(lesion->label.consensus);
                if (!truth.empty()) truth_grades.push_back(truth.at(lesion->lesion_id));
            }
            const dcis::Grade model_grade = model_patient_map.at(patient->patient_id);
            const dcis::Grade consensus_patient = dcis::observer_patient_grade(consensus_grades);
            csv << patient->patient_id << ',' << model_grade.value() << ','
                << consensus_patient.value();
            for (int i = 0; i < 3; ++i) {
                const dcis::Grade og = dcis::observer_patient_grade(obs[i]);
                csv << ',' << og.value();
                cols[i].grades.push_back(og);
            }
            csv << '\n';
            cols[3].grades.push_back(model_grade);
            if (!truth.empty())
                cols[4].grades.push_back(dcis::observer_patient_grade(truth_grades));
        }
        const auto pairs = pairwise_rows(cols);
        write_kappa_csv(pairs, out_dir / "patient_kappa.csv");
        write_confusion_csv(pairs, out_dir / "confusion_patient.csv");
        for (const auto& p : pairs)
            if (p.kappa)
                say(g, "patient kappa " + p.rater_a + " vs " + p.rater_b + ": " +
                           fmt6(p.kappa->kappa) + " (" + fmt6(p.kappa->ci_low) + " - " +
                           fmt6(p.kappa->ci_high) + ")");
    }

    write_text(out_dir / "eval_meta.json", meta.dump(2) + "\n");
    say(g, "evaluation written to " + out_dir.string());
    return 0;
}

// --------------------------------------------------------------- report ----

struct ReportOpts {
    std::vector<std::string> run_dirs;
};

std::map<std::string, double> read_model_kappas(const fs::path& csv_path) {
    std::map<std::string, double> out;  // other rater -> kappa(model, other)
    std::ifstream in(csv_path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string a, b, kappa;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        std::getline(ss, kappa, ',');
        if (kappa == "nan") continue;
        if (a == "model")
            out[b] = std::stod(kappa);
        else if (b == "model")
            out[a] = std::stod(kappa);
    }
    return out;
}

int cmd_report(const GlobalOpts& g, const ReportOpts& o) {
    if (o.run_dirs.size() < 2)
        throw UsageError("report needs at least two run directories to aggregate");

    const char* observers[3] = {"observer1", "observer2", "observer3"};
    std::map<std::string, std::vector<double>> lesion_k, patient_k;
    for (const auto& dir : o.run_dirs) {
        const auto lesion = read_model_kappas(fs::path(dir) / "eval" / "lesion_kappa.csv");
        const auto patient = read_model_kappas(fs::path(dir) / "eval" / "patient_kappa.csv");
        if (lesion.empty())
            throw dcis::ValidationError("no lesion_kappa.csv under " + dir +
                                        "/eval; run `dcisgrade eval` on each run first");
        for (const auto* obs : observers) {
            if (lesion.count(obs)) lesion_k[obs].push_back(lesion.at(obs));
            if (patient.count(obs)) patient_k[obs].push_back(patient.at(obs));
        }
    }

    const fs::path out_path = g.out.empty() ? fs::path("report.csv") : fs::path(g.out) / "report.csv";
    if (!g.out.empty()) fs::create_directories(g.out);
    std::ofstream out(out_path);
    out << "rater,lesion_mean_kappa,lesion_sd_kappa,patient_mean_kappa,patient_sd_kappa,runs\n";
    say(g, "mean/SD of model-vs-observer kappa over " + std::to_string(o.run_dirs.size()) + " runs:");
    for (const auto* obs : observers) {
        std::string lesion_mean, lesion_sd, patient_mean, patient_sd;
        std::size_t runs = 0;
        if (lesion_k.count(obs)) {
            const auto stats = dcis::multi_run_stats(lesion_k.at(obs));
            lesion_mean = fmt6(stats.mean);
            lesion_sd = stats.sd ? fmt6(*stats.sd) : "";
            runs = lesion_k.at(obs).size();
        }
        if (patient_k.count(obs)) {
            const auto stats = dcis::multi_run_stats(patient_k.at(obs));
            patient_mean = fmt6(stats.mean);
            patient_sd = stats.sd ? fmt6(*stats.sd) : "";
        }
        out << obs << ',' << lesion_mean << ',' << lesion_sd << ',' << patient_mean << ','
            << patient_sd << ',' << runs << '\n';
        say(g, "  " + std::string(obs) + ": lesion " + lesion_mean + " (SD " + lesion_sd +
                   "), patient " + patient_mean + " (SD " + patient_sd + ")");
    }
    say(g, "report written to " + out_path.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DCIS grading pipeline: synthetic data, training, evaluation, agreement reports"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "RNG seed (all commands are reproducible given the seed)")
        ->capture_default_str();
    app.add_option("--config", g.config_path, "JSON run-configuration file (comments allowed)");
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    SynthOpts synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic lesion dataset");
    synth_cmd->add_option("--patients", synth.patients, "number of patients")->capture_default_str();
    synth_cmd->add_option("--lesions", synth.lesions, "lesions per patient, min,max")
        ->capture_default_str();
    synth_cmd->add_option("--grade-mix", synth.grade_mix,
                          "lesion grade proportions g1,g2,g3 (default: published test-set mix)");
    synth_cmd->add_option("--eps", synth.eps, "observer error rate in [0, 0.5]")
        ->capture_default_str();
    synth_cmd->add_option("--mpp", synth.mpp, "region image microns per pixel")
        ->capture_default_str();
    synth_cmd->add_option("--size", synth.size, "lesion image side in px, min,max")
        ->capture_default_str();

    SplitOpts split;
    auto* split_cmd = app.add_subcommand("split", "stratified patient-level train/validation/test split");
    split_cmd->add_option("--manifest", split.manifest, "dataset manifest JSON")->required();
    split_cmd->add_option("--fractions", split.fractions,
                          "train,validation,test fractions (default 40/109,19/109,50/109)");

    ExtractOpts extract;
    auto* extract_cmd = app.add_subcommand("extract", "export random lesion patches to a cache directory");
    extract_cmd->add_option("--manifest", extract.manifest, "dataset manifest JSON")->required();
    extract_cmd->add_option("--lesion", extract.lesions, "lesion id(s) to extract (default: all)");
    extract_cmd->add_option("--count", extract.count, "patches per lesion")->capture_default_str();
    extract_cmd->add_option("--patch-size", extract.size, "patch side in pixels")->capture_default_str();
    extract_cmd->add_option("--target-mpp", extract.mpp, "extraction frame microns per pixel")
        ->capture_default_str();
    extract_cmd->add_option("--border", extract.border, "box border in microns")->capture_default_str();

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train", "train the dual-head grading network");
    train_cmd->add_option("--manifest", train.manifest, "dataset manifest JSON")->required();
    train_cmd->add_option("--split", train.split_fractions,
                          "create a fresh split with these fractions before training "
                          "(also applied when the manifest has none)");
    train_cmd->add_option("--runs", train.runs, "number of seeded runs (seeds seed, seed+1, ...)")
        ->capture_default_str();
    train_cmd->add_flag("--baseline", train.baseline,
                        "train on the consensus grade only (disables the agreement head)");
    train_cmd->add_option("--epochs", train.epochs, "max training epochs");
    train_cmd->add_option("--batch", train.batch, "mini-batch size");
    train_cmd->add_option("--per-grade", train.per_grade, "lesions of each grade per batch");
    train_cmd->add_option("--lr", train.lr, "SGD learning rate");
    train_cmd->add_option("--momentum", train.momentum, "SGD momentum");
    train_cmd->add_option("--patience", train.patience, "early-stopping patience, epochs");
    train_cmd->add_option("--lambda", train.lambda, "agreement-head loss weight");
    train_cmd->add_option("--input-size", train.input_size,
                          "network input / patch size in px (multiple of 32)");
    train_cmd->add_option("--steps", train.steps,
                          "batches per epoch (0 = one cycle of the largest grade class)");
    train_cmd->add_flag("--no-augment", train.no_augment, "disable training-time augmentation");

    EvalOpts eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run and write agreement reports");
    eval_cmd->add_option("--run", eval.run_dir, "run directory from `train`")->required();
    eval_cmd->add_option("--manifest", eval.manifest, "dataset manifest JSON")->required();
    eval_cmd->add_option("--level", eval.level, "lesion, patient or both")->capture_default_str();
    eval_cmd->add_option("--subset", eval.subset, "subset to evaluate (train/validation/test)")
        ->capture_default_str();
    eval_cmd->add_option("--truth", eval.truth,
                         "truth csv (default: truth.csv next to the manifest, when present)");
    eval_cmd->add_option("--grid", eval.grid, "percentile sweep grid, comma separated (default 50..100 step 5)");

    ReportOpts report;
    auto* report_cmd = app.add_subcommand("report", "aggregate evaluated runs into a mean/SD kappa table");
    report_cmd->add_option("runs", report.run_dirs, "run directories (evaluated)")->required();

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) return cmd_synth(g, synth);
        if (split_cmd->parsed()) return cmd_split(g, split);
        if (extract_cmd->parsed()) return cmd_extract(g, extract);
        if (train_cmd->parsed()) return cmd_train(g, train);
        if (eval_cmd->parsed()) return cmd_eval(g, eval);
        if (report_cmd->parsed()) return cmd_report(g, report);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const dcis::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
