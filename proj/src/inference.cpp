#include "dcis/inference.hpp"

#include <algorithm>
#include <cmath>

#include "dcis/agreement.hpp"

namespace dcis {

void InferenceConfig::validate() const {
    if (n_patches < 1) throw ValidationError("n_patches must be >= 1");
    if (percentile_P < 0.0 || percentile_P > 100.0)
        throw ValidationError("percentile must lie in [0, 100]");
}

Grade median_grade(std::span<const Grade> grades) {
    if (grades.empty()) throw ValidationError("median of an empty grade list");
    std::vector<Grade> sorted(grades.begin(), grades.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    const Grade lo = sorted[n / 2 - 1];
    const Grade hi = sorted[n / 2];
    // half-integer medians round toward the higher grade
    return hi > lo ? hi : lo;
}

Grade patient_grade_percentile(std::span<const Grade> lesion_grades, double percentile) {
    if (lesion_grades.empty())
        throw ValidationError("patient grade requested for a patient with no lesions");
    if (percentile < 0.0 || percentile > 100.0)
        throw ValidationError("percentile must lie in [0, 100]");
    std::vector<Grade> sorted(lesion_grades.begin(), lesion_grades.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<long>(sorted.size());
    long rank = static_cast<long>(std::ceil(percentile * static_cast<double>(n) / 100.0));
    rank = std::clamp(rank, 1L, n);
    return sorted[static_cast<std::size_t>(rank - 1)];
}

Grade predict_lesion(DualHeadNet& net, const NormStats& norm, const RegionImage& region,
                     const LesionRecord& lesion, const PatchSpec& patch_spec,
                     const InferenceConfig& config) {
    config.validate();
    const LesionBox box =
        fit_lesion_box(lesion.polygon, lesion.mpp, patch_spec, lesion.lesion_id,
                       std::array<long, 2>{region.image.width, region.image.height});
    Rng rng = Rng(config.seed).child("lesion").child(lesion.lesion_id);
    std::vector<Grade> patch_grades;
    patch_grades.reserve(config.n_patches);
    for (int i = 0; i < config.n_patches; ++i) {
        const Patch patch = extract_patch(region, box, patch_spec, rng, lesion.lesion_id);
        const nn::Tensor input = patch_to_tensor(patch.pixels, norm);
        const DualHeadOutputs out = net.forward(input);
        patch_grades.push_back(predicted_grade(out.grade_logits));
    }
    return median_grade(patch_grades);
}

std::vector<LesionPrediction> predict_lesions(DualHeadNet& net, const NormStats& norm,
                                              const DatasetManifest& manifest, Subset subset,
                                              const PatchSpec& patch_spec,
                                              const InferenceConfig& config, ImageCache& cache) {
    std::vector<LesionPrediction> out;
    for (const LesionRecord* lesion : manifest.subset_lesions(subset)) {
        const RegionImage& region = cache.get(manifest, *lesion);
        out.push_back(LesionPrediction{
            lesion->lesion_id, lesion->patient_id,
            predict_lesion(net, norm, region, *lesion, patch_spec, config)});
    }
    return out;
}

std::vector<std::pair<std::string, Grade>> patient_grades_from_predictions(
    const DatasetManifest& manifest, std::span<const LesionPrediction> predictions,
    double percentile) {
    std::map<std::string, std::vector<Grade>> by_patient;
    for (const auto& p : predictions) by_patient[p.patient_id].push_back(p.predicted);

    std::vector<std::pair<std::string, Grade>> out;
    for (const auto& patient : manifest.patients) {
        auto it = by_patient.find(patient.patient_id);
        if (it == by_patient.end()) continue;
        out.emplace_back(patient.patient_id, patient_grade_percentile(it->second, percentile));
    }
    return out;
}

SweepResult sweep_percentile(const DatasetManifest& manifest,
                             std::span<const LesionPrediction> predictions,
                             std::span<const double> grid) {
    if (grid.empty()) throw ValidationError("percentile sweep needs a non-empty grid");
    if (predictions.empty()) throw ValidationError("percentile sweep needs predictions");

    // consensus patient grades (max rule) for the patients covered by the predictions
    std::map<std::string, bool> covered;
    for (const auto& p : predictions) covered[p.patient_id] = true;
    std::vector<Grade> truth;
    std::vector<std::string> patient_order;
    for (const auto& patient : manifest.patients) {
        if (!covered.count(patient.patient_id)) continue;
        truth.push_back(manifest.patient_consensus_grade(patient));
        patient_order.push_back(patient.patient_id);
    }

    SweepResult result;
    double best_kappa = -2.0;
    for (double P : grid) {
        const auto model_grades = patient_grades_from_predictions(manifest, predictions, P);
        std::vector<Grade> model;
        model.reserve(model_grades.size());
        for (const auto& [pid, g] : model_grades) model.push_back(g);

        double kappa;
        try {
            kappa = qwk(confusion(model, truth));
        } catch (const ValidationError&) {
            kappa = 0.0;  // degenerate marginals on this grid point: treat as uninformative
        }
        result.kappa_by_P.emplace_back(P, kappa);
        if (kappa >= best_kappa) {  // >= so ties go to the largest P
            best_kappa = kappa;
            result.best_P = P;
        }
    }
    return result;
}

}  // namespace dcis
