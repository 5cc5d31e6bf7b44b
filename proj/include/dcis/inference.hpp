#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcis/datamodel.hpp"
#include "dcis/model.hpp"
#include "dcis/patchkit.hpp"

namespace dcis {

struct InferenceConfig {
    int n_patches = 10;        // random patches per lesion, median of the argmax grades
    double percentile_P = 80.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Median of discrete grades; an even count with a half-integer median rounds
// toward the higher grade.
Grade median_grade(std::span<const Grade> grades);

// Nearest-rank percentile: sorted ascending, element at rank ceil(P/100 * n)
// (rank 1 when P = 0). P = 100 is exactly the observers' max rule.
Grade patient_grade_percentile(std::span<const Grade> lesion_grades, double percentile);

// Median over n_patches randomly located patches, no augmentation. The patch
// RNG stream is derived from (config.seed, lesion id), so per-lesion results
// do not depend on evaluation order.
Grade predict_lesion(DualHeadNet& net, const NormStats& norm, const RegionImage& region,
                     const LesionRecord& lesion, const PatchSpec& patch_spec,
                     const InferenceConfig& config);

struct LesionPrediction {
    std::string lesion_id;
    std::string patient_id;
    Grade predicted;
};

std::vector<LesionPrediction> predict_lesions(DualHeadNet& net, const NormStats& norm,
                                              const DatasetManifest& manifest, Subset subset,
                                              const PatchSpec& patch_spec,
                                              const InferenceConfig& config, ImageCache& cache);

struct SweepResult {
    double best_P = 0.0;
    std::vector<std::pair<double, double>> kappa_by_P;  // (P, patient-level QWK)
};

// Patient-level QWK of the percentile-aggregated model grades against the
// consensus patient grades (max rule), for every P in the grid. Ties break
// toward the largest P.
SweepResult sweep_percentile(const DatasetManifest& manifest,
                             std::span<const LesionPrediction> predictions,
                             std::span<const double> grid);

// Percentile-aggregated model grade per patient for the subset covered by the
// predictions. Patients appear in manifest order.
std::vector<std::pair<std::string, Grade>> patient_grades_from_predictions(
    const DatasetManifest& manifest, std::span<const LesionPrediction> predictions,
    double percentile);

}  // namespace dcis
