#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcis/errors.hpp"

namespace dcis {

// Holland classification level, 1..3. Construction validates the range.
class Grade {
public:
    explicit Grade(int value) : value_(value) {
        if (value < 1 || value > 3)
            throw ValidationError("grade must be 1, 2 or 3, got " + std::to_string(value));
    }

    int value() const { return value_; }
    // zero-based category index, for confusion matrices and logits
    int index() const { return value_ - 1; }

    auto operator<=>(const Grade&) const = default;

private:
    int value_;
};

// Exactly three expert observers; identity is positional and stable.
using ObserverGrades = std::array<Grade, 3>;

// The per-lesion training target: majority-vote grade plus how many observers
// agreed with it.
struct ConsensusLabel {
    Grade consensus;
    int agreement_count;  // 1..3; 1 only when all three observers disagree

    bool operator==(const ConsensusLabel&) const = default;
};

// Majority vote; an all-different triple resolves to grade 2.
ConsensusLabel consensus_of(const ObserverGrades& grades);

// Patient grade as the observers assign it: the highest lesion grade present.
Grade observer_patient_grade(std::span<const Grade> lesion_grades);

struct LesionRecord {
    std::string lesion_id;
    std::string patient_id;
    std::string image_ref;  // path, relative to the manifest directory
    std::vector<std::array<double, 2>> polygon;  // pixel vertices, >= 3, simple, positive area
    double mpp = 0.0;                            // microns/pixel of the region image
    ObserverGrades observer_grades;
    ConsensusLabel label;  // always equal to consensus_of(observer_grades)
};

struct PatientRecord {
    std::string patient_id;
    std::vector<std::string> lesion_ids;
};

enum class Subset { train, validation, test };

const char* subset_name(Subset s);
Subset subset_from_name(const std::string& name);

struct DatasetManifest {
    std::vector<LesionRecord> lesions;
    std::vector<PatientRecord> patients;
    std::map<std::string, Subset> split;   // patient_id -> subset; empty when unassigned
    std::filesystem::path base_dir;        // directory image_refs resolve against

    const LesionRecord& lesion(const std::string& lesion_id) const;
    std::vector<const LesionRecord*> lesions_of(const PatientRecord& patient) const;
    std::vector<const LesionRecord*> subset_lesions(Subset s) const;
    std::vector<const PatientRecord*> subset_patients(Subset s) const;

    // max of the consensus grades over the patient's lesions
    Grade patient_consensus_grade(const PatientRecord& patient) const;

    std::filesystem::path resolve_image(const LesionRecord& lesion) const;
};

// Load/save the manifest JSON (top-level keys: lesions, patients, split).
// Loading validates and derives each lesion's consensus label.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_images = true);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Fail-fast structural validation: unique ids, polygon geometry, grade ranges,
// patient/lesion cross references, split coverage, image presence.
void validate_manifest(const DatasetManifest& manifest, bool check_images);

struct SplitFractions {
    double train = 0.0;
    double validation = 0.0;
    double test = 0.0;
};

// Patient-level stratified split: patients are grouped by their consensus
// patient grade, shuffled per stratum with the seeded RNG, and allocated by
// largest-remainder rounding. Returns warnings for strata too small to reach
// every subset. Deterministic in (manifest, fractions, seed).
std::vector<std::string> stratified_patient_split(DatasetManifest& manifest,
                                                  const SplitFractions& fractions,
                                                  std::uint64_t seed);

// CSV with header patient_id,subset.
void write_split_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
std::map<std::string, Subset> load_split_csv(const std::filesystem::path& path);

// Install a split (e.g. recorded in a run directory) onto the manifest,
// validating that it covers every patient exactly once.
void apply_split(DatasetManifest& manifest, const std::map<std::string, Subset>& split);

}  // namespace dcis
