#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dcis/datamodel.hpp"
#include "dcis/image.hpp"
#include "dcis/rng.hpp"

namespace dcis {

// Synthetic dataset parameters. The default grade mix is the test-set lesion
// mix (152/645/204 of 1001); the visual features scale with grade: nucleus
// size, nucleus size variability, and a central necrotic disk for grade 3.
struct SynthSpec {
    int n_patients = 109;
    std::pair<int, int> lesions_per_patient = {3, 6};
    std::array<double, 3> grade_mix = {152.0 / 1001.0, 645.0 / 1001.0, 204.0 / 1001.0};
    double observer_error_rate = 0.2;  // epsilon in [0, 0.5]
    double image_mpp = 0.88;
    std::pair<int, int> lesion_size_px = {256, 1024};
    std::uint64_t seed = 0;

    void validate() const;
};

struct GeneratedLesion {
    RegionImage region;
    std::vector<std::array<double, 2>> polygon;
};

// Renders an eosin-pink background with hematoxylin-dark elliptical nuclei.
// Mean nucleus radius and radius spread grow with grade; grade 3 adds a
// necrotic centre free of nuclei. Deterministic given the RNG.
GeneratedLesion generate_lesion_image(Grade true_grade, int size_px, double mpp, Rng& rng);

// Each observer reports the true grade with probability 1 - epsilon, otherwise
// a uniformly chosen adjacent grade (never two steps away).
ObserverGrades simulate_observers(Grade true_grade, double epsilon, Rng& rng);

struct SynthDataset {
    DatasetManifest manifest;
    std::vector<std::pair<std::string, Grade>> truth;  // lesion_id -> generating grade
};

// Writes region PNGs under out_dir/images plus manifest.json and truth.csv.
// The full dataset is a pure function of the spec.
SynthDataset generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

void write_truth_csv(const SynthDataset& dataset, const std::filesystem::path& path);
std::vector<std::pair<std::string, Grade>> load_truth_csv(const std::filesystem::path& path);

}  // namespace dcis
