#include "dcis/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dcis {

void SynthSpec::validate() const {
    if (n_patients < 1) throw ValidationError("n_patients must be >= 1");
    if (lesions_per_patient.first < 1 || lesions_per_patient.first > lesions_per_patient.second)
        throw ValidationError("lesions_per_patient range is invalid");
    double sum = 0.0;
    for (double g : grade_mix) {
        if (g < 0.0) throw ValidationError("grade_mix entries must be non-negative");
        sum += g;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("grade_mix must sum to 1");
    if (observer_error_rate < 0.0 || observer_error_rate > 0.5)
        throw ValidationError("observer_error_rate must lie in [0, 0.5]");
    if (!(image_mpp > 0.0)) throw ValidationError("image_mpp must be positive");
    if (lesion_size_px.first < 64 || lesion_size_px.first > lesion_size_px.second)
        throw ValidationError("lesion_size_px range is invalid (min 64)");
}

namespace {

// Visual design constants. Grade signal lives in nucleus size, nucleus size
// spread, and the grade-3 necrotic centre; colors are grade-independent.
constexpr double kNucleusMeanRadius[3] = {4.0, 6.0, 9.0};   // px at 0.88 um/px
constexpr double kNucleusRadiusCV[3] = {0.10, 0.25, 0.45};
constexpr double kNucleusCoverage = 0.22;       // target fraction of duct area
constexpr double kNecrosisAreaFrac = 0.15;      // of lesion area, grade 3 only
constexpr double kLesionGradeFidelity = 0.8;    // P(lesion grade == patient grade)

constexpr int kBackground[3] = {236, 205, 218};  // eosin-stained stroma
constexpr int kDuct[3] = {225, 196, 211};        // epithelial mass
constexpr int kNecrosis[3] = {241, 224, 229};    // pale, nucleus-free
constexpr int kNucleus[3] = {76, 52, 118};       // hematoxylin-dark

struct Ellipse {
    double cx, cy, a, b;  // semi-axes along x and y before rotation
    double rot;

    // local duct radius at polar angle theta (rot == 0 case used for the duct)
    double radius_at(double theta) const {
        const double c = std::cos(theta), s = std::sin(theta);
        return a * b / std::sqrt(b * b * c * c + a * a * s * s);
    }
};

inline std::uint8_t clamp_u8(int v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

void draw_ellipse(Image& img, const Ellipse& e, const int color[3], int jitter, Rng& rng) {
    const int cr = clamp_u8(color[0] + static_cast<int>(rng.uniform_int(-jitter, jitter)));
    const int cg = clamp_u8(color[1] + static_cast<int>(rng.uniform_int(-jitter, jitter)));
    const int cb = clamp_u8(color[2] + static_cast<int>(rng.uniform_int(-jitter, jitter)));
    const double reach = std::max(e.a, e.b);
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - reach)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(e.cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - reach)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(e.cy + reach)));
    const double cs = std::cos(e.rot), sn = std::sin(e.rot);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - e.cx, dy = y - e.cy;
            const double u = (dx * cs + dy * sn) / e.a;
            const double v = (-dx * sn + dy * cs) / e.b;
            if (u * u + v * v <= 1.0) {
                img.at(x, y, 0) = static_cast<std::uint8_t>(cr);
                img.at(x, y, 1) = static_cast<std::uint8_t>(cg);
                img.at(x, y, 2) = static_cast<std::uint8_t>(cb);
            }
        }
    }
}

// Uniform grid over nucleus centres for the minimum-separation check.
class SeparationGrid {
public:
    SeparationGrid(int size, double cell) : cell_(cell), cols_(static_cast<int>(size / cell) + 1) {
        cells_.resize(static_cast<std::size_t>(cols_) * cols_);
    }

    bool can_place(double x, double y, double r) const {
        const int cx = static_cast<int>(x / cell_), cy = static_cast<int>(y / cell_);
        for (int gy = std::max(0, cy - 2); gy <= std::min(cols_ - 1, cy + 2); ++gy)
            for (int gx = std::max(0, cx - 2); gx <= std::min(cols_ - 1, cx + 2); ++gx)
                for (const auto& n : cells_[static_cast<std::size_t>(gy) * cols_ + gx]) {
                    const double min_d = 0.9 * (r + n[2]) + 1.0;
                    const double dx = x - n[0], dy = y - n[1];
                    if (dx * dx + dy * dy < min_d * min_d) return false;
                }
        return true;
    }

    void add(double x, double y, double r) {
        const int cx = static_cast<int>(x / cell_), cy = static_cast<int>(y / cell_);
        cells_[static_cast<std::size_t>(cy) * cols_ + cx].push_back({x, y, r});
    }

private:
    double cell_;
    int cols_;
    std::vector<std::vector<std::array<double, 3>>> cells_;
};

}  // namespace

GeneratedLesion generate_lesion_image(Grade true_grade, int size_px, double mpp, Rng& rng) {
    if (size_px < 64) throw ValidationError("lesion image size must be >= 64 px");
    const int gi = true_grade.index();

    // duct geometry
    Ellipse duct;
    duct.cx = size_px / 2.0 + rng.uniform(-0.02, 0.02) * size_px;
    duct.cy = size_px / 2.0 + rng.uniform(-0.02, 0.02) * size_px;
    duct.a = rng.uniform(0.40, 0.47) * size_px;
    duct.b = rng.uniform(0.40, 0.47) * size_px;
    duct.rot = 0.0;

    // outline: convex-ish star polygon slightly outside the duct
    std::vector<std::array<double, 2>> polygon;
    const int n_verts = 14;
    for (int k = 0; k < n_verts; ++k) {
        const double step = 2.0 * std::numbers::pi / n_verts;
        const double theta = k * step + rng.uniform(-0.18, 0.18) * step;
        const double r = duct.radius_at(theta) * rng.uniform(1.05, 1.18);
        const double x = std::clamp(duct.cx + r * std::cos(theta), 2.0, size_px - 3.0);
        const double y = std::clamp(duct.cy + r * std::sin(theta), 2.0, size_px - 3.0);
        polygon.push_back({x, y});
    }

    // background + duct tint with per-pixel noise
    Image img(size_px, size_px);
    for (int y = 0; y < size_px; ++y) {
        for (int x = 0; x < size_px; ++x) {
            const double dx = (x - duct.cx) / duct.a, dy = (y - duct.cy) / duct.b;
            const bool inside = dx * dx + dy * dy <= 1.0;
            const int* base = inside ? kDuct : kBackground;
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = clamp_u8(base[c] + static_cast<int>(rng.uniform_int(-6, 6)));
        }
    }

    // grade 3: pale necrotic centre, kept free of nuclei
    double necrosis_r = 0.0;
    if (true_grade.value() == 3) {
        const double duct_area = std::numbers::pi * duct.a * duct.b;
        necrosis_r = std::sqrt(kNecrosisAreaFrac * duct_area / std::numbers::pi);
        for (int y = 0; y < size_px; ++y) {
            for (int x = 0; x < size_px; ++x) {
                const double dx = x - duct.cx, dy = y - duct.cy;
                if (dx * dx + dy * dy <= necrosis_r * necrosis_r)
                    for (int c = 0; c < 3; ++c)
                        img.at(x, y, c) =
                            clamp_u8(kNecrosis[c] + static_cast<int>(rng.uniform_int(-4, 4)));
            }
        }
    }

    // nuclei: dart-thrown ellipses, radius spread grows with grade
    const double mean_r = kNucleusMeanRadius[gi];
    const double cv = kNucleusRadiusCV[gi];
    const double duct_area = std::numbers::pi * duct.a * duct.b;
    const double usable_area = duct_area * (true_grade.value() == 3 ? 1.0 - kNecrosisAreaFrac : 1.0);
    const int target = std::max(6, static_cast<int>(
                                       kNucleusCoverage * usable_area /
                                       (std::numbers::pi * mean_r * mean_r)));

    SeparationGrid grid(size_px, std::max(8.0, 2.5 * mean_r));
    int placed = 0;
    long attempts = 0;
    const long max_attempts = 40L * target;
    while (placed < target && attempts < max_attempts) {
        ++attempts;
        const double r = mean_r * std::clamp(1.0 + cv * rng.normal(), 0.35, 2.2);
        const double px = rng.uniform(duct.cx - duct.a, duct.cx + duct.a);
        const double py = rng.uniform(duct.cy - duct.b, duct.cy + duct.b);
        const double nx = (px - duct.cx) / duct.a, ny = (py - duct.cy) / duct.b;
        const double margin = (r + 2.0) / std::min(duct.a, duct.b);
        if (nx * nx + ny * ny > (1.0 - margin) * (1.0 - margin)) continue;
        if (necrosis_r > 0.0) {
            const double dx = px - duct.cx, dy = py - duct.cy;
            const double keep_out = necrosis_r + r + 2.0;
            if (dx * dx + dy * dy < keep_out * keep_out) continue;
        }
        if (!grid.can_place(px, py, r)) continue;
        grid.add(px, py, r);

        Ellipse nucleus;
        nucleus.cx = px;
        nucleus.cy = py;
        const double ecc = rng.uniform(0.75, 1.0);
        nucleus.a = r / std::sqrt(ecc);
        nucleus.b = r * std::sqrt(ecc);
        nucleus.rot = rng.uniform(0.0, std::numbers::pi);
        draw_ellipse(img, nucleus, kNucleus, 14, rng);
        ++placed;
    }

    GeneratedLesion out;
    out.region = RegionImage{std::move(img), mpp};
    out.polygon = std::move(polygon);
    return out;
}

ObserverGrades simulate_observers(Grade true_grade, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 0.5)
        throw ValidationError("observer error rate must lie in [0, 0.5]");
    auto one = [&]() {
        if (!rng.bernoulli(epsilon)) return true_grade;
        switch (true_grade.value()) {
            case 1: return Grade(2);
            case 3: return Grade(2);
            default: return rng.bernoulli(0.5) ? Grade(1) : Grade(3);
        }
    };
    const Grade a = one(), b = one(), c = one();
    return ObserverGrades{a, b, c};
}

namespace {

// Patient-grade distribution solved so the induced lesion-grade mix equals the
// requested grade_mix after the 0.8-fidelity heterogeneity channel.
std::array<double, 3> patient_grade_weights(const std::array<double, 3>& mix) {
    // Transition rows: grade-1 patients yield lesions (0.8, 0.2, 0), grade-2
    // (0.1, 0.8, 0.1), grade-3 (0, 0.2, 0.8). Solve q^T T = mix with sum(q) = 1.
    std::array<double, 3> q{};
    q[1] = (mix[1] - 0.2) / 0.6;
    q[0] = (mix[0] - 0.1 * q[1]) / 0.8;
    q[2] = (mix[2] - 0.1 * q[1]) / 0.8;
    double sum = 0.0;
    for (double& v : q) {
        if (v < 0.0) v = 0.0;
        sum += v;
    }
    if (sum <= 0.0) throw ValidationError("grade_mix is not realizable");
    for (double& v : q) v /= sum;
    return q;
}

Grade adjacent_grade(Grade g, Rng& rng) {
    switch (g.value()) {
        case 1: return Grade(2);
        case 3: return Grade(2);
        default: return rng.bernoulli(0.5) ? Grade(1) : Grade(3);
    }
}

std::string patient_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%04d", i + 1);
    return buf;
}

}  // namespace

SynthDataset generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    const auto image_dir = out_dir / "images";
    std::error_code ec;
    std::filesystem::create_directories(image_dir, ec);
    if (ec) throw PipelineError("cannot create " + image_dir.string() + ": " + ec.message());

    const auto q = patient_grade_weights(spec.grade_mix);
    const std::vector<double> weights(q.begin(), q.end());

    SynthDataset ds;
    ds.manifest.base_dir = out_dir;
    Rng root(spec.seed);

    for (int pi = 0; pi < spec.n_patients; ++pi) {
        Rng prng = root.child("patient", static_cast<std::uint64_t>(pi));
        const Grade patient_grade(static_cast<int>(prng.weighted_index(weights)) + 1);
        const int n_lesions = static_cast<int>(
            prng.uniform_int(spec.lesions_per_patient.first, spec.lesions_per_patient.second));

        PatientRecord patient;
        patient.patient_id = patient_name(pi);

        for (int li = 0; li < n_lesions; ++li) {
            Rng lrng = prng.child("lesion", static_cast<std::uint64_t>(li));
            const Grade lesion_grade = lrng.bernoulli(kLesionGradeFidelity)
                                           ? patient_grade
                                           : adjacent_grade(patient_grade, lrng);
            const int size = static_cast<int>(
                lrng.uniform_int(spec.lesion_size_px.first, spec.lesion_size_px.second));

            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "_L%02d", li + 1);
            const std::string lesion_id = patient.patient_id + suffix;

            Rng img_rng = lrng.child("image");
            GeneratedLesion gen = generate_lesion_image(lesion_grade, size, spec.image_mpp, img_rng);
            const std::string image_rel = "images/" + lesion_id + ".png";
            save_png(gen.region.image, out_dir / image_rel);

            Rng obs_rng = lrng.child("observers");
            const ObserverGrades observers =
                simulate_observers(lesion_grade, spec.observer_error_rate, obs_rng);

            LesionRecord lesion{
                .lesion_id = lesion_id,
                .patient_id = patient.patient_id,
                .image_ref = image_rel,
                .polygon = std::move(gen.polygon),
                .mpp = spec.image_mpp,
                .observer_grades = observers,
                .label = consensus_of(observers),
            };
            patient.lesion_ids.push_back(lesion_id);
            ds.manifest.lesions.push_back(std::move(lesion));
            ds.truth.emplace_back(lesion_id, lesion_grade);
        }
        ds.manifest.patients.push_back(std::move(patient));
    }

    validate_manifest(ds.manifest, true);
    save_manifest(ds.manifest, out_dir / "manifest.json");
    write_truth_csv(ds, out_dir / "truth.csv");
    return ds;
}

void write_truth_csv(const SynthDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write " + path.string());
    out << "lesion_id,true_grade\n";
    for (const auto& [id, grade] : dataset.truth) out << id << ',' << grade.value() << '\n';
}

std::vector<std::pair<std::string, Grade>> load_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open " + path.string());
    std::vector<std::pair<std::string, Grade>> out;
    std::string line;
    if (!std::getline(in, line) || line.rfind("lesion_id,", 0) != 0)
        throw ValidationError(path.string() + " is not a truth csv");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(path.string() + ": malformed line: " + line);
        out.emplace_back(line.substr(0, comma), Grade(std::stoi(line.substr(comma + 1))));
    }
    return out;
}

}  // namespace dcis
