#include "dcis/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dcis/rng.hpp"

namespace dcis {

using nlohmann::json;

ConsensusLabel consensus_of(const ObserverGrades& grades) {
    int counts[4] = {0, 0, 0, 0};
    for (const Grade& g : grades) ++counts[g.value()];
    for (int v = 1; v <= 3; ++v) {
        if (counts[v] >= 2) return ConsensusLabel{Grade(v), counts[v]};
    }
    // all three differ: consensus is grade 2, with a single agreeing observer
    return ConsensusLabel{Grade(2), 1};
}

Grade observer_patient_grade(std::span<const Grade> lesion_grades) {
    if (lesion_grades.empty())
        throw ValidationError("patient has no lesion grades to aggregate");
    return *std::max_element(lesion_grades.begin(), lesion_grades.end());
}

const char* subset_name(Subset s) {
    switch (s) {
        case Subset::train: return "train";
        case Subset::validation: return "validation";
        case Subset::test: return "test";
    }
    return "?";
}

Subset subset_from_name(const std::string& name) {
    if (name == "train") return Subset::train;
    if (name == "validation") return Subset::validation;
    if (name == "test") return Subset::test;
    throw ValidationError("unknown subset name: " + name);
}

const LesionRecord& DatasetManifest::lesion(const std::string& lesion_id) const {
    for (const auto& l : lesions)
        if (l.lesion_id == lesion_id) return l;
    throw ValidationError("unknown lesion id: " + lesion_id);
}

std::vector<const LesionRecord*> DatasetManifest::lesions_of(const PatientRecord& patient) const {
    std::vector<const LesionRecord*> out;
    out.reserve(patient.lesion_ids.size());
    for (const auto& id : patient.lesion_ids) out.push_back(&lesion(id));
    return out;
}

std::vector<const LesionRecord*> DatasetManifest::subset_lesions(Subset s) const {
    std::vector<const LesionRecord*> out;
    for (const auto& l : lesions) {
        auto it = split.find(l.patient_id);
        if (it != split.end() && it->second == s) out.push_back(&l);
    }
    return out;
}

std::vector<const PatientRecord*> DatasetManifest::subset_patients(Subset s) const {
    std::vector<const PatientRecord*> out;
    for (const auto& p : patients) {
        auto it = split.find(p.patient_id);
        if (it != split.end() && it->second == s) out.push_back(&p);
    }
    return out;
}

Grade DatasetManifest::patient_consensus_grade(const PatientRecord& patient) const {
    std::vector<Grade> grades;
    grades.reserve(patient.lesion_ids.size());
    for (const auto* l : lesions_of(patient)) grades.push_back(l->label.consensus);
    return observer_patient_grade(grades);
}

std::filesystem::path DatasetManifest::resolve_image(const LesionRecord& lesion) const {
    std::filesystem::path p(lesion.image_ref);
    if (p.is_absolute()) return p;
    return base_dir / p;
}

namespace {

double polygon_area(const std::vector<std::array<double, 2>>& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::abs(acc);
}

bool segments_cross(const std::array<double, 2>& p1, const std::array<double, 2>& p2,
                    const std::array<double, 2>& q1, const std::array<double, 2>& q2) {
    auto orient = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                     const std::array<double, 2>& c) {
        const double v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
    };
    const int o1 = orient(p1, p2, q1);
    const int o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1);
    const int o4 = orient(q1, q2, p2);
    // strict crossing only; shared endpoints between adjacent edges are excluded by the caller
    return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

bool polygon_is_simple(const std::vector<std::array<double, 2>>& poly) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // skip adjacent edges (and the closing pair)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

}  // namespace

void validate_manifest(const DatasetManifest& manifest, bool check_images) {
    std::unordered_map<std::string, const LesionRecord*> by_lesion_id;
    for (const auto& l : manifest.lesions) {
        if (!by_lesion_id.emplace(l.lesion_id, &l).second)
            throw ValidationError("duplicate lesion id: " + l.lesion_id);
        if (l.polygon.size() < 3)
            throw ValidationError("lesion " + l.lesion_id + ": polygon needs >= 3 vertices");
        if (polygon_area(l.polygon) <= 0.0)
            throw ValidationError("lesion " + l.lesion_id + ": polygon has zero area");
        if (!polygon_is_simple(l.polygon))
            throw ValidationError("lesion " + l.lesion_id + ": polygon is self-intersecting");
        if (!(l.mpp > 0.0))
            throw ValidationError("lesion " + l.lesion_id + ": mpp must be positive");
        if (l.label != consensus_of(l.observer_grades))
            throw ValidationError("lesion " + l.lesion_id + ": cached label does not match observers");
        if (check_images && !std::filesystem::exists(manifest.resolve_image(l)))
            throw ValidationError("lesion " + l.lesion_id + ": image not found: " +
                                  manifest.resolve_image(l).string());
    }

    std::unordered_set<std::string> patient_ids;
    std::unordered_set<std::string> claimed_lesions;
    for (const auto& p : manifest.patients) {
        if (!patient_ids.insert(p.patient_id).second)
            throw ValidationError("duplicate patient id: " + p.patient_id);
        if (p.lesion_ids.empty())
            throw ValidationError("patient " + p.patient_id + " has no lesions");
        for (const auto& lid : p.lesion_ids) {
            auto it = by_lesion_id.find(lid);
            if (it == by_lesion_id.end())
                throw ValidationError("patient " + p.patient_id + " references unknown lesion " + lid);
            if (it->second->patient_id != p.patient_id)
                throw ValidationError("lesion " + lid + " carries patient id " +
                                      it->second->patient_id + " but is listed under " + p.patient_id);
            if (!claimed_lesions.insert(lid).second)
                throw ValidationError("lesion " + lid + " listed under more than one patient");
        }
    }
    for (const auto& l : manifest.lesions) {
        if (!patient_ids.count(l.patient_id))
            throw ValidationError("lesion " + l.lesion_id + " references unknown patient " + l.patient_id);
        if (!claimed_lesions.count(l.lesion_id))
            throw ValidationError("lesion " + l.lesion_id + " is not listed under any patient");
    }

    if (!manifest.split.empty()) {
        for (const auto& [pid, s] : manifest.split) {
            (void)s;
            if (!patient_ids.count(pid))
                throw ValidationError("split names unknown patient " + pid);
        }
        for (const auto& p : manifest.patients)
            if (!manifest.split.count(p.patient_id))
                throw ValidationError("split does not cover patient " + p.patient_id);
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_images) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open manifest: " + path.string());
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }

    DatasetManifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    try {
        for (const auto& jl : doc.at("lesions")) {
            LesionRecord l{
                .lesion_id = jl.at("lesion_id").get<std::string>(),
                .patient_id = jl.at("patient_id").get<std::string>(),
                .image_ref = jl.at("image").get<std::string>(),
                .polygon = {},
                .mpp = jl.at("mpp_um").get<double>(),
                .observer_grades = {Grade(jl.at("observer_grades").at(0).get<int>()),
                                    Grade(jl.at("observer_grades").at(1).get<int>()),
                                    Grade(jl.at("observer_grades").at(2).get<int>())},
                .label = ConsensusLabel{Grade(1), 3},
            };
            if (jl.at("observer_grades").size() != 3)
                throw ValidationError("lesion " + l.lesion_id + ": expected exactly 3 observer grades");
            for (const auto& v : jl.at("polygon"))
                l.polygon.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            l.label = consensus_of(l.observer_grades);
            m.lesions.push_back(std::move(l));
        }
        for (const auto& jp : doc.at("patients")) {
            PatientRecord p;
            p.patient_id = jp.at("patient_id").get<std::string>();
            for (const auto& v : jp.at("lesion_ids")) p.lesion_ids.push_back(v.get<std::string>());
            m.patients.push_back(std::move(p));
        }
        if (doc.contains("split")) {
            for (const auto& [pid, name] : doc.at("split").items())
                m.split.emplace(pid, subset_from_name(name.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + path.string() + ": " + e.what());
    }

    validate_manifest(m, check_images);
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["lesions"] = json::array();
    for (const auto& l : manifest.lesions) {
        json jl;
        jl["lesion_id"] = l.lesion_id;
        jl["patient_id"] = l.patient_id;
        jl["image"] = l.image_ref;
        jl["polygon"] = json::array();
        for (const auto& v : l.polygon) jl["polygon"].push_back({v[0], v[1]});
        jl["mpp_um"] = l.mpp;
        jl["observer_grades"] = {l.observer_grades[0].value(), l.observer_grades[1].value(),
                                 l.observer_grades[2].value()};
        doc["lesions"].push_back(std::move(jl));
    }
    doc["patients"] = json::array();
    for (const auto& p : manifest.patients) {
        json jp;
        jp["patient_id"] = p.patient_id;
        jp["lesion_ids"] = p.lesion_ids;
        doc["patients"].push_back(std::move(jp));
    }
    if (!manifest.split.empty()) {
        json js = json::object();
        for (const auto& [pid, s] : manifest.split) js[pid] = subset_name(s);
        doc["split"] = std::move(js);
    }

    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write manifest: " + path.string());
    out << doc.dump(2) << '\n';
}

std::vector<std::string> stratified_patient_split(DatasetManifest& manifest,
                                                  const SplitFractions& fractions,
                                                  std::uint64_t seed) {
    const double fr[3] = {fractions.train, fractions.validation, fractions.test};
    for (double f : fr)
        if (!(f > 0.0)) throw ValidationError("split fractions must all be positive");
    if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9)
        throw ValidationError("split fractions must sum to 1");
    if (manifest.patients.empty()) throw ValidationError("manifest has no patients");

    // strata keyed by patient-level consensus grade, patients in manifest order
    std::array<std::vector<const PatientRecord*>, 3> strata;
    for (const auto& p : manifest.patients)
        strata[manifest.patient_consensus_grade(p).index()].push_back(&p);

    std::vector<std::string> warnings;
    Rng rng(seed);
    manifest.split.clear();

    for (int g = 0; g < 3; ++g) {
        auto& stratum = strata[g];
        if (stratum.empty()) continue;
        Rng stratum_rng = rng.child("stratum", static_cast<std::uint64_t>(g + 1));
        stratum_rng.shuffle(stratum);

        const auto n = static_cast<long>(stratum.size());
        if (n < 3)
            warnings.push_back("grade " + std::to_string(g + 1) + " stratum has only " +
                               std::to_string(n) + " patient(s); some subsets receive none");

        // largest-remainder allocation over the three subsets
        long counts[3];
        double remainders[3];
        long assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double quota = fr[s] * static_cast<double>(n);
            counts[s] = static_cast<long>(std::floor(quota));
            remainders[s] = quota - static_cast<double>(counts[s]);
            assigned += counts[s];
        }
        int order[3] = {0, 1, 2};
        std::stable_sort(order, order + 3,
                         [&](int a, int b) { return remainders[a] > remainders[b]; });
        for (long leftover = n - assigned, idx = 0; leftover > 0; --leftover, ++idx)
            ++counts[order[idx % 3]];

        std::size_t pos = 0;
        const Subset subsets[3] = {Subset::train, Subset::validation, Subset::test};
        for (int s = 0; s < 3; ++s)
            for (long c = 0; c < counts[s]; ++c)
                manifest.split.emplace(stratum[pos++]->patient_id, subsets[s]);
    }
    return warnings;
}

std::map<std::string, Subset> load_split_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open split csv: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "patient_id,subset")
        throw ValidationError(path.string() + " is not a split csv");
    std::map<std::string, Subset> split;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(path.string() + ": malformed line: " + line);
        if (!split.emplace(line.substr(0, comma), subset_from_name(line.substr(comma + 1))).second)
            throw ValidationError(path.string() + ": duplicate patient: " + line);
    }
    return split;
}

void apply_split(DatasetManifest& manifest, const std::map<std::string, Subset>& split) {
    for (const auto& p : manifest.patients)
        if (!split.count(p.patient_id))
            throw ValidationError("split does not cover patient " + p.patient_id);
    for (const auto& [pid, s] : split) {
        (void)s;
        bool known = false;
        for (const auto& p : manifest.patients) known |= p.patient_id == pid;
        if (!known) throw ValidationError("split names unknown patient " + pid);
    }
    manifest.split = split;
}

void write_split_csv(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write split csv: " + path.string());
    out << "patient_id,subset\n";
    for (const auto& p : manifest.patients) {
        auto it = manifest.split.find(p.patient_id);
        if (it == manifest.split.end())
            throw ValidationError("patient " + p.patient_id + " has no split assignment");
        out << p.patient_id << ',' << subset_name(it->second) << '\n';
    }
}

}  // namespace dcis
