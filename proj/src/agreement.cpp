#include "dcis/agreement.hpp"

#include <cmath>
#include <numbers>

namespace dcis {

ConfusionMatrix ConfusionMatrix::transposed() const {
    ConfusionMatrix t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t.counts[j][i] = counts[i][j];
    return t;
}

ConfusionMatrix confusion(std::span<const Grade> ratings_a, std::span<const Grade> ratings_b) {
    if (ratings_a.size() != ratings_b.size())
        throw ValidationError("confusion: rating lists differ in length (" +
                              std::to_string(ratings_a.size()) + " vs " +
                              std::to_string(ratings_b.size()) + ")");
    if (ratings_a.empty()) throw ValidationError("confusion: empty rating lists");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < ratings_a.size(); ++i)
        ++m.counts[ratings_a[i].index()][ratings_b[i].index()];
    return m;
}

namespace {

struct KappaParts {
    double p[3][3];       // observed proportions
    double row[3], col[3];  // marginals
    double w[3][3];       // agreement weights, 1 - d
    double p_o, p_e;      // weighted observed / expected agreement
};

KappaParts decompose(const ConfusionMatrix& matrix, double weight_exponent) {
    const long n = matrix.n();
    if (n < 1) throw ValidationError("kappa: empty confusion matrix");
    for (const auto& r : matrix.counts)
        for (long c : r)
            if (c < 0) throw ValidationError("kappa: negative cell count");

    KappaParts k{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            k.p[i][j] = static_cast<double>(matrix.counts[i][j]) / static_cast<double>(n);
            k.row[i] += k.p[i][j];
            k.col[j] += k.p[i][j];
        }

    const double denom = std::pow(2.0, weight_exponent);  // (k - 1)^e with k = 3
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            k.w[i][j] = 1.0 - std::pow(std::abs(i - j), weight_exponent) / denom;

    // Accumulate mirrored cells together so the result is bit-identical under
    // transposition (IEEE addition is commutative; only the order matters).
    for (int i = 0; i < 3; ++i) {
        k.p_o += k.w[i][i] * k.p[i][i];
        k.p_e += k.w[i][i] * (k.row[i] * k.col[i]);
    }
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            k.p_o += k.w[i][j] * (k.p[i][j] + k.p[j][i]);
            k.p_e += k.w[i][j] * (k.row[i] * k.col[j] + k.row[j] * k.col[i]);
        }

    if (1.0 - k.p_e <= 0.0)
        throw ValidationError("kappa: degenerate marginals, kappa undefined");
    return k;
}

// z such that Phi(z) = 1 - (1 - confidence) / 2. The 95% value is pinned to
// the exact constant the reports use; other levels are solved numerically.
double z_for_confidence(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ValidationError("confidence must lie in (0, 1)");
    if (std::abs(confidence - 0.95) < 1e-12) return 1.959964;
    const double target = 1.0 - (1.0 - confidence) / 2.0;
    double z = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double phi = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        const double step = (phi - target) / pdf;
        z -= step;
        if (std::abs(step) < 1e-13) break;
    }
    return z;
}

}  // namespace

double qwk(const ConfusionMatrix& matrix, double weight_exponent) {
    const KappaParts k = decompose(matrix, weight_exponent);
    return (k.p_o - k.p_e) / (1.0 - k.p_e);
}

KappaResult qwk_ci(const ConfusionMatrix& matrix, double confidence) {
    const long n = matrix.n();
    if (n < 2) throw ValidationError("kappa CI requires n >= 2");
    const KappaParts k = decompose(matrix, 2.0);

    const double kappa = (k.p_o - k.p_e) / (1.0 - k.p_e);

    // Row/column average agreement weights.
    double wbar_row[3] = {0, 0, 0}, wbar_col[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            wbar_row[i] += k.w[i][j] * k.col[j];
            wbar_col[j] += k.w[i][j] * k.row[i];
        }

    // Fleiss, Cohen & Everitt large-sample variance of weighted kappa.
    const double one_minus_pe = 1.0 - k.p_e;
    const double one_minus_po = 1.0 - k.p_o;
    double acc = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double term =
                k.w[i][j] * one_minus_pe - (wbar_row[i] + wbar_col[j]) * one_minus_po;
            acc += k.p[i][j] * term * term;
        }
    const double correction = k.p_o * k.p_e - 2.0 * k.p_e + k.p_o;
    double variance = (acc - correction * correction) /
                      (static_cast<double>(n) * one_minus_pe * one_minus_pe * one_minus_pe * one_minus_pe);
    if (variance < 0.0) variance = 0.0;  // guard against rounding at the zero-variance limit

    KappaResult result;
    result.kappa = kappa;
    result.standard_error = std::sqrt(variance);
    const double z = z_for_confidence(confidence);
    result.ci_low = kappa - z * result.standard_error;
    result.ci_high = kappa + z * result.standard_error;
    return result;
}

RunStats multi_run_stats(std::span<const double> kappas) {
    if (kappas.empty()) throw ValidationError("multi_run_stats: no values");
    RunStats stats;
    double sum = 0.0;
    for (double v : kappas) sum += v;
    stats.mean = sum / static_cast<double>(kappas.size());
    if (kappas.size() >= 2) {
        double ss = 0.0;
        for (double v : kappas) ss += (v - stats.mean) * (v - stats.mean);
        stats.sd = std::sqrt(ss / static_cast<double>(kappas.size() - 1));
    }
    return stats;
}

std::vector<PairwiseAgreement> full_report(std::span<const RaterColumn> raters) {
    if (raters.size() < 2) throw ValidationError("full_report: need at least two raters");
    for (std::size_t i = 1; i < raters.size(); ++i)
        if (raters[i].grades.size() != raters[0].grades.size())
            throw ValidationError("full_report: rater " + raters[i].name +
                                  " has a different number of ratings");

    std::vector<PairwiseAgreement> out;
    for (std::size_t i = 0; i < raters.size(); ++i)
        for (std::size_t j = i + 1; j < raters.size(); ++j) {
            PairwiseAgreement pair;
            pair.rater_a = raters[i].name;
            pair.rater_b = raters[j].name;
            pair.matrix = confusion(raters[i].grades, raters[j].grades);
            pair.kappa = qwk_ci(pair.matrix);
            out.push_back(std::move(pair));
        }
    return out;
}

}  // namespace dcis
