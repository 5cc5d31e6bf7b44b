#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcis/datamodel.hpp"

namespace dcis {

// 3x3 rating cross-table: rows = rater A's grade, columns = rater B's grade.
struct ConfusionMatrix {
    std::array<std::array<long, 3>, 3> counts{};

    long n() const {
        long total = 0;
        for (const auto& row : counts)
            for (long c : row) total += c;
        return total;
    }

    ConfusionMatrix transposed() const;
};

ConfusionMatrix confusion(std::span<const Grade> ratings_a, std::span<const Grade> ratings_b);

// Weighted Cohen's kappa with disagreement weights |i-j|^e / (k-1)^e.
// The exponent defaults to quadratic; it is a parameter for testing only.
// Throws on degenerate marginals (both raters concentrated on one identical
// category), where kappa is undefined.
double qwk(const ConfusionMatrix& matrix, double weight_exponent = 2.0);

struct KappaResult {
    double kappa = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double standard_error = 0.0;
};

// Large-sample analytic standard error for weighted kappa (Fleiss-Cohen-Everitt
// form over agreement weights). The interval is deliberately NOT clipped to
// [-1, 1]; published intervals of this statistic can exceed 1.
KappaResult qwk_ci(const ConfusionMatrix& matrix, double confidence = 0.95);

struct RunStats {
    double mean = 0.0;
    std::optional<double> sd;  // absent for a single run
};

// Mean and sample standard deviation (n-1 denominator) across training runs.
RunStats multi_run_stats(std::span<const double> kappas);

struct RaterColumn {
    std::string name;
    std::vector<Grade> grades;
};

struct PairwiseAgreement {
    std::string rater_a;
    std::string rater_b;
    ConfusionMatrix matrix;
    KappaResult kappa;
};

// All unordered rater pairs, in the given column order.
std::vector<PairwiseAgreement> full_report(std::span<const RaterColumn> raters);

}  // namespace dcis
