#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace koa {

inline constexpr int kGradeCount = 5;

/// 5x5 grid of counts, rows = true grade, columns = predicted grade.
struct ConfusionMatrix {
    std::array<std::array<long, kGradeCount>, kGradeCount> counts{};
    long n = 0;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct SummaryMetrics {
    double accuracy = 0.0;
    double balanced_accuracy = 0.0; // mean recall over classes with support
    std::array<ClassMetrics, kGradeCount> per_class{};
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    std::optional<double> one_grade_off_rate; // absent for diagonal matrices
};

SummaryMetrics summary_metrics(const ConfusionMatrix& cm);

/// Quadratic weighted kappa with weights (i-j)^2/(K-1)^2 over grades 0..4.
/// Two identical constant raters give 1.0; constant disagreeing raters 0.0.
double qwk(const std::vector<int>& ra, const std::vector<int>& rb);

/// Binary OA collapse: grades >= 2 are positive. Precision and F1 are for
/// the positive class.
struct BinaryOaMetrics {
    double precision = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

BinaryOaMetrics binary_oa(const ConfusionMatrix& cm);
BinaryOaMetrics binary_oa(const std::vector<int>& preds, const std::vector<int>& labels);

/// Pairwise agreement over a common case set, with the distance rendering
/// (distance proportional to 1/kappa; non-positive pairs are unconnected).
struct AgreementTable {
    std::vector<std::string> rater_ids;
    std::vector<std::vector<double>> kappa;
    std::vector<std::vector<std::optional<double>>> distance;
};

AgreementTable agreement_table(
    const std::vector<std::pair<std::string, std::vector<int>>>& ratings);

} // namespace koa
