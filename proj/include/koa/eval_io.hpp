#pragma once

#include "koa/eval.hpp"

#include <string>
#include <vector>

namespace koa {

/// Case-keyed grades: CSV rows "case_id,grade" with an optional header.
std::vector<std::pair<std::string, int>> parse_grade_csv(const std::string& text);

/// Ratings document: header "case_id,<rater>,..." then one grade per rater
/// per case. Every rater must cover every case.
struct RatingsDocument {
    std::vector<std::string> rater_ids;
    std::vector<std::string> case_ids;
    std::vector<std::vector<int>> grades; // grades[rater][case]
};

RatingsDocument parse_ratings_csv(const std::string& text);

struct EvaluationReport {
    ConfusionMatrix cm;
    SummaryMetrics summary;
    BinaryOaMetrics binary;
    double qwk_vs_labels = 0.0;
    AgreementTable agreement; // labels, predictions, then any extra raters
};

/// Full evaluation protocol: confusion + summary metrics + binary OA +
/// pairwise QWK. Prediction and label case sets must match exactly; extra
/// raters join the agreement table. Cases are aligned by sorted case_id.
EvaluationReport evaluate_documents(const std::string& predictions_csv,
                                    const std::string& labels_csv,
                                    const std::string& ratings_csv = "");

std::string evaluation_report_to_json(const EvaluationReport& report);

} // namespace koa
