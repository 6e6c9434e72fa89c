#include "koa/eval.hpp"

#include "koa/error.hpp"

#include <cmath>

namespace koa {

namespace {

void check_grades(const std::vector<int>& grades) {
    for (int g : grades)
        require(g >= 0 && g < kGradeCount, ErrorCode::invalid_argument,
                "grade out of range 0..4");
}

} // namespace

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
    require(preds.size() == labels.size(), ErrorCode::invalid_argument,
            "prediction and label lists differ in length");
    require(!preds.empty(), ErrorCode::invalid_argument, "empty prediction list");
    check_grades(preds);
    check_grades(labels);

    ConfusionMatrix cm;
    for (size_t i = 0; i < preds.size(); ++i)
        ++cm.counts[labels[i]][preds[i]];
    cm.n = static_cast<long>(preds.size());
    return cm;
}

SummaryMetrics summary_metrics(const ConfusionMatrix& cm) {
    require(cm.n > 0, ErrorCode::invalid_argument, "empty confusion matrix");

    SummaryMetrics out;
    long trace = 0;
    std::array<long, kGradeCount> row_sum{}, col_sum{};
    for (int t = 0; t < kGradeCount; ++t)
        for (int p = 0; p < kGradeCount; ++p) {
            row_sum[t] += cm.counts[t][p];
            col_sum[p] += cm.counts[t][p];
            if (t == p)
                trace += cm.counts[t][p];
        }
    out.accuracy = static_cast<double>(trace) / cm.n;

    double recall_sum = 0.0;
    int present_classes = 0;
    double wp = 0.0, wr = 0.0, wf = 0.0;
    for (int k = 0; k < kGradeCount; ++k) {
        ClassMetrics& m = out.per_class[k];
        m.support = row_sum[k];
        long tp = cm.counts[k][k];
        m.precision = col_sum[k] > 0 ? static_cast<double>(tp) / col_sum[k] : 0.0;
        m.recall = row_sum[k] > 0 ? static_cast<double>(tp) / row_sum[k] : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (row_sum[k] > 0) {
            recall_sum += m.recall;
            ++present_classes;
            wp += m.precision * row_sum[k];
            wr += m.recall * row_sum[k];
            wf += m.f1 * row_sum[k];
        }
    }
    out.balanced_accuracy = recall_sum / present_classes;
    out.weighted_precision = wp / cm.n;
    out.weighted_recall = wr / cm.n;
    out.weighted_f1 = wf / cm.n;

    long off_diag = cm.n - trace;
    if (off_diag > 0) {
        long one_off = 0;
        for (int t = 0; t < kGradeCount; ++t)
            for (int p = 0; p < kGradeCount; ++p)
                if (std::abs(t - p) == 1)
                    one_off += cm.counts[t][p];
        out.one_grade_off_rate = static_cast<double>(one_off) / off_diag;
    }
    return out;
}

double qwk(const std::vector<int>& ra, const std::vector<int>& rb) {
    require(ra.size() == rb.size(), ErrorCode::invalid_argument,
            "rating lists differ in length");
    require(!ra.empty(), ErrorCode::invalid_argument, "empty rating lists");
    check_grades(ra);
    check_grades(rb);

    const int K = kGradeCount;
    std::array<std::array<long, kGradeCount>, kGradeCount> observed{};
    std::array<long, kGradeCount> marg_a{}, marg_b{};
    for (size_t i = 0; i < ra.size(); ++i) {
        ++observed[ra[i]][rb[i]];
        ++marg_a[ra[i]];
        ++marg_b[rb[i]];
    }

    double n = static_cast<double>(ra.size());
    double weighted_obs = 0.0, weighted_exp = 0.0;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            double w = static_cast<double>((i - j) * (i - j)) / ((K - 1) * (K - 1));
            weighted_obs += w * observed[i][j];
            weighted_exp += w * (static_cast<double>(marg_a[i]) * marg_b[j] / n);
        }

    if (weighted_exp == 0.0) {
        // Both raters constant: perfect agreement when they match, none when
        // they do not.
        return weighted_obs == 0.0 ? 1.0 : 0.0;
    }
    return 1.0 - weighted_obs / weighted_exp;
}

namespace {

BinaryOaMetrics binary_from_counts(long tp, long fp, long fn, long tn) {
    BinaryOaMetrics out;
    long n = tp + fp + fn + tn;
    out.accuracy = n > 0 ? static_cast<double>(tp + tn) / n : 0.0;
    out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    out.f1 = (out.precision + recall) > 0.0
                 ? 2.0 * out.precision * recall / (out.precision + recall)
                 : 0.0;
    return out;
}

} // namespace

BinaryOaMetrics binary_oa(const ConfusionMatrix& cm) {
    require(cm.n > 0, ErrorCode::invalid_argument, "empty confusion matrix");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int t = 0; t < kGradeCount; ++t)
        for (int p = 0; p < kGradeCount; ++p) {
            bool true_pos = t >= 2, pred_pos = p >= 2;
            long c = cm.counts[t][p];
            if (true_pos && pred_pos)
                tp += c;
            else if (!true_pos && pred_pos)
                fp += c;
            else if (true_pos && !pred_pos)
                fn += c;
            else
                tn += c;
        }
    return binary_from_counts(tp, fp, fn, tn);
}

BinaryOaMetrics binary_oa(const std::vector<int>& preds, const std::vector<int>& labels) {
    return binary_oa(confusion(preds, labels));
}

AgreementTable agreement_table(
    const std::vector<std::pair<std::string, std::vector<int>>>& ratings) {
    require(ratings.size() >= 2, ErrorCode::invalid_argument,
            "agreement needs at least two raters");
    size_t n_cases = ratings.front().second.size();
    for (const auto& [id, grades] : ratings)
        require(grades.size() == n_cases, ErrorCode::invalid_argument,
                "rater '" + id + "' covers a different case set");

    size_t n = ratings.size();
    AgreementTable table;
    table.rater_ids.reserve(n);
    for (const auto& [id, grades] : ratings)
        table.rater_ids.push_back(id);
    table.kappa.assign(n, std::vector<double>(n, 1.0));
    table.distance.assign(n, std::vector<std::optional<double>>(n));

    for (size_t i = 0; i < n; ++i) {
        table.distance[i][i] = 0.0;
        for (size_t j = i + 1; j < n; ++j) {
            double k = qwk(ratings[i].second, ratings[j].second);
            table.kappa[i][j] = table.kappa[j][i] = k;
            if (k > 0.0)
                table.distance[i][j] = table.distance[j][i] = 1.0 / k;
            // non-positive agreement leaves the pair unconnected
        }
    }
    return table;
}

} // namespace koa
