#include "koa/eval_io.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>

namespace koa {

using nlohmann::json;

namespace {

int parse_grade(const std::string& field, const std::string& context) {
    try {
        size_t used = 0;
        int g = std::stoi(field, &used);
        require(used == field.size() && g >= 0 && g <= 4, ErrorCode::parse,
                "grade out of range in " + context + ": '" + field + "'");
        return g;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::parse, "unparseable grade in " + context + ": '" + field + "'");
    }
}

bool looks_like_header(const std::vector<std::string>& fields) {
    return fields.size() >= 2 && fields[1].find_first_of("0123456789") != 0;
}

} // namespace

std::vector<std::pair<std::string, int>> parse_grade_csv(const std::string& text) {
    std::vector<std::pair<std::string, int>> out;
    auto lines = split_lines(text);
    require(!lines.empty(), ErrorCode::parse, "empty grade document");
    for (size_t i = 0; i < lines.size(); ++i) {
        auto fields = split_csv_line(lines[i]);
        if (i == 0 && looks_like_header(fields))
            continue;
        require(fields.size() == 2, ErrorCode::parse,
                "grade rows need exactly case_id and grade: '" + lines[i] + "'");
        out.emplace_back(fields[0], parse_grade(fields[1], "case " + fields[0]));
    }
    require(!out.empty(), ErrorCode::parse, "grade document holds no cases");
    return out;
}

RatingsDocument parse_ratings_csv(const std::string& text) {
    auto lines = split_lines(text);
    require(lines.size() >= 2, ErrorCode::parse, "ratings document needs header and rows");
    auto header = split_csv_line(lines[0]);
    require(header.size() >= 2 && header[0] == "case_id", ErrorCode::parse,
            "ratings header must start with case_id");

    RatingsDocument doc;
    doc.rater_ids.assign(header.begin() + 1, header.end());
    doc.grades.assign(doc.rater_ids.size(), {});
    for (size_t i = 1; i < lines.size(); ++i) {
        auto fields = split_csv_line(lines[i]);
        require(fields.size() == header.size(), ErrorCode::parse,
                "ratings row width disagrees with header: '" + lines[i] + "'");
        doc.case_ids.push_back(fields[0]);
        for (size_t r = 0; r < doc.rater_ids.size(); ++r)
            doc.grades[r].push_back(
                parse_grade(fields[r + 1], doc.rater_ids[r] + "@" + fields[0]));
    }
    return doc;
}

EvaluationReport evaluate_documents(const std::string& predictions_csv,
                                    const std::string& labels_csv,
                                    const std::string& ratings_csv) {
    std::map<std::string, int> preds, labels;
    for (auto& [id, g] : parse_grade_csv(predictions_csv)) {
        require(preds.emplace(id, g).second, ErrorCode::parse,
                "duplicate prediction for case " + id);
    }
    for (auto& [id, g] : parse_grade_csv(labels_csv)) {
        require(labels.emplace(id, g).second, ErrorCode::parse,
                "duplicate label for case " + id);
    }
    require(preds.size() == labels.size(), ErrorCode::invalid_argument,
            "prediction and label case sets differ in size");
    for (const auto& [id, g] : preds)
        require(labels.count(id) == 1, ErrorCode::invalid_argument,
                "case " + id + " has a prediction but no label");

    // std::map iteration orders cases by id, so everything downstream is
    // deterministic.
    std::vector<int> pred_list, label_list;
    for (const auto& [id, g] : preds) {
        pred_list.push_back(g);
        label_list.push_back(labels.at(id));
    }

    EvaluationReport report;
    report.cm = confusion(pred_list, label_list);
    report.summary = summary_metrics(report.cm);
    report.binary = binary_oa(report.cm);
    report.qwk_vs_labels = qwk(pred_list, label_list);

    std::vector<std::pair<std::string, std::vector<int>>> participants;
    participants.emplace_back("labels", label_list);
    participants.emplace_back("predictions", pred_list);
    if (!ratings_csv.empty()) {
        RatingsDocument ratings = parse_ratings_csv(ratings_csv);
        std::map<std::string, size_t> case_index;
        for (size_t i = 0; i < ratings.case_ids.size(); ++i)
            case_index[ratings.case_ids[i]] = i;
        for (const auto& [id, g] : preds)
            require(case_index.count(id) == 1, ErrorCode::invalid_argument,
                    "ratings document missing case " + id);
        require(case_index.size() == preds.size(), ErrorCode::invalid_argument,
                "ratings cover a different case set than the predictions");
        for (size_t r = 0; r < ratings.rater_ids.size(); ++r) {
            std::vector<int> aligned;
            for (const auto& [id, g] : preds)
                aligned.push_back(ratings.grades[r][case_index.at(id)]);
            participants.emplace_back(ratings.rater_ids[r], std::move(aligned));
        }
    }
    report.agreement = agreement_table(participants);
    return report;
}

std::string evaluation_report_to_json(const EvaluationReport& report) {
    json doc;
    json cm = json::array();
    for (const auto& row : report.cm.counts)
        cm.push_back(row);
    doc["confusion"] = std::move(cm);
    doc["n"] = report.cm.n;
    doc["accuracy"] = report.summary.accuracy;
    doc["balanced_accuracy"] = report.summary.balanced_accuracy;

    json per_class = json::array();
    for (const auto& m : report.summary.per_class)
        per_class.push_back({{"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"support", m.support}});
    doc["per_class"] = std::move(per_class);
    doc["weighted"] = {{"precision", report.summary.weighted_precision},
                       {"recall", report.summary.weighted_recall},
                       {"f1", report.summary.weighted_f1}};
    if (report.summary.one_grade_off_rate)
        doc["one_grade_off_rate"] = *report.summary.one_grade_off_rate;
    else
        doc["one_grade_off_rate"] = nullptr;
    doc["binary_oa"] = {{"precision", report.binary.precision},
                        {"f1", report.binary.f1},
                        {"accuracy", report.binary.accuracy}};
    doc["qwk_vs_labels"] = report.qwk_vs_labels;

    json kappa = json::array(), distance = json::array();
    for (size_t i = 0; i < report.agreement.rater_ids.size(); ++i) {
        kappa.push_back(report.agreement.kappa[i]);
        json row = json::array();
        for (const auto& d : report.agreement.distance[i]) {
            if (d)
                row.push_back(*d);
            else
                row.push_back(nullptr); // unconnected pair
        }
        distance.push_back(std::move(row));
    }
    doc["agreement"] = {{"raters", report.agreement.rater_ids},
                        {"kappa", std::move(kappa)},
                        {"distance", std::move(distance)}};
    return doc.dump(2) + "\n";
}

} // namespace koa
