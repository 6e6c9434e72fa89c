#include "koa/eval.hpp"

#include "koa/error.hpp"
#include "koa/eval_io.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace koa;

namespace {

std::vector<int> random_grades(size_t n, std::mt19937_64& rng) {
    std::vector<int> out(n);
    for (int& g : out)
        g = static_cast<int>(rng() % 5);
    return out;
}

} // namespace

TEST_CASE("confusion counts pairs by (true, predicted)") {
    ConfusionMatrix cm = confusion({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4});
    for (int k = 0; k < 5; ++k)
        CHECK(cm.counts[k][k] == 1);
    CHECK(cm.n == 5);

    ConfusionMatrix cm2 = confusion({0, 0, 0}, {0, 0, 1});
    CHECK(cm2.counts[0][0] == 2);
    CHECK(cm2.counts[1][0] == 1);

    CHECK_THROWS_AS(confusion({}, {}), Error);
    CHECK_THROWS_AS(confusion({0, 1}, {0}), Error);
    CHECK_THROWS_AS(confusion({5}, {0}), Error);
}

TEST_CASE("summary metrics on a diagonal matrix") {
    SummaryMetrics m = summary_metrics(confusion({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}));
    CHECK(m.accuracy == doctest::Approx(1.0));
    CHECK(m.balanced_accuracy == doctest::Approx(1.0));
    CHECK_FALSE(m.one_grade_off_rate.has_value());
}

TEST_CASE("summary metrics on the 2-class toy matrix") {
    // Hand-computed: labels 0 x10 (8 right), labels 1 x10 (6 right).
    std::vector<int> labels, preds;
    for (int i = 0; i < 8; ++i) { labels.push_back(0); preds.push_back(0); }
    for (int i = 0; i < 2; ++i) { labels.push_back(0); preds.push_back(1); }
    for (int i = 0; i < 4; ++i) { labels.push_back(1); preds.push_back(0); }
    for (int i = 0; i < 6; ++i) { labels.push_back(1); preds.push_back(1); }

    SummaryMetrics m = summary_metrics(confusion(preds, labels));
    CHECK(m.accuracy == doctest::Approx(0.7));
    CHECK(m.balanced_accuracy == doctest::Approx(0.7)); // (0.8 + 0.6) / 2
    CHECK(m.per_class[0].recall == doctest::Approx(0.8));
    CHECK(m.per_class[1].recall == doctest::Approx(0.6));
    CHECK(m.per_class[0].precision == doctest::Approx(8.0 / 12.0));
    CHECK(m.one_grade_off_rate.has_value());
    CHECK(*m.one_grade_off_rate == doctest::Approx(1.0));
}

TEST_CASE("one_grade_off_rate counts only adjacent mistakes") {
    // 3 errors: two off by one, one off by three.
    SummaryMetrics m =
        summary_metrics(confusion({1, 2, 3, 0}, {0, 1, 0, 0}));
    CHECK(*m.one_grade_off_rate == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("summary metrics on a transpose swap precision and recall") {
    std::mt19937_64 rng(100);
    auto preds = random_grades(200, rng);
    auto labels = random_grades(200, rng);
    ConfusionMatrix cm = confusion(preds, labels);
    ConfusionMatrix transposed;
    transposed.n = cm.n;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            transposed.counts[i][j] = cm.counts[j][i];

    SummaryMetrics a = summary_metrics(cm);
    SummaryMetrics b = summary_metrics(transposed);
    for (int k = 0; k < 5; ++k) {
        CHECK(a.per_class[k].precision == doctest::Approx(b.per_class[k].recall));
        CHECK(a.per_class[k].recall == doctest::Approx(b.per_class[k].precision));
    }
}

TEST_CASE("qwk identities") {
    std::vector<int> a{0, 1, 2, 3, 4, 2, 1};
    CHECK(qwk(a, a) == doctest::Approx(1.0));

    // Constant and identical raters agree perfectly by convention.
    std::vector<int> c(10, 2);
    CHECK(qwk(c, c) == 1.0);

    // Constant but different raters have zero agreement by convention.
    std::vector<int> d(10, 3);
    CHECK(qwk(c, d) == 0.0);

    CHECK_THROWS_AS(qwk({}, {}), Error);
    CHECK_THROWS_AS(qwk({1}, {1, 2}), Error);
}

TEST_CASE("qwk on reversed rating lists matches the direct-formula oracle") {
    std::vector<int> ra{0, 1, 2, 3, 4};
    std::vector<int> rb{4, 3, 2, 1, 0};
    double expected = testsupport::qwk_oracle(ra, rb);
    CHECK(qwk(ra, rb) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(qwk(ra, rb) < -0.5); // strongly negative by construction
}

TEST_CASE("qwk matches the oracle on random rating sets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 5 + rng() % 60;
        auto a = random_grades(n, rng);
        auto b = random_grades(n, rng);
        CHECK(qwk(a, b) == doctest::Approx(testsupport::qwk_oracle(a, b)).epsilon(1e-12));
        CHECK(qwk(a, b) == doctest::Approx(qwk(b, a)).epsilon(1e-12));
        CHECK(qwk(a, b) <= 1.0);
    }
}

TEST_CASE("qwk is invariant under joint case reordering") {
    std::mt19937_64 rng(8);
    auto a = random_grades(50, rng);
    auto b = random_grades(50, rng);
    double reference = qwk(a, b);

    std::vector<size_t> order(50);
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> pa(50), pb(50);
    for (size_t i = 0; i < order.size(); ++i) {
        pa[i] = a[order[i]];
        pb[i] = b[order[i]];
    }
    CHECK(qwk(pa, pb) == doctest::Approx(reference).epsilon(1e-12));
}

TEST_CASE("binary OA collapse at KL >= 2") {
    // All binary-correct even though every multi-class prediction is wrong.
    BinaryOaMetrics m = binary_oa({1, 0, 2, 4, 3}, {0, 1, 2, 3, 4});
    CHECK(m.accuracy == doctest::Approx(1.0));

    // Label 1 predicted as 2 is a binary false positive.
    BinaryOaMetrics fp = binary_oa({2}, {1});
    CHECK(fp.accuracy == doctest::Approx(0.0));
    CHECK(fp.precision == doctest::Approx(0.0));
}

TEST_CASE("binary OA matches a hand-tabulated 10-case fixture") {
    std::vector<int> labels{0, 1, 1, 2, 2, 3, 3, 4, 0, 2};
    std::vector<int> preds {0, 2, 1, 2, 1, 3, 4, 4, 3, 2};
    // Positives (label>=2): cases 3,4,5,6,7,9 -> preds positive for 3,5,6,7,9 (tp=5, fn=1)
    // Negatives: cases 0,1,2,8 -> preds positive for 1,8 (fp=2, tn=2)
    BinaryOaMetrics m = binary_oa(preds, labels);
    CHECK(m.accuracy == doctest::Approx(0.7));
    CHECK(m.precision == doctest::Approx(5.0 / 7.0));
    double recall = 5.0 / 6.0;
    CHECK(m.f1 == doctest::Approx(2 * (5.0 / 7.0) * recall / (5.0 / 7.0 + recall)));

    auto oracle = testsupport::binary_oa_oracle(preds, labels);
    CHECK(m.precision == doctest::Approx(oracle.precision));
    CHECK(m.f1 == doctest::Approx(oracle.f1));
    CHECK(m.accuracy == doctest::Approx(oracle.accuracy));
}

TEST_CASE("binary collapse never lowers accuracy below multi-class") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 10 + rng() % 50;
        auto preds = random_grades(n, rng);
        auto labels = random_grades(n, rng);
        double multi = summary_metrics(confusion(preds, labels)).accuracy;
        double binary = binary_oa(preds, labels).accuracy;
        CHECK(binary >= multi);
    }
}

TEST_CASE("agreement table structure") {
    std::vector<std::pair<std::string, std::vector<int>>> ratings = {
        {"r1", {0, 1, 2, 3, 4}},
        {"r2", {0, 1, 2, 3, 4}},
        {"r3", {1, 1, 2, 3, 3}},
    };
    AgreementTable t = agreement_table(ratings);
    REQUIRE(t.rater_ids.size() == 3);
    CHECK(t.kappa[0][1] == doctest::Approx(1.0)); // identical raters
    for (size_t i = 0; i < 3; ++i) {
        CHECK(t.kappa[i][i] == 1.0);
        for (size_t j = 0; j < 3; ++j)
            CHECK(t.kappa[i][j] == t.kappa[j][i]);
    }
    CHECK(t.distance[0][1].has_value());
    CHECK(*t.distance[0][1] == doctest::Approx(1.0));
}

TEST_CASE("agreement table flags non-positive pairs as unconnected") {
    std::vector<std::pair<std::string, std::vector<int>>> ratings = {
        {"up", {0, 1, 2, 3, 4}},
        {"down", {4, 3, 2, 1, 0}},
    };
    AgreementTable t = agreement_table(ratings);
    CHECK(t.kappa[0][1] < 0.0);
    CHECK_FALSE(t.distance[0][1].has_value());
}

TEST_CASE("agreement table rejects mismatched case sets") {
    std::vector<std::pair<std::string, std::vector<int>>> ratings = {
        {"a", {0, 1, 2}},
        {"b", {0, 1}},
    };
    CHECK_THROWS_AS(agreement_table(ratings), Error);
}

TEST_CASE("evaluate_documents on a self-agreement run") {
    std::string labels = "case_id,grade\nc1,0\nc2,1\nc3,2\nc4,3\nc5,4\n";
    EvaluationReport report = evaluate_documents(labels, labels);
    CHECK(report.summary.accuracy == doctest::Approx(1.0));
    CHECK(report.qwk_vs_labels == doctest::Approx(1.0));
    std::string json = evaluation_report_to_json(report);
    CHECK(json.find("\"accuracy\": 1.0") != std::string::npos);
}

TEST_CASE("evaluate_documents rejects disjoint case sets") {
    std::string preds = "case_id,grade\nc1,0\n";
    std::string labels = "case_id,grade\nc9,0\n";
    CHECK_THROWS_AS(evaluate_documents(preds, labels), Error);
}

TEST_CASE("evaluate_documents joins rater columns into the agreement table") {
    std::string preds = "case_id,grade\nc1,0\nc2,1\nc3,2\n";
    std::string labels = "case_id,grade\nc1,0\nc2,1\nc3,3\n";
    std::string ratings = "case_id,ra,rb\nc1,0,1\nc2,1,1\nc3,2,3\n";
    EvaluationReport report = evaluate_documents(preds, labels, ratings);
    REQUIRE(report.agreement.rater_ids.size() == 4);
    CHECK(report.agreement.rater_ids[0] == "labels");
    CHECK(report.agreement.rater_ids[2] == "ra");
    // predictions == ra column, so their agreement is perfect.
    CHECK(report.agreement.kappa[1][2] == doctest::Approx(1.0));
}
