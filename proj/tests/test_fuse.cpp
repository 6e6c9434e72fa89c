#include "koa/fuse.hpp"

#include "koa/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace koa;

namespace {

// The synthetic labeling rule from the module contract: KL grade is the
// medial JSN grade, bumped one step when the grade-4 probability dominates.
int rule_label(const FeatureVector& fv) {
    int g = grade_jsn(fv.values[5], {8, 17, 23});
    return g + (fv.values[4] > 0.5 ? 1 : 0);
}

std::vector<TrainingSample> rule_dataset(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> gap(0.0, 35.0);
    std::vector<TrainingSample> out(n);
    for (auto& sample : out) {
        std::array<double, 5> p{};
        if (unit(rng) < 0.4) {
            p[4] = 0.55 + 0.4 * unit(rng);
            double rest = 1.0 - p[4];
            for (int i = 0; i < 4; ++i)
                p[i] = rest / 4.0;
        } else {
            double sum = 0.0;
            for (int i = 0; i < 4; ++i) {
                p[i] = unit(rng);
                sum += p[i];
            }
            p[4] = 0.4 * unit(rng);
            sum += p[4];
            for (double& v : p)
                v /= sum;
        }
        std::copy(p.begin(), p.end(), sample.features.values.begin());
        sample.features.values[5] = gap(rng);
        sample.features.values[6] = gap(rng);
        sample.label = rule_label(sample.features);
    }
    return out;
}

ForestParams paper_params(uint64_t seed = 7) {
    ForestParams params;
    params.master_seed = seed;
    return params;
}

} // namespace

TEST_CASE("assemble_features concatenates in the fixed order") {
    ProbabilityVector p{{0.1, 0.2, 0.3, 0.3, 0.1}};
    JsdMeasurement jsd;
    jsd.med_px = 21.0;
    jsd.lat_px = 28.0;
    FeatureVector fv = assemble_features(p, jsd);
    CHECK(fv.values == std::array<double, 7>{0.1, 0.2, 0.3, 0.3, 0.1, 21, 28});

    ProbabilityVector uniform{{0.2, 0.2, 0.2, 0.2, 0.2}};
    JsdMeasurement zero;
    FeatureVector fz = assemble_features(uniform, zero);
    CHECK(fz.values[5] == 0.0);
    CHECK(fz.values[6] == 0.0);
}

TEST_CASE("assemble_features rejects negative gaps") {
    ProbabilityVector p{{0.2, 0.2, 0.2, 0.2, 0.2}};
    JsdMeasurement jsd;
    jsd.med_px = -1.0;
    CHECK_THROWS_AS(assemble_features(p, jsd), Error);
}

TEST_CASE("train_forest on a single class predicts that class") {
    auto dataset = rule_dataset(50, 1);
    for (auto& s : dataset)
        s.label = 3;
    RandomForestModel model = train_forest(dataset, paper_params());
    for (int i = 0; i < 10; ++i) {
        KlAssessment a = predict(model, dataset[i].features);
        CHECK(a.kl_grade == 3);
        CHECK(a.vote_distribution[3] == doctest::Approx(1.0));
    }
}

TEST_CASE("train_forest rejects datasets under 10 samples") {
    auto dataset = rule_dataset(9, 2);
    CHECK_THROWS_AS(train_forest(dataset, paper_params()), Error);
}

TEST_CASE("train_forest learns the synthetic rule") {
    auto train = rule_dataset(2000, 42);
    RandomForestModel model = train_forest(train, paper_params());

    long correct = 0;
    for (const auto& s : train)
        correct += predict(model, s.features).kl_grade == s.label;
    double train_acc = double(correct) / train.size();
    CHECK(train_acc >= 0.99);

    auto held_out = rule_dataset(500, 999);
    correct = 0;
    for (const auto& s : held_out)
        correct += predict(model, s.features).kl_grade == s.label;
    CHECK(double(correct) / held_out.size() >= 0.95);
}

TEST_CASE("training is deterministic in (dataset, seed)") {
    auto dataset = rule_dataset(300, 5);
    auto a = train_forest(dataset, paper_params(11));
    auto b = train_forest(dataset, paper_params(11));
    CHECK(model_hash(a) == model_hash(b));

    auto c = train_forest(dataset, paper_params(12));
    CHECK(model_hash(a) != model_hash(c));
}

TEST_CASE("training is invariant to dataset row order") {
    auto dataset = rule_dataset(300, 6);
    auto reference = train_forest(dataset, paper_params(21));

    std::mt19937_64 rng(77);
    std::shuffle(dataset.begin(), dataset.end(), rng);
    auto shuffled = train_forest(dataset, paper_params(21));
    CHECK(model_hash(reference) == model_hash(shuffled));
    CHECK(reference.training_fingerprint == shuffled.training_fingerprint);
}

TEST_CASE("structural audit: depth cap 8 and leaf floor 2 hold everywhere") {
    auto dataset = rule_dataset(2000, 43);
    RandomForestModel model = train_forest(dataset, paper_params(3));
    REQUIRE(model.trees.size() == 100);
    for (const DecisionTree& tree : model.trees) {
        CHECK(tree.max_depth() <= 8);
        CHECK(tree.min_leaf_size() >= 2);
    }
}

TEST_CASE("predict breaks committee ties toward the lower grade") {
    // Two constant trees voting different grades.
    auto leaf_tree = [](int grade) {
        DecisionTree t;
        TreeNode leaf;
        leaf.is_leaf = true;
        leaf.class_counts[grade] = 10;
        t.nodes.push_back(leaf);
        return t;
    };
    RandomForestModel model;
    model.params = paper_params();
    model.params.n_trees = 2;
    model.trees = {leaf_tree(2), leaf_tree(1)};

    FeatureVector fv;
    fv.values = {0.2, 0.2, 0.2, 0.2, 0.2, 10, 10};
    KlAssessment a = predict(model, fv);
    CHECK(a.vote_distribution[1] == doctest::Approx(0.5));
    CHECK(a.vote_distribution[2] == doctest::Approx(0.5));
    CHECK(a.kl_grade == 1);
}

TEST_CASE("model document round-trips exactly") {
    auto dataset = rule_dataset(200, 8);
    RandomForestModel model = train_forest(dataset, paper_params(9));
    std::string doc = save_model(model);
    RandomForestModel back = load_model(doc);
    CHECK(model_hash(model) == model_hash(back));

    // Predictions agree on fresh inputs.
    for (const auto& s : rule_dataset(50, 10))
        CHECK(predict(model, s.features).kl_grade == predict(back, s.features).kl_grade);
}

TEST_CASE("model loader rejects corrupted documents") {
    auto dataset = rule_dataset(100, 12);
    std::string doc = save_model(train_forest(dataset, paper_params()));

    CHECK_THROWS_AS(load_model(doc.substr(0, doc.size() / 2)), Error);

    std::string wrong_version = doc;
    auto pos = wrong_version.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    wrong_version.replace(pos, 11, "\"version\":9");
    CHECK_THROWS_AS(load_model(wrong_version), Error);

    CHECK_THROWS_AS(load_model("{\"format\": \"other\"}"), Error);
}

TEST_CASE("dataset CSV round-trips") {
    auto dataset = rule_dataset(25, 13);
    auto back = parse_dataset_csv(dataset_to_csv(dataset));
    REQUIRE(back.size() == dataset.size());
    CHECK(dataset_fingerprint(back) == dataset_fingerprint(dataset));
    CHECK_THROWS_AS(parse_dataset_csv("1,2,3\n"), Error);
}
