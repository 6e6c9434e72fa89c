#pragma once

#include "koa/classify.hpp"
#include "koa/jsd.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace koa {

/// The fused 7x1 input: five KL-grade probabilities followed by the medial
/// and lateral joint-space distances in pixels.
struct FeatureVector {
    std::array<double, 7> values{};
};

FeatureVector assemble_features(const ProbabilityVector& p, const JsdMeasurement& jsd);
void validate_features(const FeatureVector& fv);

struct ForestParams {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    int features_per_split = 2;
    uint64_t master_seed = 0;
};

void validate_params(const ForestParams& params);

/// Flattened decision tree: internal nodes split on feature < threshold
/// (left) vs >= threshold (right); leaves keep the class counts of the
/// bootstrap samples that reached them.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<int, 5> class_counts{};
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // node 0 is the root

    int vote(const FeatureVector& fv) const;
    int max_depth() const;
    int min_leaf_size() const;
};

struct RandomForestModel {
    ForestParams params;
    std::vector<DecisionTree> trees;
    std::string training_fingerprint; // content hash of the training set
};

struct TrainingSample {
    FeatureVector features;
    int label = 0; // KL grade 0..4
};

/// Trains the bagged committee: each tree fits a bootstrap resample drawn
/// from a seed derived from (master_seed, tree index); splits minimize Gini
/// impurity over features_per_split features sampled per node. Rows are
/// canonicalized by sorting, so training is invariant to input order.
RandomForestModel train_forest(std::vector<TrainingSample> dataset,
                               const ForestParams& params);

/// Final assessment: committee vote distribution and the KL grade
/// (argmax, ties toward the lower grade).
struct KlAssessment {
    int kl_grade = 0;
    std::array<double, 5> vote_distribution{};
    FeatureVector inputs;
    JsnGrades jsn;
    std::string provenance;
};

KlAssessment predict(const RandomForestModel& model, const FeatureVector& fv);

/// Versioned JSON model document; load(save(m)) predicts identically to m.
std::string save_model(const RandomForestModel& model);
RandomForestModel load_model(const std::string& json_text);

/// Hash of the serialized model; equal hashes mean identical models.
std::string model_hash(const RandomForestModel& model);

/// Content hash of a training set, independent of row order.
std::string dataset_fingerprint(const std::vector<TrainingSample>& dataset);

/// Delimited-text dataset rows: 7 features then the integer label.
std::vector<TrainingSample> parse_dataset_csv(const std::string& text);
std::string dataset_to_csv(const std::vector<TrainingSample>& dataset);

} // namespace koa
