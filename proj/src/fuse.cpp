#include "koa/fuse.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace koa {

using nlohmann::json;

namespace {
constexpr int kFeatureCount = 7;
constexpr int kModelVersion = 1;
} // namespace

FeatureVector assemble_features(const ProbabilityVector& p, const JsdMeasurement& jsd) {
    FeatureVector fv;
    for (int i = 0; i < 5; ++i)
        fv.values[i] = p.p[i];
    fv.values[5] = jsd.med_px;
    fv.values[6] = jsd.lat_px;
    validate_features(fv);
    return fv;
}

void validate_features(const FeatureVector& fv) {
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
        require(std::isfinite(fv.values[i]) && fv.values[i] >= 0.0,
                ErrorCode::invalid_argument, "probability features must be non-negative");
        sum += fv.values[i];
    }
    require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::invalid_argument,
            "probability features must sum to 1");
    require(fv.values[5] >= 0.0 && fv.values[6] >= 0.0, ErrorCode::invalid_argument,
            "joint space distances must be non-negative");
}

void validate_params(const ForestParams& params) {
    require(params.n_trees > 0, ErrorCode::invalid_argument, "n_trees must be positive");
    require(params.max_depth > 0, ErrorCode::invalid_argument, "max_depth must be positive");
    require(params.min_leaf > 0, ErrorCode::invalid_argument, "min_leaf must be positive");
    require(params.features_per_split > 0 && params.features_per_split <= kFeatureCount,
            ErrorCode::invalid_argument, "features_per_split must be in 1..7");
}

// ---- tree construction --------------------------------------------------------

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t tree_seed(uint64_t master_seed, int tree_index) {
    return splitmix64(master_seed ^ splitmix64(static_cast<uint64_t>(tree_index) + 1));
}

double gini(const std::array<long, 5>& counts, long total) {
    double g = 1.0;
    for (long c : counts) {
        double p = static_cast<double>(c) / total;
        g -= p * p;
    }
    return g;
}

struct TreeBuilder {
    const std::vector<TrainingSample>& data;
    const ForestParams& params;
    std::mt19937_64 rng;
    std::vector<TreeNode> nodes;

    TreeNode make_leaf(const std::vector<int>& indices) const {
        TreeNode leaf;
        leaf.is_leaf = true;
        for (int i : indices)
            ++leaf.class_counts[data[i].label];
        return leaf;
    }

    // Best Gini split over `feature` for this node; candidate thresholds are
    // midpoints between consecutive distinct values.
    struct Split {
        double cost = std::numeric_limits<double>::infinity();
        double threshold = 0.0;
        bool valid = false;
    };

    Split best_split_on(const std::vector<int>& indices, int feature) const {
        std::vector<std::pair<double, int>> ordered;
        ordered.reserve(indices.size());
        for (int i : indices)
            ordered.emplace_back(data[i].features.values[feature], data[i].label);
        std::sort(ordered.begin(), ordered.end());

        long total = static_cast<long>(ordered.size());
        std::array<long, 5> left_counts{}, right_counts{};
        for (auto& [v, label] : ordered)
            ++right_counts[label];

        Split best;
        long left_n = 0;
        for (size_t i = 0; i + 1 < ordered.size(); ++i) {
            ++left_counts[ordered[i].second];
            --right_counts[ordered[i].second];
            ++left_n;
            if (ordered[i].first == ordered[i + 1].first)
                continue;
            long right_n = total - left_n;
            if (left_n < params.min_leaf || right_n < params.min_leaf)
                continue;
            double cost = (left_n * gini(left_counts, left_n) +
                           right_n * gini(right_counts, right_n)) /
                          total;
            if (cost < best.cost) {
                best.cost = cost;
                best.threshold = 0.5 * (ordered[i].first + ordered[i + 1].first);
                best.valid = true;
            }
        }
        return best;
    }

    int build(std::vector<int> indices, int depth) {
        bool pure = true;
        for (size_t i = 1; i < indices.size() && pure; ++i)
            pure = data[indices[i]].label == data[indices[0]].label;

        if (pure || depth >= params.max_depth ||
            static_cast<int>(indices.size()) < 2 * params.min_leaf) {
            nodes.push_back(make_leaf(indices));
            return static_cast<int>(nodes.size()) - 1;
        }

        // Sample features_per_split distinct features for this node.
        std::array<int, kFeatureCount> features{0, 1, 2, 3, 4, 5, 6};
        for (int i = 0; i < params.features_per_split; ++i) {
            std::uniform_int_distribution<int> pick(i, kFeatureCount - 1);
            std::swap(features[i], features[pick(rng)]);
        }

        int best_feature = -1;
        Split best;
        for (int i = 0; i < params.features_per_split; ++i) {
            Split s = best_split_on(indices, features[i]);
            if (s.valid && s.cost < best.cost) {
                best = s;
                best_feature = features[i];
            }
        }
        if (best_feature < 0) {
            nodes.push_back(make_leaf(indices));
            return static_cast<int>(nodes.size()) - 1;
        }

        std::vector<int> left, right;
        for (int i : indices) {
            if (data[i].features.values[best_feature] < best.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }

        int index = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[index].is_leaf = false;
        nodes[index].feature = best_feature;
        nodes[index].threshold = best.threshold;
        int l = build(std::move(left), depth + 1);
        int r = build(std::move(right), depth + 1);
        nodes[index].left = l;
        nodes[index].right = r;
        return index;
    }
};

int leaf_vote(const TreeNode& leaf) {
    int best = 0;
    for (int k = 1; k < 5; ++k)
        if (leaf.class_counts[k] > leaf.class_counts[best])
            best = k; // ties keep the lower grade
    return best;
}

} // namespace

int DecisionTree::vote(const FeatureVector& fv) const {
    int i = 0;
    while (!nodes[i].is_leaf)
        i = fv.values[nodes[i].feature] < nodes[i].threshold ? nodes[i].left
                                                             : nodes[i].right;
    return leaf_vote(nodes[i]);
}

int DecisionTree::max_depth() const {
    int deepest = 0;
    // Depth-first walk; node 0 is the root at depth 0.
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, depth] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, depth);
        if (!nodes[i].is_leaf) {
            stack.push_back({nodes[i].left, depth + 1});
            stack.push_back({nodes[i].right, depth + 1});
        }
    }
    return deepest;
}

int DecisionTree::min_leaf_size() const {
    int smallest = std::numeric_limits<int>::max();
    for (const TreeNode& node : nodes) {
        if (!node.is_leaf)
            continue;
        int n = 0;
        for (int c : node.class_counts)
            n += c;
        smallest = std::min(smallest, n);
    }
    return smallest;
}

std::string dataset_fingerprint(const std::vector<TrainingSample>& dataset) {
    std::vector<TrainingSample> sorted = dataset;
    std::sort(sorted.begin(), sorted.end(),
              [](const TrainingSample& a, const TrainingSample& b) {
                  if (a.features.values != b.features.values)
                      return a.features.values < b.features.values;
                  return a.label < b.label;
              });
    Fnv1a64 hash;
    for (const TrainingSample& s : sorted) {
        for (double v : s.features.values)
            hash.update(v);
        hash.update(static_cast<uint64_t>(s.label));
    }
    return hash.hex();
}

RandomForestModel train_forest(std::vector<TrainingSample> dataset,
                               const ForestParams& params) {
    validate_params(params);
    require(dataset.size() >= 10, ErrorCode::degenerate_data,
            "training needs at least 10 samples");
    for (const TrainingSample& s : dataset) {
        validate_features(s.features);
        require(s.label >= 0 && s.label <= 4, ErrorCode::invalid_argument,
                "KL labels must be 0..4");
    }

    // Canonical row order makes training independent of input order and keys
    // the bootstrap draws to sample identity rather than row position.
    std::sort(dataset.begin(), dataset.end(),
              [](const TrainingSample& a, const TrainingSample& b) {
                  if (a.features.values != b.features.values)
                      return a.features.values < b.features.values;
                  return a.label < b.label;
              });

    RandomForestModel model;
    model.params = params;
    model.training_fingerprint = dataset_fingerprint(dataset);
    model.trees.reserve(params.n_trees);

    size_t n = dataset.size();
    for (int t = 0; t < params.n_trees; ++t) {
        TreeBuilder builder{dataset, params, std::mt19937_64(tree_seed(params.master_seed, t)), {}};
        std::vector<int> bootstrap(n);
        std::uniform_int_distribution<size_t> draw(0, n - 1);
        for (size_t i = 0; i < n; ++i)
            bootstrap[i] = static_cast<int>(draw(builder.rng));
        builder.build(std::move(bootstrap), 0);
        model.trees.push_back(DecisionTree{std::move(builder.nodes)});
    }
    return model;
}

KlAssessment predict(const RandomForestModel& model, const FeatureVector& fv) {
    require(!model.trees.empty(), ErrorCode::invalid_argument, "model has no trees");
    validate_features(fv);

    std::array<int, 5> votes{};
    for (const DecisionTree& tree : model.trees)
        ++votes[tree.vote(fv)];

    KlAssessment out;
    out.inputs = fv;
    int best = 0;
    for (int k = 0; k < 5; ++k) {
        out.vote_distribution[k] =
            static_cast<double>(votes[k]) / static_cast<double>(model.trees.size());
        if (votes[k] > votes[best])
            best = k; // ties keep the lower grade
    }
    out.kl_grade = best;
    return out;
}

// ---- persistence ---------------------------------------------------------------

std::string save_model(const RandomForestModel& model) {
    json doc;
    doc["format"] = "koa-forest";
    doc["version"] = kModelVersion;
    doc["params"] = {{"n_trees", model.params.n_trees},
                     {"max_depth", model.params.max_depth},
                     {"min_leaf", model.params.min_leaf},
                     {"features_per_split", model.params.features_per_split},
                     {"master_seed", model.params.master_seed}};
    doc["jsd_units"] = "px@0.2mm";
    doc["training_fingerprint"] = model.training_fingerprint;
    json trees = json::array();
    for (const DecisionTree& tree : model.trees) {
        json nodes = json::array();
        for (const TreeNode& node : tree.nodes) {
            if (node.is_leaf) {
                nodes.push_back({{"counts", node.class_counts}});
            } else {
                nodes.push_back({{"f", node.feature},
                                 {"t", node.threshold},
                                 {"l", node.left},
                                 {"r", node.right}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    doc["trees"] = std::move(trees);
    return doc.dump() + "\n";
}

RandomForestModel load_model(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad model document: ") + e.what());
    }
    require(doc.value("format", "") == "koa-forest", ErrorCode::parse,
            "not a forest model document");
    require(doc.value("version", -1) == kModelVersion, ErrorCode::version_mismatch,
            "unsupported model version");

    RandomForestModel model;
    try {
        const auto& p = doc.at("params");
        model.params.n_trees = p.at("n_trees").get<int>();
        model.params.max_depth = p.at("max_depth").get<int>();
        model.params.min_leaf = p.at("min_leaf").get<int>();
        model.params.features_per_split = p.at("features_per_split").get<int>();
        model.params.master_seed = p.at("master_seed").get<uint64_t>();
        model.training_fingerprint = doc.at("training_fingerprint").get<std::string>();
        for (const auto& tree_doc : doc.at("trees")) {
            DecisionTree tree;
            for (const auto& node_doc : tree_doc.at("nodes")) {
                TreeNode node;
                if (node_doc.contains("counts")) {
                    node.is_leaf = true;
                    const auto& counts = node_doc.at("counts");
                    require(counts.size() == 5, ErrorCode::parse, "leaf needs 5 counts");
                    for (int k = 0; k < 5; ++k)
                        node.class_counts[k] = counts.at(k).get<int>();
                } else {
                    node.is_leaf = false;
                    node.feature = node_doc.at("f").get<int>();
                    node.threshold = node_doc.at("t").get<double>();
                    node.left = node_doc.at("l").get<int>();
                    node.right = node_doc.at("r").get<int>();
                    require(node.feature >= 0 && node.feature < kFeatureCount,
                            ErrorCode::parse, "split feature out of range");
                }
                tree.nodes.push_back(node);
            }
            require(!tree.nodes.empty(), ErrorCode::parse, "tree without nodes");
            for (const TreeNode& node : tree.nodes)
                if (!node.is_leaf) {
                    int size = static_cast<int>(tree.nodes.size());
                    require(node.left >= 0 && node.left < size && node.right >= 0 &&
                                node.right < size,
                            ErrorCode::parse, "corrupted node array");
                }
            model.trees.push_back(std::move(tree));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("corrupted model document: ") + e.what());
    }
    require(static_cast<int>(model.trees.size()) == model.params.n_trees,
            ErrorCode::parse, "tree count disagrees with params");
    validate_params(model.params);
    return model;
}

std::string model_hash(const RandomForestModel& model) {
    Fnv1a64 hash;
    hash.update(save_model(model));
    return hash.hex();
}

std::vector<TrainingSample> parse_dataset_csv(const std::string& text) {
    std::vector<TrainingSample> out;
    for (const std::string& line : split_lines(text)) {
        if (line.rfind("#", 0) == 0)
            continue;
        auto fields = split_csv_line(line);
        if (out.empty() && !fields.empty() && fields[0].find_first_of("0123456789.-") != 0)
            continue; // header row
        require(fields.size() == 8, ErrorCode::parse,
                "dataset rows need 7 features and a label");
        TrainingSample s;
        try {
            for (int i = 0; i < 7; ++i)
                s.features.values[i] = std::stod(fields[i]);
            s.label = std::stoi(fields[7]);
        } catch (const std::exception&) {
            fail(ErrorCode::parse, "unparseable dataset row: " + line);
        }
        out.push_back(s);
    }
    require(!out.empty(), ErrorCode::parse, "empty dataset");
    return out;
}

std::string dataset_to_csv(const std::vector<TrainingSample>& dataset) {
    std::ostringstream out;
    out.precision(17);
    for (const TrainingSample& s : dataset) {
        for (double v : s.features.values)
            out << v << ",";
        out << s.label << "\n";
    }
    return out.str();
}

} // namespace koa
