#include "ragcrit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ragcrit/metrics.hpp"

namespace ragcrit {

void TrainParams::validate() const {
    if (num_trees < 1) throw std::invalid_argument("num_trees must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw std::invalid_argument("learning_rate must lie in (0, 1]");
    }
    if (max_leaves < 2) throw std::invalid_argument("max_leaves must be >= 2");
    if (min_samples_leaf < 1) throw std::invalid_argument("min_samples_leaf must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
}

double RegressionTree::evaluate(std::span<const double> x) const {
    std::size_t idx = 0;
    while (true) {
        const auto& node = nodes[idx];
        if (const auto* leaf = std::get_if<LeafNode>(&node)) return leaf->value;
        const auto& split = std::get<SplitNode>(node);
        idx = x[split.feature] <= split.threshold ? split.left : split.right;
    }
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) {
        return std::holds_alternative<LeafNode>(n);
    }));
}

double EstimatorModel::raw_score(std::span<const double> x, std::size_t num_trees) const {
    double s = base_score;
    const auto n = std::min(num_trees, trees.size());
    for (std::size_t t = 0; t < n; ++t) s += learning_rate * trees[t].evaluate(x);
    return s;
}

void validate(const EstimatorModel& model) {
    const auto dim = feature_dimension(model.feature_set);
    if (!std::isfinite(model.base_score)) throw ModelFormatError("base_score must be finite");
    if (!(model.learning_rate > 0.0 && model.learning_rate <= 1.0)) {
        throw ModelFormatError("learning_rate must lie in (0, 1]");
    }
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& nodes = model.trees[t].nodes;
        const auto where = "tree " + std::to_string(t) + ": ";
        if (nodes.empty()) throw ModelFormatError(where + "no nodes");
        std::vector<int> seen(nodes.size(), 0);
        std::vector<std::size_t> stack{0};
        std::size_t visited = 0;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            if (i >= nodes.size()) throw ModelFormatError(where + "child index out of range");
            if (seen[i]++) throw ModelFormatError(where + "node reachable more than once");
            ++visited;
            if (const auto* s = std::get_if<SplitNode>(&nodes[i])) {
                if (s->feature >= dim) throw ModelFormatError(where + "feature index out of range");
                if (!std::isfinite(s->threshold)) throw ModelFormatError(where + "non-finite threshold");
                stack.push_back(s->right);
                stack.push_back(s->left);
            } else if (!std::isfinite(std::get<LeafNode>(nodes[i]).value)) {
                throw ModelFormatError(where + "non-finite leaf value");
            }
        }
        if (visited != nodes.size()) throw ModelFormatError(where + "unreachable nodes");
    }
}

std::vector<TrainingExample> build_dataset(const std::vector<TraceRecord>& records, FeatureSet set,
                                           DatasetBuildStats* stats, bool truncate_labels) {
    std::vector<TrainingExample> out;
    DatasetBuildStats local;
    for (const auto& rec : records) {
        for (const auto& it : rec.episode.iterations) {
            if (it.trace.empty()) {
                ++local.skipped_empty;
                continue;
            }
            out.push_back({features_from_trace(it.trace, set), score_target(rec.sample, it.trace, truncate_labels)});
        }
    }
    if (stats) *stats = local;
    return out;
}

namespace {

// Splits must reduce the squared error by more than this to count as positive gain.
constexpr double kMinGain = 1e-12;

struct SplitCandidate {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left_count = 0;
    bool valid = false;
};

struct Leaf {
    std::size_t begin = 0;
    std::size_t end = 0;
    int depth = 0;
    std::size_t node = 0;
    double sum = 0.0;
    SplitCandidate best;
};

// Column-major copy of the feature matrix with per-feature presorted row orders.
class TreeGrower {
public:
    TreeGrower(const std::vector<TrainingExample>& data, const TrainParams& params)
        : params_(params), rows_(data.size()), dim_(data.front().features.size()) {
        columns_.assign(dim_, std::vector<double>(rows_));
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t f = 0; f < dim_; ++f) columns_[f][r] = data[r].features.values[f];
        }
        sorted_.assign(dim_, std::vector<std::size_t>(rows_));
        for (std::size_t f = 0; f < dim_; ++f) {
            auto& order = sorted_[f];
            std::iota(order.begin(), order.end(), std::size_t{0});
            const auto& col = columns_[f];
            std::stable_sort(order.begin(), order.end(),
                             [&col](std::size_t a, std::size_t b) { return col[a] < col[b]; });
        }
        work_ = sorted_;
        scratch_.resize(rows_);
        goes_left_.resize(rows_);
    }

    /// Grows one tree on `residual` and adds lr * leaf value to `prediction`.
    RegressionTree grow(std::span<const double> residual, std::span<double> prediction, double lr) {
        for (std::size_t f = 0; f < dim_; ++f) std::copy(sorted_[f].begin(), sorted_[f].end(), work_[f].begin());

        RegressionTree tree;
        tree.nodes.emplace_back(LeafNode{});
        std::vector<Leaf> leaves;
        leaves.push_back(make_leaf(0, rows_, 0, 0, residual));

        while (static_cast<int>(leaves.size()) < params_.max_leaves) {
            std::size_t pick = leaves.size();
            double best_gain = kMinGain;
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                if (leaves[i].best.valid && leaves[i].best.gain > best_gain) {
                    best_gain = leaves[i].best.gain;
                    pick = i;
                }
            }
            if (pick == leaves.size()) break;

            const Leaf parent = leaves[pick];
            const auto& split = parent.best;
            partition(parent, split);

            const std::size_t left_node = tree.nodes.size();
            tree.nodes.emplace_back(LeafNode{});
            tree.nodes.emplace_back(LeafNode{});
            tree.nodes[parent.node] = SplitNode{split.feature, split.threshold, left_node, left_node + 1};

            const std::size_t mid = parent.begin + split.left_count;
            // `leaves` stays in creation order so equal gains favor the older leaf.
            leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
            leaves.push_back(make_leaf(parent.begin, mid, parent.depth + 1, left_node, residual));
            leaves.push_back(make_leaf(mid, parent.end, parent.depth + 1, left_node + 1, residual));
        }

        for (const auto& leaf : leaves) {
            const double value = leaf.sum / static_cast<double>(leaf.end - leaf.begin);
            tree.nodes[leaf.node] = LeafNode{value};
            for (std::size_t k = leaf.begin; k < leaf.end; ++k) prediction[work_[0][k]] += lr * value;
        }
        return tree;
    }

private:
    Leaf make_leaf(std::size_t begin, std::size_t end, int depth, std::size_t node,
                   std::span<const double> residual) {
        Leaf leaf{begin, end, depth, node, 0.0, {}};
        for (std::size_t k = begin; k < end; ++k) leaf.sum += residual[work_[0][k]];
        if (depth < params_.max_depth) leaf.best = best_split(leaf, residual);
        return leaf;
    }

    SplitCandidate best_split(const Leaf& leaf, std::span<const double> residual) const {
        SplitCandidate best;
        const std::size_t n = leaf.end - leaf.begin;
        const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
        if (n < 2 * min_leaf) return best;
        const double parent_term = leaf.sum * leaf.sum / static_cast<double>(n);
        for (std::size_t f = 0; f < dim_; ++f) {
            const auto& order = work_[f];
            const auto& col = columns_[f];
            double left_sum = 0.0;
            for (std::size_t k = leaf.begin; k + 1 < leaf.end; ++k) {
                left_sum += residual[order[k]];
                const std::size_t n_left = k - leaf.begin + 1;
                const std::size_t n_right = n - n_left;
                if (n_left < min_leaf) continue;
                if (n_right < min_leaf) break;
                const double lo = col[order[k]];
                const double hi = col[order[k + 1]];
                if (!(lo < hi)) continue;
                const double right_sum = leaf.sum - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                                    right_sum * right_sum / static_cast<double>(n_right) - parent_term;
                if (gain > best.gain) {
                    double threshold = lo + (hi - lo) / 2.0;
                    if (!(threshold < hi)) threshold = lo;
                    best = {gain, f, threshold, n_left, true};
                }
            }
        }
        return best;
    }

    // Stable partition of every feature order inside the parent's range.
    void partition(const Leaf& parent, const SplitCandidate& split) {
        const auto& col = columns_[split.feature];
        for (std::size_t k = parent.begin; k < parent.end; ++k) {
            const auto row = work_[split.feature][k];
            goes_left_[row] = col[row] <= split.threshold ? 1 : 0;
        }
        for (std::size_t f = 0; f < dim_; ++f) {
            auto& order = work_[f];
            std::size_t left = parent.begin;
            std::size_t right = 0;
            for (std::size_t k = parent.begin; k < parent.end; ++k) {
                const auto row = order[k];
                if (goes_left_[row]) {
                    order[left++] = row;
                } else {
                    scratch_[right++] = row;
                }
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(right),
                      order.begin() + static_cast<std::ptrdiff_t>(left));
        }
    }

    const TrainParams& params_;
    std::size_t rows_;
    std::size_t dim_;
    std::vector<std::vector<double>> columns_;
    std::vector<std::vector<std::size_t>> sorted_;
    std::vector<std::vector<std::size_t>> work_;
    std::vector<std::size_t> scratch_;
    std::vector<unsigned char> goes_left_;
};

void check_dataset(const std::vector<TrainingExample>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
    const auto set = dataset.front().features.feature_set;
    const auto dim = feature_dimension(set);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& ex = dataset[i];
        if (ex.features.feature_set != set) {
            throw std::invalid_argument("example " + std::to_string(i) + " has feature set " +
                                        std::string(to_string(ex.features.feature_set)) +
                                        ", expected " + std::string(to_string(set)));
        }
        if (ex.features.values.size() != dim) {
            throw std::invalid_argument("example " + std::to_string(i) + " has wrong dimension");
        }
        for (double v : ex.features.values) {
            if (std::isnan(v)) throw std::invalid_argument("example " + std::to_string(i) + " has a NaN feature");
        }
        if (!(ex.label >= 0.0 && ex.label <= 1.0)) {
            throw std::invalid_argument("example " + std::to_string(i) + " has label outside [0, 1]");
        }
    }
}

}  // namespace

EstimatorModel train(const std::vector<TrainingExample>& dataset, const TrainParams& params) {
    params.validate();
    check_dataset(dataset);

    EstimatorModel model;
    model.feature_set = dataset.front().features.feature_set;
    model.learning_rate = params.learning_rate;
    // Running mean: exact when every label is identical.
    double mean = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        mean += (dataset[i].label - mean) / static_cast<double>(i + 1);
    }
    model.base_score = mean;

    std::vector<double> prediction(dataset.size(), mean);
    std::vector<double> residual(dataset.size());
    TreeGrower grower(dataset, params);
    model.trees.reserve(static_cast<std::size_t>(params.num_trees));
    for (int t = 0; t < params.num_trees; ++t) {
        for (std::size_t i = 0; i < dataset.size(); ++i) residual[i] = dataset[i].label - prediction[i];
        model.trees.push_back(grower.grow(residual, prediction, params.learning_rate));
    }
    return model;
}

double predict(const EstimatorModel& model, const FeatureVector& z) {
    if (z.feature_set != model.feature_set) {
        throw std::invalid_argument("feature set " + std::string(to_string(z.feature_set)) +
                                    " does not match model feature set " +
                                    std::string(to_string(model.feature_set)));
    }
    if (z.values.size() != feature_dimension(model.feature_set)) {
        throw std::invalid_argument("feature vector has dimension " + std::to_string(z.values.size()) +
                                    ", model expects " +
                                    std::to_string(feature_dimension(model.feature_set)));
    }
    return std::clamp(model.raw_score(z.values, model.trees.size()), 0.0, 1.0);
}

double evaluate(const EstimatorModel& model, const std::vector<TrainingExample>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("evaluation dataset is empty");
    long double sse = 0.0L;
    for (const auto& ex : dataset) {
        const double d = predict(model, ex.features) - ex.label;
        sse += static_cast<long double>(d) * d;
    }
    return static_cast<double>(sse / static_cast<long double>(dataset.size()));
}

std::vector<double> staged_mse(const EstimatorModel& model, const std::vector<TrainingExample>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("evaluation dataset is empty");
    std::vector<double> raw(dataset.size(), model.base_score);
    std::vector<double> out;
    out.reserve(model.trees.size() + 1);
    auto mse = [&] {
        long double sse = 0.0L;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const double d = raw[i] - dataset[i].label;
            sse += static_cast<long double>(d) * d;
        }
        return static_cast<double>(sse / static_cast<long double>(dataset.size()));
    };
    out.push_back(mse());
    for (const auto& tree : model.trees) {
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            raw[i] += model.learning_rate * tree.evaluate(dataset[i].features.values);
        }
        out.push_back(mse());
    }
    return out;
}

// ---- serialization ----

using nlohmann::json;

std::string model_to_json(const EstimatorModel& model) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["feature_set"] = std::string(to_string(model.feature_set));
    j["base_score"] = model.base_score;
    j["learning_rate"] = model.learning_rate;
    json trees = json::array();
    for (const auto& tree : model.trees) {
        json nodes = json::array();
        for (const auto& node : tree.nodes) {
            if (const auto* s = std::get_if<SplitNode>(&node)) {
                nodes.push_back({{"feature", s->feature},
                                 {"threshold", s->threshold},
                                 {"left", s->left},
                                 {"right", s->right}});
            } else {
                nodes.push_back({{"value", std::get<LeafNode>(node).value}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    j["trees"] = std::move(trees);
    return j.dump() + "\n";
}

namespace {

double number_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) {
        throw ModelFormatError(std::string("missing or non-numeric \"") + key + "\"");
    }
    return it->get<double>();
}

std::size_t index_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_unsigned()) {
        throw ModelFormatError(std::string("missing or invalid \"") + key + "\"");
    }
    return it->get<std::size_t>();
}

}  // namespace

EstimatorModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelFormatError(std::string("model parse error: ") + e.what());
    }
    if (!j.is_object()) throw ModelFormatError("model must be a JSON object");
    auto ver = j.find("format_version");
    if (ver == j.end() || !ver->is_number_integer()) throw ModelFormatError("missing \"format_version\"");
    if (ver->get<int>() != kModelFormatVersion) {
        throw ModelFormatError("unsupported model format_version " + std::to_string(ver->get<int>()) +
                               " (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    EstimatorModel model;
    auto fs = j.find("feature_set");
    if (fs == j.end() || !fs->is_string()) throw ModelFormatError("missing \"feature_set\"");
    auto set = parse_feature_set(fs->get<std::string>());
    if (!set) throw ModelFormatError("unknown feature_set \"" + fs->get<std::string>() + "\"");
    model.feature_set = *set;
    model.base_score = number_field(j, "base_score");
    model.learning_rate = number_field(j, "learning_rate");
    auto trees = j.find("trees");
    if (trees == j.end() || !trees->is_array()) throw ModelFormatError("missing \"trees\" array");
    for (const auto& t : *trees) {
        if (!t.is_object() || !t.contains("nodes") || !t["nodes"].is_array()) {
            throw ModelFormatError("tree without \"nodes\" array");
        }
        RegressionTree tree;
        for (const auto& n : t["nodes"]) {
            if (!n.is_object()) throw ModelFormatError("tree node must be an object");
            if (n.contains("value")) {
                tree.nodes.emplace_back(LeafNode{number_field(n, "value")});
            } else {
                tree.nodes.emplace_back(SplitNode{index_field(n, "feature"), number_field(n, "threshold"),
                                                  index_field(n, "left"), index_field(n, "right")});
            }
        }
        model.trees.push_back(std::move(tree));
    }
    validate(model);
    return model;
}

void save_model(const EstimatorModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, model_to_json(model));
}

EstimatorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

ModelScorer::ModelScorer(EstimatorModel model) : model_(std::move(model)) { validate(model_); }

double ModelScorer::score(const CompletionSample&, const PredictionTrace& trace) const {
    return predict(model_, features_from_trace(trace, model_.feature_set));
}

double OracleScorer::score(const CompletionSample& sample, const PredictionTrace& trace) const {
    return score_target(sample, trace, truncate_);
}

}  // namespace ragcrit
