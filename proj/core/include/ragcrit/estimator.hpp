#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ragcrit/features.hpp"
#include "ragcrit/trace.hpp"

namespace ragcrit {

struct TrainingExample {
    FeatureVector features;
    double label = 0.0;
};

struct TrainParams {
    int num_trees = 100;
    double learning_rate = 0.1;
    int max_leaves = 31;
    int min_samples_leaf = 20;
    int max_depth = 16;
    /// Unused: training has no stochastic component.
    int seed = 0;

    void validate() const;
};

struct SplitNode {
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;

    bool operator==(const SplitNode&) const = default;
};

struct LeafNode {
    double value = 0.0;

    bool operator==(const LeafNode&) const = default;
};

using TreeNode = std::variant<SplitNode, LeafNode>;

/// Binary regression tree; node 0 is the root. A row goes left iff
/// x[feature] <= threshold.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double evaluate(std::span<const double> x) const;
    std::size_t leaf_count() const;

    bool operator==(const RegressionTree&) const = default;
};

struct EstimatorModel {
    double base_score = 0.0;
    double learning_rate = 0.1;
    FeatureSet feature_set = FeatureSet::Full;
    std::vector<RegressionTree> trees;

    /// Unclamped base + lr * sum of the first `num_trees` trees' outputs.
    double raw_score(std::span<const double> x, std::size_t num_trees) const;

    bool operator==(const EstimatorModel&) const = default;
};

/// Structural checks: node indices in range, each node reachable once from
/// the root, feature indices below the model's dimension.
void validate(const EstimatorModel& model);

struct DatasetBuildStats {
    std::size_t skipped_empty = 0;
};

/// One example per iteration of every record; empty generations are skipped
/// and counted.
std::vector<TrainingExample> build_dataset(const std::vector<TraceRecord>& records, FeatureSet set,
                                           DatasetBuildStats* stats = nullptr,
                                           bool truncate_labels = false);

/// Least-squares gradient boosting with leaf-wise exact-greedy trees.
/// Deterministic. Throws std::invalid_argument on an empty dataset, labels
/// outside [0, 1], or mixed feature sets.
EstimatorModel train(const std::vector<TrainingExample>& dataset, const TrainParams& params = {});

/// Prediction clamped into [0, 1]. Throws std::invalid_argument on a feature
/// set or dimension mismatch.
double predict(const EstimatorModel& model, const FeatureVector& z);

/// Mean squared error of the clamped predictions.
double evaluate(const EstimatorModel& model, const std::vector<TrainingExample>& dataset);

/// Training-set MSE after each prefix of 0..num_trees trees (index 0 is the
/// base score alone).
std::vector<double> staged_mse(const EstimatorModel& model,
                               const std::vector<TrainingExample>& dataset);

class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const EstimatorModel& model);
EstimatorModel model_from_json(const std::string& text);
void save_model(const EstimatorModel& model, const std::filesystem::path& path);
EstimatorModel load_model(const std::filesystem::path& path);

/// Source of predicted quality scores. Implementations that cannot be called
/// from several threads at once return false from concurrent_safe().
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const CompletionSample& sample, const PredictionTrace& trace) const = 0;
    virtual bool concurrent_safe() const { return true; }
};

/// Scores traces with a trained model. Never looks at the ground truth.
class ModelScorer final : public Scorer {
public:
    explicit ModelScorer(EstimatorModel model);
    double score(const CompletionSample& sample, const PredictionTrace& trace) const override;
    const EstimatorModel& model() const noexcept { return model_; }

private:
    EstimatorModel model_;
};

/// Test double returning the true edit similarity.
class OracleScorer final : public Scorer {
public:
    explicit OracleScorer(bool truncate = false) : truncate_(truncate) {}
    double score(const CompletionSample& sample, const PredictionTrace& trace) const override;

private:
    bool truncate_;
};

class ConstantScorer final : public Scorer {
public:
    explicit ConstantScorer(double value) : value_(value) {}
    double score(const CompletionSample&, const PredictionTrace&) const override { return value_; }

private:
    double value_;
};

}  // namespace ragcrit
