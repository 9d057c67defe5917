#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragcrit/trace.hpp"

namespace ragcrit {

/// Which statistics enter the feature vector. Prob and Entropy are the
/// single-signal ablations; both keep the length entry last.
enum class FeatureSet { Full, ProbOnly, EntropyOnly };

std::string_view to_string(FeatureSet set) noexcept;
/// Accepts "full", "prob", "entropy".
std::optional<FeatureSet> parse_feature_set(std::string_view name) noexcept;
std::size_t feature_dimension(FeatureSet set) noexcept;

/// Column order of the full vector.
namespace feature_index {
inline constexpr std::size_t kProbMax = 0;
inline constexpr std::size_t kProbMin = 1;
inline constexpr std::size_t kProbAvg = 2;
inline constexpr std::size_t kProbStd = 3;
inline constexpr std::size_t kProbProd = 4;
inline constexpr std::size_t kProbGeo = 5;
inline constexpr std::size_t kEntMax = 6;
inline constexpr std::size_t kEntMin = 7;
inline constexpr std::size_t kEntAvg = 8;
inline constexpr std::size_t kEntStd = 9;
inline constexpr std::size_t kEntProd = 10;
inline constexpr std::size_t kEntGeo = 11;
inline constexpr std::size_t kLen = 12;
}  // namespace feature_index

struct FeatureVector {
    std::vector<double> values;
    FeatureSet feature_set = FeatureSet::Full;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }

    bool operator==(const FeatureVector&) const = default;
};

/// Six order-free statistics of one sequence: max, min, mean, population std,
/// product and geometric mean (the last two evaluated in log space).
struct SequenceStats {
    double max = 0.0;
    double min = 0.0;
    double avg = 0.0;
    double std = 0.0;
    double prod = 0.0;
    double geo = 0.0;
};

/// Throws std::invalid_argument on an empty or negative input.
SequenceStats summarize(std::span<const double> xs);

/// Softmax probability of `chosen` with max-subtraction.
double softmax_probability(std::span<const double> logits, std::size_t chosen);

/// Shannon entropy of softmax(logits), in nats.
double step_entropy(std::span<const double> logits);

/// Reduces per-step probabilities and entropies to a feature vector.
/// Throws std::invalid_argument when N = 0, lengths differ, or values are out of range.
FeatureVector extract_features(std::span<const double> probs, std::span<const double> entropies,
                               FeatureSet set = FeatureSet::Full);

/// Per-step (chosen probability, entropy) of a trace in either step form.
void step_signals(const PredictionTrace& trace, std::vector<double>& probs,
                  std::vector<double>& entropies);

FeatureVector features_from_trace(const PredictionTrace& trace, FeatureSet set = FeatureSet::Full);

}  // namespace ragcrit
