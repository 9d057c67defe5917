#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ragcrit {

/// Per-iteration retrieval and acceptance thresholds.
///
/// `t_rag[i]` gates the retrieval that would follow generation i; values
/// above 1 mean "always retrieve". `t_acc[j]` is consulted when an earlier
/// generation j is compared against a later one.
struct ThresholdSchedule {
    std::vector<double> t_rag;
    std::vector<double> t_acc;
    double epsilon = 1e-8;

    /// Throws std::invalid_argument unless both sequences are nonempty, every
    /// t_acc entry is positive and epsilon is nonnegative.
    void validate() const;

    static ThresholdSchedule line_level();
    static ThresholdSchedule function_level();
    /// Same value at every one of `length` iterations.
    static ThresholdSchedule uniform(std::size_t length, double t_rag, double t_acc, double epsilon = 1e-8);
};

/// Retrieve (again) iff the predicted score is below the threshold.
constexpr bool is_retrieve(double s_hat, double t_rag) noexcept { return s_hat < t_rag; }

/// True keeps the earlier prediction: s_later / (s_earlier + epsilon) < t_acc.
constexpr bool select(double s_earlier, double s_later, double t_acc, double epsilon) noexcept {
    return s_later / (s_earlier + epsilon) < t_acc;
}

/// Final pick over scores[first..]. For each i, scan j = i-1 down to `first`
/// and inherit the pick of the first j for which select(scores[j], scores[i],
/// t_acc[j]) holds; returns the pick of the last index. t_acc must cover
/// every predecessor index.
std::size_t resolve_best(std::span<const double> scores, std::span<const double> t_acc, double epsilon,
                         std::size_t first = 0);

std::size_t resolve_best(std::span<const double> scores, const ThresholdSchedule& schedule,
                         std::size_t first = 0);

}  // namespace ragcrit
