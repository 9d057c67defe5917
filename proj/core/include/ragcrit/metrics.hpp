#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "ragcrit/trace.hpp"

namespace ragcrit {

/// Decodes UTF-8 into Unicode scalar values. Each invalid byte decodes to U+FFFD.
std::u32string decode_utf8(std::string_view s);

/// Character-level edit distance over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

/// 1 - Lev(y, y_hat) / max(|y|, |y_hat|), lengths in code points; two empty
/// strings score 1. Raw strings, no normalization.
double edit_similarity(std::string_view y, std::string_view y_hat);

/// Strips trailing whitespace on every line and drops trailing empty lines.
std::string normalize_for_match(std::string_view s);

bool exact_match(std::string_view y, std::string_view y_hat);

/// Keeps at most the first `max_lines` lines of `s`.
std::string truncate_lines(std::string_view s, std::size_t max_lines);

std::size_t count_lines(std::string_view s);

struct MetricValue {
    double es = 0.0;
    bool em = false;
};

/// Benchmark metrics. With `truncate` the prediction is first cut to the
/// ground truth's line count.
MetricValue evaluate_prediction(std::string_view ground_truth, std::string_view prediction,
                                bool truncate = false);

/// Regression label for a trace: ES between ground truth and trace text.
double score_target(const CompletionSample& sample, const PredictionTrace& trace,
                    bool truncate = false);

}  // namespace ragcrit
