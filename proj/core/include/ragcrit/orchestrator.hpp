#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ragcrit/estimator.hpp"
#include "ragcrit/policy.hpp"
#include "ragcrit/trace.hpp"

namespace ragcrit {

struct RetrievedSnippet {
    std::string id;
    std::string text;
    double similarity = 0.0;
};

/// One generation call. `sample_id` and `iteration` identify the call for
/// simulators and replay; a real generator only needs prompt and snippets.
struct GenerationRequest {
    std::string_view sample_id;
    std::string_view prompt;
    const std::vector<RetrievedSnippet>* snippets = nullptr;
    int iteration = 0;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual PredictionTrace complete(const GenerationRequest& request) const = 0;
    virtual bool concurrent_safe() const { return true; }
};

class Retriever {
public:
    virtual ~Retriever() = default;
    /// At most k results in descending similarity.
    virtual std::vector<RetrievedSnippet> retrieve(std::string_view query, std::string_view corpus_ref,
                                                   std::size_t k) const = 0;
    virtual bool concurrent_safe() const { return true; }
};

/// Retriever with nothing to retrieve; used when snippets are implicit (replay).
class EmptyRetriever final : public Retriever {
public:
    std::vector<RetrievedSnippet> retrieve(std::string_view, std::string_view, std::size_t) const override {
        return {};
    }
};

enum class RagMode { Single, Iterative };

/// t_rag value that forces a retrieval regardless of the score.
inline constexpr double kAlwaysRetrieve = 2.0;

struct RunConfig {
    int max_iter = 4;
    ThresholdSchedule schedule = ThresholdSchedule::line_level();
    RagMode mode = RagMode::Single;
    bool enable_adaptive = true;
    bool enable_select = true;
    std::size_t top_k = 10;
    int query_window_lines = 20;
    std::size_t snippet_char_budget = 16000;
    bool exclude_zero_shot_from_select = false;
    /// Cut predictions to the ground truth's line count before EM/ES reporting.
    bool truncate_for_metrics = true;

    void validate() const;
};

struct EpisodeResult {
    EpisodeRecord episode;
    std::vector<double> scores;
    int retrieval_count = 0;
    std::size_t chosen_index = 0;
    std::string chosen_text;
};

class EpisodeError : public std::runtime_error {
public:
    EpisodeError(std::string sample_id, const std::string& what)
        : std::runtime_error("sample " + sample_id + ": " + what), sample_id_(std::move(sample_id)) {}
    const std::string& sample_id() const noexcept { return sample_id_; }

private:
    std::string sample_id_;
};

/// Tail of the in-file context, followed by the previous prediction if any.
std::string build_query(std::string_view prompt, const std::optional<std::string>& previous_prediction,
                        int window_lines);

/// Keeps snippets in order while their total text fits in `char_budget`.
std::vector<RetrievedSnippet> apply_snippet_budget(std::vector<RetrievedSnippet> snippets,
                                                   std::size_t char_budget);

/// Flat prompt: snippets (already ordered by similarity) prepended to the context.
std::string assemble_prompt(std::string_view prompt, const std::vector<RetrievedSnippet>& snippets);

/// The generate / score / decide loop for one sample followed by the final pick.
EpisodeResult run_episode(const CompletionSample& sample, const Generator& generator,
                          const Retriever& retriever, const Scorer& scorer, const RunConfig& config);

/// The same episode as if it had been run with max_iter = budget.
EpisodeResult truncate_episode(const EpisodeResult& full, int budget, const RunConfig& config);

inline constexpr std::size_t kHistogramBuckets = 10;

/// Per-sample view of one benchmark run.
struct SampleBreakdown {
    std::string id;
    std::optional<std::string> error;
    double zero_shot_es = 0.0;
    std::vector<double> card_es;
    std::vector<int> card_retrievals;
    /// Best true ES among the iterations the CARD arm generated within each budget.
    std::vector<double> card_max_es;
    std::vector<double> baseline_es;
};

struct BenchmarkReport {
    std::vector<int> budgets;
    std::vector<double> card_em, card_es, card_aart;
    std::vector<double> baseline_em, baseline_es;
    double zero_shot_em = 0.0;
    double zero_shot_es = 0.0;
    std::map<std::string, std::array<double, kHistogramBuckets>> es_histogram;
    std::map<std::string, double> degeneration_rate;
    int failures = 0;
    std::vector<SampleBreakdown> samples;
};

/// Runs the critiqued arm and the always-retrieve baseline for every budget.
/// Samples are processed on `workers` threads; the report does not depend on
/// the worker count.
BenchmarkReport run_benchmark(const std::vector<CompletionSample>& samples, const Generator& generator,
                              const Retriever& retriever, const Scorer& scorer, const RunConfig& config,
                              const std::vector<int>& budgets, unsigned workers = 1);

/// Fraction of values in [k/10, (k+1)/10), the top bucket closed at 1.
std::array<double, kHistogramBuckets> es_histogram(const std::vector<double>& es);

std::string report_to_json(const BenchmarkReport& report);
/// Human-readable comparison table: zero-shot, RG_i and the critiqued arm.
std::string format_report_table(const BenchmarkReport& report);

}  // namespace ragcrit
