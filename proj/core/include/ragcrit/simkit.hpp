#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragcrit/orchestrator.hpp"
#include "ragcrit/trace.hpp"

namespace ragcrit {

// ---- deterministic randomness ----

/// splitmix64-seeded xoshiro256** with hand-rolled distributions, so
/// simulated data is identical across standard libraries.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal(double mean, double sigma);
    /// Inversion by sequential search; intended for small lambda.
    int poisson(double lambda);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t s_[4];
};

/// FNV-1a over a byte string, chained from `seed`.
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Lexical tokens: maximal runs of ASCII alphanumerics or underscore; any
/// non-ASCII byte also counts as a token character.
std::vector<std::string> lexical_tokens(std::string_view text);

// ---- synthetic corpus ----

struct SynthParams {
    std::uint64_t seed = 0;
    int num_samples = 1000;
    double lambda_lines = 2.0;
    double helpful_fraction = 0.6;
    double misleading_fraction = 0.15;
    int vocab_size_eff = 100;
    double q_base = 0.55;
    double q_boost = 0.35;
    double noise_sigma = 0.08;
    /// Drop in per-token correctness when a supplied snippet is a decoy.
    double misleading_penalty = 0.35;
    int prompt_lines = 50;
    int max_gt_lines = 5;

    void validate() const;
};

/// Line-addressable files keyed by file name.
struct Corpus {
    std::string name;
    std::map<std::string, std::vector<std::string>> files;
};

enum class SampleKind { Neutral, Helpful, Misleading };

/// Simulator-only knowledge about one sample.
struct SampleTruth {
    SampleKind kind = SampleKind::Neutral;
    std::vector<std::string> gt_lines;
    /// First diverging continuation line of the decoy (misleading samples).
    std::string decoy_marker;
};

struct SyntheticData {
    Corpus corpus;
    std::vector<CompletionSample> samples;
    std::unordered_map<std::string, SampleTruth> truth;
};

SyntheticData gen_corpus(const SynthParams& params);

/// Expected value of min(Poisson(lambda), cap) by summing the pmf.
double clipped_poisson_mean(double lambda, int cap);

/// Writes corpus files under dir/corpus/<name>/ and dir/samples.jsonl.
void materialize(const SyntheticData& data, const std::filesystem::path& dir);
/// Reads every regular file under `dir` (recursively) as a corpus file.
Corpus load_corpus(const std::filesystem::path& dir, std::string name);
std::vector<CompletionSample> read_samples(const std::filesystem::path& path);
std::string sample_to_json_line(const CompletionSample& sample);

// ---- mock generator ----

/// Stand-in LM. Emits each ground-truth token correctly with probability
/// q_eff = clamp(q_base + q_boost * relevance - penalty, 0.01, 0.99) and
/// logs summarized per-step distributions tied to q_eff.
class MockGenerator final : public Generator {
public:
    MockGenerator(SynthParams params, std::unordered_map<std::string, SampleTruth> truth);

    PredictionTrace complete(const GenerationRequest& request) const override;

    /// Best Jaccard between the ground-truth token set and any window of
    /// ground-truth length inside a supplied snippet.
    double relevance(const SampleTruth& truth, const std::vector<RetrievedSnippet>& snippets) const;
    bool is_misleading(const SampleTruth& truth, const std::vector<RetrievedSnippet>& snippets) const;
    double effective_quality(const SampleTruth& truth, const std::vector<RetrievedSnippet>& snippets) const;

    /// Two-bucket entropy: chosen token p, the rest spread over vocab_size_eff - 1.
    static double two_bucket_entropy(double p, int vocab_size_eff);

private:
    SynthParams params_;
    std::unordered_map<std::string, SampleTruth> truth_;
};

/// Replays logged iterations: generation i of a sample returns its logged
/// iteration i. Running past the log raises.
class ReplayGenerator final : public Generator {
public:
    explicit ReplayGenerator(const std::vector<TraceRecord>& records);
    PredictionTrace complete(const GenerationRequest& request) const override;

private:
    std::unordered_map<std::string, std::vector<PredictionTrace>> logs_;
};

// ---- retriever ----

/// Sliding-window retriever ranking windows by Jaccard similarity of
/// lexical token sets. Ties go to (file name, window start) ascending.
class JaccardRetriever final : public Retriever {
public:
    explicit JaccardRetriever(int window_lines = 20, int stride = 10);

    void add_corpus(const Corpus& corpus);

    std::vector<RetrievedSnippet> retrieve(std::string_view query, std::string_view corpus_ref,
                                           std::size_t k) const override;

    std::size_t window_count(std::string_view corpus_ref) const;

private:
    struct Window {
        std::string file;
        std::size_t start = 0;
        std::size_t end = 0;
        std::string text;
        std::vector<std::uint32_t> tokens;  // sorted, unique
    };
    struct Index {
        std::unordered_map<std::string, std::uint32_t> vocab;
        std::vector<Window> windows;
        std::vector<std::vector<std::uint32_t>> postings;  // token id -> window ids
    };

    int window_lines_;
    int stride_;
    std::map<std::string, Index, std::less<>> indexes_;
};

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// ---- latency ----

struct LatencyParams {
    double t_d = 1.0;
    double t_r = 0.0;
    double t_g0 = 755.0;
    double t_gi = 1025.0;

    void validate() const;
};

struct LatencyRow {
    int iteration = 0;
    double art = 0.0;
    double card_ms = 0.0;
    double baseline_ms = 0.0;
    double reduced = 0.0;
};

/// Iteration 1 overlaps zero-shot generation with retrieval; each later
/// iteration is the marginal cost of one more retrieval-generation round.
std::vector<LatencyRow> latency_model(const LatencyParams& p, double art_single,
                                      const std::vector<double>& art_marginal);

}  // namespace ragcrit
