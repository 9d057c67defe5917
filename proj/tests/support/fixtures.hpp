#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ragcrit/estimator.hpp"
#include "ragcrit/trace.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("ragcrit_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<double> random_logits(std::mt19937_64& rng, std::size_t vocab) {
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    std::vector<double> row(vocab);
    for (auto& v : row) v = u(rng);
    return row;
}

/// Trace with `n` steps in one form; form 0 logits, form 1 summaries.
inline ragcrit::PredictionTrace random_trace(std::mt19937_64& rng, std::size_t n, int form,
                                             std::size_t max_vocab = 16) {
    static const char* kPieces[] = {"x", " = ", "λ", "foo", "(", ")", "\n", "\t", "\"q\"", "é"};
    std::uniform_int_distribution<std::size_t> piece(0, std::size(kPieces) - 1);
    std::uniform_int_distribution<std::size_t> vocab(2, max_vocab);
    std::uniform_real_distribution<double> prob(1e-6, 1.0);
    std::uniform_real_distribution<double> ent(0.0, 5.0);
    ragcrit::PredictionTrace t;
    for (std::size_t i = 0; i < n; ++i) {
        std::string tok = kPieces[piece(rng)];
        t.text += tok;
        t.tokens.push_back(tok);
        if (form == 0) {
            const auto v = vocab(rng);
            std::uniform_int_distribution<std::size_t> pick(0, v - 1);
            t.steps.emplace_back(ragcrit::LogitsStep{random_logits(rng, v), pick(rng)});
        } else {
            t.steps.emplace_back(ragcrit::SummaryStep{prob(rng), ent(rng)});
        }
    }
    return t;
}

inline ragcrit::TraceRecord random_record(std::mt19937_64& rng, int id) {
    std::uniform_int_distribution<int> iters(1, 4);
    std::uniform_int_distribution<std::size_t> steps(0, 6);
    std::bernoulli_distribution coin(0.5);
    ragcrit::TraceRecord r;
    r.sample.id = "sample-" + std::to_string(id);
    r.sample.prompt = "def f(x):\n    return λ + " + std::to_string(id) + "\n";
    r.sample.ground_truth = "y = " + std::to_string(id * 7) + "\nprint(y)  ";
    if (coin(rng)) r.sample.corpus_ref = "repo-" + std::to_string(id % 3);
    r.episode.sample_id = r.sample.id;
    const int k = iters(rng);
    const int form = coin(rng) ? 0 : 1;
    for (int i = 0; i < k; ++i) {
        ragcrit::IterationRecord it;
        it.index = i;
        it.retrieved = i > 0;
        it.trace = random_trace(rng, steps(rng), form);
        if (i > 0 && coin(rng)) it.snippet_ids = std::vector<std::string>{"a.py:1-20", "b.py:11-30"};
        r.episode.iterations.push_back(std::move(it));
    }
    return r;
}

/// Learnability dataset: 13-entry rows from random per-step probabilities
/// and entropies; label = p_avg + N(0, sigma) clamped to [0, 1].
inline std::vector<ragcrit::TrainingExample> noisy_pavg_dataset(std::size_t n, std::uint64_t seed,
                                                                double sigma = 0.05) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, 40);
    std::uniform_real_distribution<double> centre(0.05, 0.95);
    std::normal_distribution<double> jitter(0.0, 0.15);
    std::uniform_real_distribution<double> ent(0.0, 4.0);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<ragcrit::TrainingExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto steps = len(rng);
        const double c = centre(rng);
        std::vector<double> probs(steps), ents(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            probs[k] = std::clamp(c + jitter(rng), 1e-3, 1.0);
            ents[k] = ent(rng);
        }
        auto fv = ragcrit::extract_features(probs, ents, ragcrit::FeatureSet::Full);
        const double label = std::clamp(fv[2] + noise(rng), 0.0, 1.0);
        out.push_back({std::move(fv), label});
    }
    return out;
}

}  // namespace fixtures
