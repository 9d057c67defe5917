#include "ragcrit/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ragcrit/metrics.hpp"

namespace ragcrit {

void RunConfig::validate() const {
    if (max_iter < 0) throw std::invalid_argument("max_iter must be >= 0");
    schedule.validate();
    const auto need = static_cast<std::size_t>(max_iter);
    if (schedule.t_rag.size() < need || schedule.t_acc.size() < need) {
        throw std::invalid_argument("threshold schedule covers " +
                                    std::to_string(std::min(schedule.t_rag.size(), schedule.t_acc.size())) +
                                    " iterations, max_iter is " + std::to_string(max_iter));
    }
    if (query_window_lines < 1) throw std::invalid_argument("query_window_lines must be >= 1");
}

std::string build_query(std::string_view prompt, const std::optional<std::string>& previous_prediction,
                        int window_lines) {
    if (window_lines < 1) throw std::invalid_argument("window_lines must be >= 1");
    std::string_view body = prompt;
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    std::size_t start = 0;
    std::size_t pos = body.size();
    for (int seen = 0; seen < window_lines; ++seen) {
        const auto nl = pos == 0 ? std::string_view::npos : body.rfind('\n', pos - 1);
        if (nl == std::string_view::npos) {
            start = 0;
            break;
        }
        start = nl + 1;
        pos = nl;
    }
    std::string query(body.substr(start));
    if (previous_prediction) {
        if (!query.empty()) query += '\n';
        query += *previous_prediction;
    }
    return query;
}

std::vector<RetrievedSnippet> apply_snippet_budget(std::vector<RetrievedSnippet> snippets,
                                                   std::size_t char_budget) {
    std::size_t used = 0;
    std::size_t keep = 0;
    for (; keep < snippets.size(); ++keep) {
        used += snippets[keep].text.size();
        if (used > char_budget) break;
    }
    snippets.resize(keep);
    return snippets;
}

std::string assemble_prompt(std::string_view prompt, const std::vector<RetrievedSnippet>& snippets) {
    std::string out;
    for (const auto& s : snippets) {
        out += "# retrieved: ";
        out += s.id;
        out += '\n';
        out += s.text;
        if (!s.text.empty() && s.text.back() != '\n') out += '\n';
    }
    out += prompt;
    return out;
}

namespace {

std::size_t pick_index(const std::vector<double>& scores, const RunConfig& config) {
    if (!config.enable_select) return scores.size() - 1;
    const std::size_t first = config.exclude_zero_shot_from_select && scores.size() > 1 ? 1 : 0;
    return resolve_best(scores, config.schedule, first);
}

}  // namespace

EpisodeResult run_episode(const CompletionSample& sample, const Generator& generator,
                          const Retriever& retriever, const Scorer& scorer, const RunConfig& config) {
    config.validate();
    std::vector<double> t_rag = config.schedule.t_rag;
    if (config.mode == RagMode::Iterative) t_rag[0] = kAlwaysRetrieve;

    EpisodeResult result;
    result.episode.sample_id = sample.id;
    std::vector<RetrievedSnippet> snippets;
    const std::string corpus = sample.corpus_ref.value_or("");
    try {
        for (int i = 0;; ++i) {
            GenerationRequest req{sample.id, sample.prompt, &snippets, i};
            IterationRecord rec;
            rec.index = i;
            rec.trace = generator.complete(req);
            rec.retrieved = i > 0;
            if (i > 0) {
                std::vector<std::string> ids;
                ids.reserve(snippets.size());
                for (const auto& s : snippets) ids.push_back(s.id);
                rec.snippet_ids = std::move(ids);
            }
            // An empty generation carries no signal and always asks for retrieval.
            const double s_hat = rec.trace.empty() ? 0.0 : std::clamp(scorer.score(sample, rec.trace), 0.0, 1.0);
            result.scores.push_back(s_hat);
            std::optional<std::string> previous;
            if (i > 0) previous = rec.trace.text;
            result.episode.iterations.push_back(std::move(rec));

            if (i == config.max_iter) break;
            if (config.enable_adaptive && !is_retrieve(s_hat, t_rag[static_cast<std::size_t>(i)])) break;

            const auto query = build_query(sample.prompt, previous, config.query_window_lines);
            snippets = apply_snippet_budget(retriever.retrieve(query, corpus, config.top_k),
                                            config.snippet_char_budget);
            ++result.retrieval_count;
        }
    } catch (const EpisodeError&) {
        throw;
    } catch (const std::exception& e) {
        throw EpisodeError(sample.id, e.what());
    }
    result.chosen_index = pick_index(result.scores, config);
    result.chosen_text = result.episode.iterations[result.chosen_index].trace.text;
    return result;
}

EpisodeResult truncate_episode(const EpisodeResult& full, int budget, const RunConfig& config) {
    const auto keep = std::min(full.scores.size(), static_cast<std::size_t>(std::max(budget, 0)) + 1);
    if (keep == full.scores.size()) return full;
    EpisodeResult out;
    out.episode.sample_id = full.episode.sample_id;
    out.episode.iterations.assign(full.episode.iterations.begin(),
                                  full.episode.iterations.begin() + static_cast<std::ptrdiff_t>(keep));
    out.scores.assign(full.scores.begin(), full.scores.begin() + static_cast<std::ptrdiff_t>(keep));
    out.retrieval_count = static_cast<int>(keep) - 1;
    out.chosen_index = pick_index(out.scores, config);
    out.chosen_text = out.episode.iterations[out.chosen_index].trace.text;
    return out;
}

// ---- benchmark ----

namespace {

class SerializedGenerator final : public Generator {
public:
    explicit SerializedGenerator(const Generator& inner) : inner_(inner) {}
    PredictionTrace complete(const GenerationRequest& r) const override {
        std::lock_guard lock(mu_);
        return inner_.complete(r);
    }

private:
    const Generator& inner_;
    mutable std::mutex mu_;
};

class SerializedRetriever final : public Retriever {
public:
    explicit SerializedRetriever(const Retriever& inner) : inner_(inner) {}
    std::vector<RetrievedSnippet> retrieve(std::string_view q, std::string_view c, std::size_t k) const override {
        std::lock_guard lock(mu_);
        return inner_.retrieve(q, c, k);
    }

private:
    const Retriever& inner_;
    mutable std::mutex mu_;
};

class SerializedScorer final : public Scorer {
public:
    explicit SerializedScorer(const Scorer& inner) : inner_(inner) {}
    double score(const CompletionSample& s, const PredictionTrace& t) const override {
        std::lock_guard lock(mu_);
        return inner_.score(s, t);
    }

private:
    const Scorer& inner_;
    mutable std::mutex mu_;
};

struct SampleOutcome {
    SampleBreakdown breakdown;
    std::vector<bool> card_em;
    std::vector<bool> baseline_em;
    bool zero_shot_em = false;
};

template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double degeneration(const std::vector<double>& before, const std::vector<double>& after) {
    if (before.empty()) return 0.0;
    std::size_t worse = 0;
    for (std::size_t i = 0; i < before.size(); ++i) worse += after[i] < before[i] ? 1 : 0;
    return static_cast<double>(worse) / static_cast<double>(before.size());
}

}  // namespace

std::array<double, kHistogramBuckets> es_histogram(const std::vector<double>& es) {
    std::array<double, kHistogramBuckets> h{};
    if (es.empty()) return h;
    std::array<std::size_t, kHistogramBuckets> counts{};
    for (double v : es) {
        auto b = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * static_cast<double>(kHistogramBuckets));
        counts[std::min(b, kHistogramBuckets - 1)]++;
    }
    for (std::size_t b = 0; b < kHistogramBuckets; ++b) {
        h[b] = static_cast<double>(counts[b]) / static_cast<double>(es.size());
    }
    return h;
}

BenchmarkReport run_benchmark(const std::vector<CompletionSample>& samples, const Generator& generator,
                              const Retriever& retriever, const Scorer& scorer, const RunConfig& config,
                              const std::vector<int>& budgets, unsigned workers) {
    if (samples.empty()) throw std::invalid_argument("benchmark needs at least one sample");
    if (budgets.empty()) throw std::invalid_argument("benchmark needs at least one budget");
    for (std::size_t b = 0; b < budgets.size(); ++b) {
        if (budgets[b] < 1) throw std::invalid_argument("budgets must be >= 1");
        if (b > 0 && budgets[b] <= budgets[b - 1]) throw std::invalid_argument("budgets must be ascending");
    }
    const int max_budget = budgets.back();

    // Single-round arm runs the loop as configured. In iterative mode, budgets >= 2
    // continue from an unconditional first retrieval instead.
    RunConfig card_single = config;
    card_single.mode = RagMode::Single;
    card_single.max_iter = config.mode == RagMode::Iterative ? 1 : max_budget;
    RunConfig card_iter = config;
    card_iter.mode = RagMode::Iterative;
    card_iter.max_iter = max_budget;
    const bool need_iter_arm = config.mode == RagMode::Iterative && max_budget >= 2;
    RunConfig baseline = config;
    baseline.mode = RagMode::Single;
    baseline.enable_adaptive = false;
    baseline.enable_select = false;
    baseline.max_iter = max_budget;
    card_single.validate();
    if (need_iter_arm) card_iter.validate();

    std::optional<SerializedGenerator> sgen;
    std::optional<SerializedRetriever> sret;
    std::optional<SerializedScorer> ssc;
    const Generator* gen = &generator;
    const Retriever* ret = &retriever;
    const Scorer* sc = &scorer;
    if (workers > 1) {
        if (!generator.concurrent_safe()) gen = &sgen.emplace(generator);
        if (!retriever.concurrent_safe()) ret = &sret.emplace(retriever);
        if (!scorer.concurrent_safe()) sc = &ssc.emplace(scorer);
    }

    const bool trunc = config.truncate_for_metrics;
    std::vector<SampleOutcome> outcomes(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t idx) {
        const auto& sample = samples[idx];
        auto& out = outcomes[idx];
        out.breakdown.id = sample.id;
        try {
            const auto base = run_episode(sample, *gen, *ret, *sc, baseline);
            const auto single = run_episode(sample, *gen, *ret, *sc, card_single);
            std::optional<EpisodeResult> iter;
            if (need_iter_arm) iter = run_episode(sample, *gen, *ret, *sc, card_iter);

            auto metric = [&](const std::string& text) { return evaluate_prediction(sample.ground_truth, text, trunc); };
            const auto zs = metric(base.episode.iterations[0].trace.text);
            out.breakdown.zero_shot_es = zs.es;
            out.zero_shot_em = zs.em;
            for (int budget : budgets) {
                const auto b = metric(base.episode.iterations[static_cast<std::size_t>(budget)].trace.text);
                out.breakdown.baseline_es.push_back(b.es);
                out.baseline_em.push_back(b.em);

                const bool from_iter = need_iter_arm && budget >= 2;
                const auto card = truncate_episode(from_iter ? *iter : single, budget,
                                                   from_iter ? card_iter : card_single);
                const auto c = metric(card.chosen_text);
                out.breakdown.card_es.push_back(c.es);
                out.card_em.push_back(c.em);
                out.breakdown.card_retrievals.push_back(card.retrieval_count);
                double best = 0.0;
                for (const auto& it : card.episode.iterations) best = std::max(best, metric(it.trace.text).es);
                out.breakdown.card_max_es.push_back(best);
            }
        } catch (const std::exception& e) {
            out.breakdown.error = e.what();
        }
    });

    BenchmarkReport report;
    report.budgets = budgets;
    const auto nb = budgets.size();
    std::vector<std::vector<double>> card_es(nb), base_es(nb), card_em(nb), base_em(nb), card_ret(nb);
    std::vector<double> zs_es, zs_em;
    for (const auto& o : outcomes) {
        report.samples.push_back(o.breakdown);
        if (o.breakdown.error) {
            ++report.failures;
            continue;
        }
        zs_es.push_back(o.breakdown.zero_shot_es);
        zs_em.push_back(o.zero_shot_em ? 1.0 : 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
            card_es[b].push_back(o.breakdown.card_es[b]);
            card_em[b].push_back(o.card_em[b] ? 1.0 : 0.0);
            card_ret[b].push_back(static_cast<double>(o.breakdown.card_retrievals[b]));
            base_es[b].push_back(o.breakdown.baseline_es[b]);
            base_em[b].push_back(o.baseline_em[b] ? 1.0 : 0.0);
        }
    }
    report.zero_shot_es = mean_of(zs_es);
    report.zero_shot_em = mean_of(zs_em);
    report.es_histogram["zero_shot"] = es_histogram(zs_es);
    for (std::size_t b = 0; b < nb; ++b) {
        report.card_es.push_back(mean_of(card_es[b]));
        report.card_em.push_back(mean_of(card_em[b]));
        report.card_aart.push_back(mean_of(card_ret[b]));
        report.baseline_es.push_back(mean_of(base_es[b]));
        report.baseline_em.push_back(mean_of(base_em[b]));

        const auto suffix = std::to_string(budgets[b]);
        report.es_histogram["rg_" + suffix] = es_histogram(base_es[b]);
        report.es_histogram["card_rg_" + suffix] = es_histogram(card_es[b]);
        report.degeneration_rate["rg_" + suffix] = degeneration(b == 0 ? zs_es : base_es[b - 1], base_es[b]);
        report.degeneration_rate["card_rg_" + suffix] =
            degeneration(b == 0 ? zs_es : card_es[b - 1], card_es[b]);
    }
    return report;
}

std::string report_to_json(const BenchmarkReport& r) {
    using nlohmann::json;
    json j;
    j["budgets"] = r.budgets;
    j["card"] = {{"em", r.card_em}, {"es", r.card_es}, {"aart", r.card_aart}};
    j["baseline"] = {{"em", r.baseline_em}, {"es", r.baseline_es}};
    j["zero_shot"] = {{"em", r.zero_shot_em}, {"es", r.zero_shot_es}};
    json hist = json::object();
    for (const auto& [stage, h] : r.es_histogram) hist[stage] = h;
    json deg = json::object();
    for (const auto& [stage, d] : r.degeneration_rate) deg[stage] = d;
    j["distributions"] = {{"es_histogram", std::move(hist)}, {"degeneration_rate", std::move(deg)}};
    j["failures"] = r.failures;
    return j.dump(2) + "\n";
}

std::string format_report_table(const BenchmarkReport& r) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s\n", "Method", "EM(%)", "ES(%)", "aART");
    out += buf;
    std::snprintf(buf, sizeof buf, "%-12s %8.2f %8.2f %8.3f\n", "Zero-shot", 100.0 * r.zero_shot_em,
                  100.0 * r.zero_shot_es, 0.0);
    out += buf;
    for (std::size_t b = 0; b < r.budgets.size(); ++b) {
        const auto n = std::to_string(r.budgets[b]);
        std::snprintf(buf, sizeof buf, "%-12s %8.2f %8.2f %8.3f\n", ("RG_" + n).c_str(), 100.0 * r.baseline_em[b],
                      100.0 * r.baseline_es[b], static_cast<double>(r.budgets[b]));
        out += buf;
        const double saved = r.budgets[b] > 0 ? 1.0 - r.card_aart[b] / r.budgets[b] : 0.0;
        std::snprintf(buf, sizeof buf, "%-12s %8.2f %8.2f %8.3f (-%.1f%%)\n", ("CARD-RG_" + n).c_str(),
                      100.0 * r.card_em[b], 100.0 * r.card_es[b], r.card_aart[b], 100.0 * saved);
        out += buf;
    }
    if (r.failures > 0) {
        std::snprintf(buf, sizeof buf, "failures: %d\n", r.failures);
        out += buf;
    }
    return out;
}

}  // namespace ragcrit
