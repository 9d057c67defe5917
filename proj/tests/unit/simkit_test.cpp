#include <cmath>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ragcrit/simkit.hpp"

using namespace ragcrit;

TEST(SimRng, DeterministicAndInRange) {
    SimRng a(5), b(5), c(6);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        differs |= x != c.next();
    }
    EXPECT_TRUE(differs);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(a.below(7), 7u);
    }
}

TEST(SimRng, ClippedPoissonMean) {
    SimRng rng(42);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += std::min(rng.poisson(2.0), 4);
    EXPECT_NEAR(sum / n, clipped_poisson_mean(2.0, 4), 0.1);
    EXPECT_NEAR(clipped_poisson_mean(2.0, 1000), 2.0, 1e-9);
}

TEST(LexicalTokens, Examples) {
    EXPECT_EQ(lexical_tokens("foo(bar_1, 2)"), (std::vector<std::string>{"foo", "bar_1", "2"}));
    EXPECT_EQ(lexical_tokens("  "), std::vector<std::string>{});
    EXPECT_EQ(lexical_tokens("λx"), std::vector<std::string>{"λx"});
}

TEST(GenCorpus, EmptyAndDeterministic) {
    SynthParams p;
    p.num_samples = 0;
    const auto empty = gen_corpus(p);
    EXPECT_TRUE(empty.samples.empty());
    EXPECT_TRUE(empty.truth.empty());

    p.num_samples = 200;
    p.seed = 9;
    const auto a = gen_corpus(p);
    const auto b = gen_corpus(p);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.corpus.files, b.corpus.files);
    p.seed = 10;
    EXPECT_NE(gen_corpus(p).samples, a.samples);
}

TEST(GenCorpus, GroundTruthLineCountsFollowClippedPoisson) {
    SynthParams p;
    p.num_samples = 4000;
    p.seed = 3;
    const auto d = gen_corpus(p);
    double sum = 0.0;
    for (const auto& s : d.samples) {
        const auto& t = d.truth.at(s.id);
        EXPECT_GE(t.gt_lines.size(), 1u);
        EXPECT_LE(t.gt_lines.size(), static_cast<std::size_t>(p.max_gt_lines));
        sum += static_cast<double>(t.gt_lines.size());
    }
    EXPECT_NEAR(sum / p.num_samples, 1.0 + clipped_poisson_mean(p.lambda_lines, p.max_gt_lines - 1), 0.1);
}

TEST(GenCorpus, KindFractions) {
    SynthParams p;
    p.num_samples = 4000;
    const auto d = gen_corpus(p);
    int helpful = 0, misleading = 0;
    for (const auto& [id, t] : d.truth) {
        helpful += t.kind == SampleKind::Helpful;
        misleading += t.kind == SampleKind::Misleading;
        if (t.kind == SampleKind::Misleading) EXPECT_FALSE(t.decoy_marker.empty());
    }
    EXPECT_NEAR(helpful / 4000.0, p.helpful_fraction, 0.03);
    EXPECT_NEAR(misleading / 4000.0, p.misleading_fraction, 0.03);
}

TEST(GenCorpus, RejectsBadParams) {
    SynthParams p;
    p.helpful_fraction = 0.9;
    p.misleading_fraction = 0.2;
    EXPECT_THROW(gen_corpus(p), std::invalid_argument);
    p = {};
    p.q_base = 0.8;
    EXPECT_THROW(gen_corpus(p), std::invalid_argument);
}

TEST(MockGenerator, TwoBucketEntropy) {
    EXPECT_NEAR(MockGenerator::two_bucket_entropy(0.99, 100), 0.1019527, 1e-7);
    EXPECT_NEAR(MockGenerator::two_bucket_entropy(0.5, 2), std::log(2.0), 1e-12);
    EXPECT_EQ(MockGenerator::two_bucket_entropy(1.0, 50), 0.0);
}

namespace {

SampleTruth long_truth() {
    SampleTruth t;
    std::string line;
    for (int i = 0; i < 400; ++i) line += (i ? " w" : "w") + std::to_string(i);
    t.gt_lines = {line};
    return t;
}

/// Fraction of emitted words matching the ground truth over many prompts.
double correct_rate(const MockGenerator& gen, const std::vector<RetrievedSnippet>& snippets) {
    const auto words = lexical_tokens(long_truth().gt_lines[0]);
    std::size_t ok = 0, total = 0;
    for (int k = 0; k < 25; ++k) {
        const std::string prompt = "prompt " + std::to_string(k);
        const auto t = gen.complete({"x", prompt, &snippets, 0});
        for (std::size_t i = 0; i < t.tokens.size(); ++i) {
            const auto tok = lexical_tokens(t.tokens[i]);
            ok += !tok.empty() && tok[0] == words[i];
            ++total;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(total);
}

}  // namespace

TEST(MockGenerator, RelevanceRaisesCorrectness) {
    SynthParams p;
    const auto truth = long_truth();
    MockGenerator gen(p, {{"x", truth}});
    const std::vector<RetrievedSnippet> none;
    const std::vector<RetrievedSnippet> exact{{"f:1-1", truth.gt_lines[0] + "\n", 1.0}};
    EXPECT_EQ(gen.relevance(truth, none), 0.0);
    EXPECT_EQ(gen.relevance(truth, exact), 1.0);
    EXPECT_NEAR(correct_rate(gen, exact) - correct_rate(gen, none), p.q_boost, 0.03);
}

TEST(MockGenerator, DecoyLowersQuality) {
    SynthParams p;
    SampleTruth t = long_truth();
    t.kind = SampleKind::Misleading;
    t.decoy_marker = "zz decoy";
    MockGenerator gen(p, {{"x", t}});
    const std::vector<RetrievedSnippet> decoy{{"v:1-2", "aa\nzz decoy\n", 0.5}};
    EXPECT_TRUE(gen.is_misleading(t, decoy));
    EXPECT_NEAR(gen.effective_quality(t, decoy), std::max(0.01, p.q_base - p.misleading_penalty), 1e-12);
}

TEST(MockGenerator, DeterministicTracesWithSummarySteps) {
    SynthParams p;
    p.num_samples = 20;
    const auto d = gen_corpus(p);
    MockGenerator gen(p, d.truth);
    for (const auto& s : d.samples) {
        const auto a = gen.complete({s.id, s.prompt, nullptr, 0});
        EXPECT_EQ(a, gen.complete({s.id, s.prompt, nullptr, 0}));
        EXPECT_NO_THROW(validate(a));
        for (const auto& st : a.steps) {
            const auto& ss = std::get<SummaryStep>(st);
            EXPECT_GE(ss.chosen_prob, 0.01);
            EXPECT_LE(ss.chosen_prob, 0.99);
        }
        // Token texts concatenate to the emitted text.
        std::string joined;
        for (const auto& tok : a.tokens) joined += tok;
        EXPECT_EQ(joined, a.text);
    }
    EXPECT_THROW(gen.complete({"unknown", "p", nullptr, 0}), std::invalid_argument);
}

TEST(Jaccard, Examples) {
    EXPECT_NEAR(jaccard({"a", "b"}, {"b", "c"}), 1.0 / 3.0, 1e-12);
    EXPECT_EQ(jaccard({"a"}, {"a", "a"}), 1.0);
    EXPECT_EQ(jaccard({}, {}), 0.0);
}

namespace {

Corpus tiny_corpus() {
    Corpus c;
    c.name = "tiny";
    c.files["a.py"] = {"alpha beta gamma", "delta epsilon"};
    c.files["b.py"] = {"zeta eta theta", "iota kappa"};
    return c;
}

}  // namespace

TEST(JaccardRetriever, IdenticalWindowRanksFirst) {
    JaccardRetriever r(2, 1);
    r.add_corpus(tiny_corpus());
    const auto hits = r.retrieve("zeta eta theta\niota kappa", "tiny", 3);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].id, "b.py:1-2");
    EXPECT_DOUBLE_EQ(hits[0].similarity, 1.0);
    for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_LE(hits[i].similarity, hits[i - 1].similarity);
}

TEST(JaccardRetriever, NoSharedTokensDeterministicOrder) {
    JaccardRetriever r(2, 1);
    r.add_corpus(tiny_corpus());
    const auto hits = r.retrieve("unrelated words", "tiny", 10);
    EXPECT_EQ(hits.size(), r.window_count("tiny"));
    for (const auto& h : hits) EXPECT_EQ(h.similarity, 0.0);
    EXPECT_EQ(hits[0].id, "a.py:1-2");
    const auto again = r.retrieve("unrelated words", "tiny", 10);
    ASSERT_EQ(again.size(), hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(again[i].id, hits[i].id);
}

TEST(JaccardRetriever, PartialOverlapAndUnknownCorpus) {
    Corpus c;
    c.name = "c";
    c.files["f"] = {"a b"};
    JaccardRetriever r;
    r.add_corpus(c);
    const auto hits = r.retrieve("b c", "c", 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_NEAR(hits[0].similarity, 1.0 / 3.0, 1e-12);
    EXPECT_THROW(r.retrieve("a", "nope", 1), std::invalid_argument);
    EXPECT_THROW(JaccardRetriever(0, 1), std::invalid_argument);
}

TEST(Latency, TableRowExamples) {
    LatencyParams p;
    p.t_r = 728;
    const auto rows = latency_model(p, 0.746, {0.432});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(rows[0].reduced * 100, 13.1, 0.5);
    p.t_d = 0;
    EXPECT_NEAR(latency_model(p, 0.746, {0.432})[1].reduced * 100, 56.8, 0.05);
}

TEST(Latency, Properties) {
    LatencyParams p;
    p.t_r = 800;
    p.t_d = 0;
    EXPECT_NEAR(latency_model(p, 0.5, {1.0})[1].reduced, 0.0, 1e-12);
    double prev = 2.0;
    for (double art = 0.0; art <= 1.0; art += 0.05) {
        const auto rows = latency_model(p, art, {art});
        EXPECT_LT(rows[0].reduced, prev);
        prev = rows[0].reduced;
        EXPECT_NEAR(rows[1].reduced, 1.0 - art, 1e-12);
    }
    EXPECT_THROW(latency_model(p, 1.5, {}), std::invalid_argument);
    p.t_r = -1;
    EXPECT_THROW(latency_model(p, 0.5, {}), std::invalid_argument);
}

TEST(ReplayGenerator, ReturnsLoggedIterationsThenRaises) {
    std::mt19937_64 rng(1);
    TraceRecord r = fixtures::random_record(rng, 1);
    ReplayGenerator gen({r});
    const auto n = r.episode.iterations.size();
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_EQ(gen.complete({r.sample.id, "", nullptr, static_cast<int>(i)}), r.episode.iterations[i].trace);
    }
    try {
        gen.complete({r.sample.id, "", nullptr, static_cast<int>(n)});
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("exhausted"), std::string::npos);
    }
    EXPECT_THROW(gen.complete({"other", "", nullptr, 0}), std::runtime_error);
}

TEST(Materialize, RoundTrip) {
    fixtures::TempDir dir("synth");
    SynthParams p;
    p.num_samples = 30;
    const auto d = gen_corpus(p);
    materialize(d, dir.path());
    EXPECT_EQ(read_samples(dir / "samples.jsonl"), d.samples);
    const auto c = load_corpus(dir / "corpus" / "synth", "synth");
    EXPECT_EQ(c.files, d.corpus.files);
    EXPECT_THROW(load_corpus(dir / "missing", "x"), std::runtime_error);

    std::ofstream(dir / "bad.jsonl") << "{\"id\":\"a\"}\n";
    EXPECT_THROW(read_samples(dir / "bad.jsonl"), TraceFormatError);
}
