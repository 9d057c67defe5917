#include <random>

#include <benchmark/benchmark.h>

#include "ragcrit/estimator.hpp"
#include "ragcrit/features.hpp"
#include "ragcrit/metrics.hpp"
#include "ragcrit/policy.hpp"
#include "ragcrit/simkit.hpp"

using namespace ragcrit;

namespace {

std::vector<TrainingExample> dataset(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, 40);
    std::uniform_real_distribution<double> p(0.01, 1.0), h(0.0, 4.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<TrainingExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> probs(len(rng)), ents(probs.size());
        for (auto& x : probs) x = p(rng);
        for (auto& x : ents) x = h(rng);
        auto fv = extract_features(probs, ents, FeatureSet::Full);
        const double label = std::clamp(fv[2] + noise(rng), 0.0, 1.0);
        out.push_back({std::move(fv), label});
    }
    return out;
}

std::string random_text(std::mt19937_64& rng, std::size_t n) {
    static const char* kPieces[] = {"a", "b", "c", " ", "\n", "λ", "中"};
    std::uniform_int_distribution<std::size_t> pick(0, std::size(kPieces) - 1);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += kPieces[pick(rng)];
    return s;
}

}  // namespace

static void BM_Predict(benchmark::State& state) {
    const auto ds = dataset(5000, 1);
    const auto model = train(ds);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict(model, ds[i++ % ds.size()].features));
    }
}
BENCHMARK(BM_Predict);

static void BM_Train(benchmark::State& state) {
    const auto ds = dataset(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(train(ds));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Train)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);

static void BM_Levenshtein(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_text(rng, n), b = random_text(rng, n);
    for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
}
BENCHMARK(BM_Levenshtein)->Arg(40)->Arg(400);

static void BM_FeaturesFromLogits(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 3.0);
    PredictionTrace t;
    for (int i = 0; i < 64; ++i) {
        std::vector<double> row(static_cast<std::size_t>(state.range(0)));
        for (auto& x : row) x = z(rng);
        t.tokens.push_back("x");
        t.text += "x";
        t.steps.emplace_back(LogitsStep{std::move(row), 0});
    }
    for (auto _ : state) benchmark::DoNotOptimize(features_from_trace(t));
}
BENCHMARK(BM_FeaturesFromLogits)->Arg(512)->Arg(32000);

static void BM_ResolveBest(benchmark::State& state) {
    const std::vector<double> scores{0.2, 0.7, 0.5, 0.9, 0.4};
    const auto schedule = ThresholdSchedule::line_level();
    for (auto _ : state) benchmark::DoNotOptimize(resolve_best(scores, schedule));
}
BENCHMARK(BM_ResolveBest);

static void BM_Retrieve(benchmark::State& state) {
    SynthParams p;
    p.num_samples = static_cast<int>(state.range(0));
    const auto data = gen_corpus(p);
    JaccardRetriever r;
    r.add_corpus(data.corpus);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& s = data.samples[i++ % data.samples.size()];
        benchmark::DoNotOptimize(r.retrieve(s.prompt, "synth", 10));
    }
}
BENCHMARK(BM_Retrieve)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
