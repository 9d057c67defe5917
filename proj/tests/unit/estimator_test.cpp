#include <chrono>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ragcrit/estimator.hpp"
#include "ragcrit/metrics.hpp"

using namespace ragcrit;

namespace {

TrainingExample one_feature(double x, double label) {
    // Full-set rows; only entry 0 varies.
    std::vector<double> v(13, 0.5);
    v[0] = x;
    return {FeatureVector{v, FeatureSet::Full}, label};
}

FeatureVector full_row(double x0) {
    std::vector<double> v(13, 0.5);
    v[0] = x0;
    return {v, FeatureSet::Full};
}

}  // namespace

TEST(TrainParams, Validation) {
    TrainParams p;
    EXPECT_NO_THROW(p.validate());
    p.num_trees = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.learning_rate = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.learning_rate = 1.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.max_leaves = 1;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.min_samples_leaf = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(BuildDataset, OneExamplePerIterationAndSkipsEmpty) {
    TraceRecord r;
    r.sample = {"s", "p", "ab", std::nullopt};
    r.episode.sample_id = "s";
    for (int i = 0; i < 3; ++i) {
        IterationRecord it;
        it.index = i;
        it.trace.text = i == 0 ? "ab" : "a";
        it.trace.tokens = {it.trace.text};
        it.trace.steps.emplace_back(SummaryStep{0.5, 0.1});
        r.episode.iterations.push_back(it);
    }
    auto ds = build_dataset({r}, FeatureSet::Full);
    ASSERT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds[0].label, 1.0);
    EXPECT_EQ(ds[1].label, 0.5);

    IterationRecord empty;
    empty.index = 3;
    r.episode.iterations.push_back(empty);
    DatasetBuildStats stats;
    ds = build_dataset({r}, FeatureSet::ProbOnly, &stats);
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(stats.skipped_empty, 1u);
    EXPECT_EQ(ds[0].features.size(), 7u);
}

TEST(Train, ConstantTargetPredictsConstant) {
    std::vector<TrainingExample> ds;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) ds.push_back(one_feature(u(rng), 0.7));
    const auto m = train(ds);
    EXPECT_EQ(m.base_score, 0.7);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(predict(m, full_row(u(rng))), 0.7);
}

TEST(Train, StepFunctionSplitsExactly) {
    std::vector<TrainingExample> ds{one_feature(0.1, 0.0), one_feature(0.2, 0.0), one_feature(0.8, 1.0),
                                    one_feature(0.9, 1.0)};
    TrainParams p;
    p.num_trees = 1;
    p.learning_rate = 1.0;
    p.min_samples_leaf = 1;
    const auto m = train(ds, p);
    ASSERT_EQ(m.trees.size(), 1u);
    const auto& root = std::get<SplitNode>(m.trees[0].nodes[0]);
    EXPECT_EQ(root.feature, 0u);
    EXPECT_DOUBLE_EQ(root.threshold, 0.5);
    for (const auto& ex : ds) EXPECT_EQ(predict(m, ex.features), ex.label);
    EXPECT_EQ(predict(m, full_row(0.05)), 0.0);
    EXPECT_EQ(evaluate(m, ds), 0.0);
}

TEST(Train, TrainingLossNonIncreasingPerTree) {
    const auto ds = fixtures::noisy_pavg_dataset(3000, 5);
    const auto m = train(ds);
    const auto mse = staged_mse(m, ds);
    ASSERT_EQ(mse.size(), m.trees.size() + 1);
    for (std::size_t k = 1; k < mse.size(); ++k) EXPECT_LE(mse[k], mse[k - 1]) << "tree " << k;
}

TEST(Train, DeterministicByteIdentical) {
    const auto ds = fixtures::noisy_pavg_dataset(2000, 9);
    EXPECT_EQ(model_to_json(train(ds)), model_to_json(train(ds)));
}

TEST(Train, LearnsNoisyPavg) {
    const auto train_set = fixtures::noisy_pavg_dataset(10000, 21);
    const auto test_set = fixtures::noisy_pavg_dataset(3000, 22);
    const auto m = train(train_set);
    EXPECT_LE(evaluate(m, test_set), 0.006);
}

TEST(Train, RespectsLimits) {
    const auto ds = fixtures::noisy_pavg_dataset(3000, 31);
    TrainParams p;
    p.num_trees = 5;
    p.max_leaves = 4;
    p.min_samples_leaf = 100;
    const auto m = train(ds, p);
    for (const auto& t : m.trees) EXPECT_LE(t.leaf_count(), 4u);
    p.max_leaves = 31;
    p.max_depth = 1;
    for (const auto& t : train(ds, p).trees) EXPECT_LE(t.leaf_count(), 2u);
}

TEST(Train, Errors) {
    EXPECT_THROW(train({}), std::invalid_argument);
    EXPECT_THROW(train({one_feature(0.1, 1.5)}), std::invalid_argument);
    auto mixed = std::vector<TrainingExample>{one_feature(0.1, 0.5)};
    mixed.push_back({FeatureVector{std::vector<double>(7, 0.1), FeatureSet::ProbOnly}, 0.5});
    EXPECT_THROW(train(mixed), std::invalid_argument);
}

TEST(Predict, ClampsAndChecksFeatureSet) {
    EstimatorModel m;
    m.base_score = -0.2;
    EXPECT_EQ(predict(m, full_row(0.3)), 0.0);
    m.base_score = 1.4;
    EXPECT_EQ(predict(m, full_row(0.3)), 1.0);
    EXPECT_THROW(predict(m, FeatureVector{std::vector<double>(7, 0.1), FeatureSet::ProbOnly}), std::invalid_argument);
    EXPECT_THROW(predict(m, FeatureVector{std::vector<double>(5, 0.1), FeatureSet::Full}), std::invalid_argument);
}

TEST(Predict, AlwaysInUnitInterval) {
    const auto ds = fixtures::noisy_pavg_dataset(2000, 41);
    const auto m = train(ds);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(13);
        for (auto& x : v) x = u(rng);
        const double s = predict(m, {v, FeatureSet::Full});
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Evaluate, Examples) {
    EstimatorModel half;
    half.base_score = 0.5;
    std::vector<TrainingExample> ds{one_feature(0.1, 0.0), one_feature(0.2, 1.0)};
    EXPECT_DOUBLE_EQ(evaluate(half, ds), 0.25);
    EXPECT_THROW(evaluate(half, {}), std::invalid_argument);
}

TEST(Serialization, RoundTripPredictsIdentically) {
    fixtures::TempDir dir("model");
    const auto ds = fixtures::noisy_pavg_dataset(3000, 51);
    const auto m = train(ds);
    save_model(m, dir / "m.json");
    const auto back = load_model(dir / "m.json");
    EXPECT_EQ(back, m);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(13);
        for (auto& x : v) x = u(rng);
        const FeatureVector z{v, FeatureSet::Full};
        EXPECT_EQ(predict(back, z), predict(m, z));
    }
}

TEST(Serialization, VersionMismatch) {
    const auto text = model_to_json(EstimatorModel{});
    auto j = text;
    const auto pos = j.find("\"format_version\":1");
    ASSERT_NE(pos, std::string::npos);
    j.replace(pos, std::string("\"format_version\":1").size(), "\"format_version\":999");
    try {
        model_from_json(j);
        FAIL();
    } catch (const ModelFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("999"), std::string::npos);
    }
}

TEST(Serialization, TruncatedFile) {
    fixtures::TempDir dir("model");
    const auto m = train(fixtures::noisy_pavg_dataset(500, 61));
    const auto text = model_to_json(m);
    std::ofstream(dir / "t.json") << text.substr(0, text.size() / 2);
    EXPECT_THROW(load_model(dir / "t.json"), ModelFormatError);
    EXPECT_THROW(load_model(dir / "missing.json"), std::runtime_error);
}

TEST(Serialization, StructuralErrors) {
    auto bad = [](const std::string& trees) {
        return std::string(R"({"format_version":1,"feature_set":"full","base_score":0.5,"learning_rate":0.1,"trees":)") +
               trees + "}";
    };
    EXPECT_NO_THROW(model_from_json(bad(R"([{"nodes":[{"value":0.1}]}])")));
    // Child index out of range.
    EXPECT_THROW(model_from_json(bad(R"([{"nodes":[{"feature":0,"threshold":0.5,"left":1,"right":5},{"value":0}]}])")),
                 ModelFormatError);
    // Cycle back to the root.
    EXPECT_THROW(model_from_json(bad(R"([{"nodes":[{"feature":0,"threshold":0.5,"left":0,"right":1},{"value":0}]}])")),
                 ModelFormatError);
    // Feature beyond dimension.
    EXPECT_THROW(
        model_from_json(bad(R"([{"nodes":[{"feature":13,"threshold":0.5,"left":1,"right":2},{"value":0},{"value":1}]}])")),
        ModelFormatError);
    EXPECT_THROW(model_from_json(R"({"format_version":1})"), ModelFormatError);
}

TEST(Scorers, OracleConstantAndModel) {
    const CompletionSample s{"id", "p", "hello", std::nullopt};
    PredictionTrace t;
    t.text = "hello";
    t.tokens = {"hello"};
    t.steps.emplace_back(SummaryStep{0.9, 0.1});
    EXPECT_EQ(OracleScorer().score(s, t), 1.0);
    EXPECT_EQ(ConstantScorer(0.3).score(s, t), 0.3);

    std::mt19937_64 rng(71);
    for (int i = 0; i < 100; ++i) {
        const auto tr = fixtures::random_trace(rng, 1 + i % 5, 1);
        const CompletionSample si{"id", "p", fixtures::random_trace(rng, 3, 1).text, std::nullopt};
        EXPECT_EQ(OracleScorer().score(si, tr), score_target(si, tr));
    }

    EstimatorModel m;
    m.base_score = 0.42;
    EXPECT_EQ(ModelScorer(m).score(s, t), 0.42);
}

TEST(Predict, SingleVectorIsFast) {
    const auto m = train(fixtures::noisy_pavg_dataset(5000, 81));
    const auto z = fixtures::noisy_pavg_dataset(1, 82)[0].features;
    const auto t0 = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (int i = 0; i < 1000; ++i) sink += predict(m, z);
    const double per_call_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 1000;
    EXPECT_GT(sink, 0.0);
    EXPECT_LT(per_call_ms, 5.0);
}
