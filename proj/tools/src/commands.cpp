#include <chrono>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ragcrit/cli.hpp"
#include "ragcrit/metrics.hpp"

namespace ragcrit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Failure already reported to the error stream; maps to exit code 1.
struct CommandFailed {};

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) throw std::runtime_error(std::string(what) + " not found: " + path.string());
}

void require_parent(const fs::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw std::runtime_error("output directory does not exist: " + parent.string());
    }
}

// ---- features ----

struct FeaturesArgs {
    std::string in, out, feature_set = "full";
    bool label = false;
};

int cmd_features(const FeaturesArgs& a, std::ostream& out, std::ostream& err) {
    const auto set = parse_feature_set(a.feature_set);
    if (!set) throw std::invalid_argument("--feature-set must be full, prob or entropy");
    require_file(a.in, "trace file");
    require_parent(a.out);

    TraceReader reader(a.in);
    std::string body;
    std::size_t records = 0, rows = 0, skipped = 0;
    try {
        while (auto rec = reader.next()) {
            ++records;
            for (const auto& it : rec->episode.iterations) {
                // Empty generations have no steps to summarize.
                if (it.trace.empty()) {
                    ++skipped;
                    continue;
                }
                json j;
                j["id"] = rec->sample.id;
                j["iteration"] = it.index;
                j["feature_set"] = std::string(to_string(*set));
                j["features"] = features_from_trace(it.trace, *set).values;
                if (a.label) j["label"] = score_target(rec->sample, it.trace);
                body += j.dump();
                body += '\n';
                ++rows;
            }
        }
    } catch (const TraceFormatError& e) {
        err << a.in << ": " << e.what() << "\n";
        throw CommandFailed{};
    }
    write_file_atomic(a.out, body);
    out << fmt::format("{} feature rows from {} records -> {}\n", rows, records, a.out);
    if (skipped > 0) out << fmt::format("{} empty generations skipped\n", skipped);
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string features, model, feature_set;
    std::optional<int> trees, max_leaves, min_samples_leaf, max_depth, seed;
    std::optional<double> lr;
};

std::vector<TrainingExample> read_feature_file(const fs::path& path, std::optional<FeatureSet>& set,
                                               std::ostream& err) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file: " + path.string());
    std::vector<TrainingExample> rows;
    std::string line;
    std::size_t no = 0;
    std::size_t dim = 0;
    auto fail = [&](const std::string& why) {
        err << path.string() << ": line " << no << ": " << why << "\n";
        throw CommandFailed{};
    };
    while (std::getline(in, line)) {
        ++no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(std::string("JSON parse error: ") + e.what());
        }
        if (!j.is_object() || !j.contains("features") || !j["features"].is_array()) fail("missing \"features\" array");
        if (!j.contains("label")) fail("row has no label (produce it with `features --label`)");
        if (!j["label"].is_number()) fail("label is not a number");
        std::vector<double> values;
        try {
            values = j["features"].get<std::vector<double>>();
        } catch (const json::exception&) {
            fail("features must be numbers");
        }
        std::optional<FeatureSet> row_set;
        if (j.contains("feature_set")) {
            if (!j["feature_set"].is_string()) fail("feature_set is not a string");
            row_set = parse_feature_set(j["feature_set"].get<std::string>());
            if (!row_set) fail("unknown feature_set");
        }
        if (rows.empty()) {
            if (!set) set = row_set;
            if (!set && values.size() == feature_dimension(FeatureSet::Full)) set = FeatureSet::Full;
            if (!set) fail("cannot infer the feature set from a 7-entry row; pass --feature-set");
            dim = feature_dimension(*set);
        }
        if ((row_set && row_set != set) || values.size() != dim) {
            fail(fmt::format("mixed feature sets: expected {} with {} entries, got {}{} entries",
                             to_string(*set), dim, row_set ? std::string(to_string(*row_set)) + " with " : "",
                             values.size()));
        }
        const double label = j["label"].get<double>();
        if (!(label >= 0.0 && label <= 1.0)) fail("label outside [0, 1]");
        rows.push_back({FeatureVector{std::move(values), *set}, label});
    }
    return rows;
}

int cmd_train(const TrainArgs& a, const RunManifest& m, std::ostream& out, std::ostream& err) {
    require_file(a.features, "feature file");
    require_parent(a.model);
    std::optional<FeatureSet> set;
    if (!a.feature_set.empty()) {
        set = parse_feature_set(a.feature_set);
        if (!set) throw std::invalid_argument("--feature-set must be full, prob or entropy");
    }
    const auto rows = read_feature_file(a.features, set, err);
    if (rows.empty()) throw std::runtime_error("feature file has no rows: " + a.features);

    TrainParams p = m.train;
    if (a.trees) p.num_trees = *a.trees;
    if (a.lr) p.learning_rate = *a.lr;
    if (a.max_leaves) p.max_leaves = *a.max_leaves;
    if (a.min_samples_leaf) p.min_samples_leaf = *a.min_samples_leaf;
    if (a.max_depth) p.max_depth = *a.max_depth;
    if (a.seed) p.seed = *a.seed;

    const auto t0 = std::chrono::steady_clock::now();
    const auto model = train(rows, p);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_model(model, a.model);
    out << fmt::format("rows {}  trees {}  training MSE {:.6f}  time {:.3f} s\n", rows.size(), model.trees.size(),
                       evaluate(model, rows), secs);
    return 0;
}

// ---- score ----

struct ScoreArgs {
    std::string model, traces, out;
};

int cmd_score(const ScoreArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.model, "model file");
    require_file(a.traces, "trace file");
    if (!a.out.empty()) require_parent(a.out);
    const ModelScorer scorer(load_model(a.model));

    TraceReader reader(a.traces);
    std::string body;
    try {
        while (auto rec = reader.next()) {
            for (const auto& it : rec->episode.iterations) {
                json j;
                j["id"] = rec->sample.id;
                j["iteration"] = it.index;
                // Same convention as the pipeline: an empty generation scores 0.
                j["score"] = it.trace.empty() ? 0.0 : scorer.score(rec->sample, it.trace);
                body += j.dump();
                body += '\n';
            }
        }
    } catch (const TraceFormatError& e) {
        err << a.traces << ": " << e.what() << "\n";
        throw CommandFailed{};
    }
    if (a.out.empty()) {
        out << body;
    } else {
        write_file_atomic(a.out, body);
    }
    return 0;
}

// ---- run / sweep ----

struct RunArgs {
    std::string mode = "synthetic";
    std::string report, model, traces, scorer, budgets_csv;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
    std::optional<int> num_samples;
};

/// Generator, retriever and samples for one benchmark invocation.
struct Bench {
    std::vector<CompletionSample> samples;
    std::unique_ptr<Generator> generator;
    std::unique_ptr<Retriever> retriever;
    std::unique_ptr<Scorer> scorer;
};

std::vector<int> parse_budgets(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size()) throw std::invalid_argument("bad budget list: " + csv);
        out.push_back(v);
    }
    return out;
}

void apply_run_flags(const RunArgs& a, RunManifest& m) {
    if (!a.model.empty()) m.model = a.model;
    if (!a.traces.empty()) m.traces = a.traces;
    if (!a.report.empty()) m.output = a.report;
    if (!a.scorer.empty()) m.scorer = a.scorer;
    if (!a.budgets_csv.empty()) m.budgets = parse_budgets(a.budgets_csv);
    if (a.workers) m.workers = *a.workers;
    if (a.seed) m.synth.seed = *a.seed;
    if (a.num_samples) m.synth.num_samples = *a.num_samples;
    m.validate();
    if (m.output) require_parent(*m.output);
}

Bench make_bench(const std::string& mode, const RunManifest& m) {
    Bench b;
    if (m.scorer == "model") {
        if (!m.model) throw std::invalid_argument("scorer \"model\" needs a model path (--model or manifest)");
        require_file(*m.model, "model file");
    }
    if (mode == "synthetic") {
        auto data = gen_corpus(m.synth);
        auto retriever = std::make_unique<JaccardRetriever>();
        retriever->add_corpus(data.corpus);
        b.retriever = std::move(retriever);
        b.generator = std::make_unique<MockGenerator>(m.synth, std::move(data.truth));
        b.samples = std::move(data.samples);
    } else if (mode == "replay") {
        if (!m.traces) throw std::invalid_argument("replay mode needs a trace file (--traces or manifest)");
        require_file(*m.traces, "trace file");
        const auto records = read_traces(*m.traces);
        for (const auto& r : records) b.samples.push_back(r.sample);
        b.generator = std::make_unique<ReplayGenerator>(records);
        b.retriever = std::make_unique<EmptyRetriever>();
    } else {
        throw std::invalid_argument("--mode must be synthetic or replay");
    }
    if (m.scorer == "model") {
        b.scorer = std::make_unique<ModelScorer>(load_model(*m.model));
    } else if (m.scorer == "oracle") {
        b.scorer = std::make_unique<OracleScorer>();
    } else {
        b.scorer = std::make_unique<ConstantScorer>(m.constant_score);
    }
    return b;
}

void report_failures(const BenchmarkReport& r, std::ostream& err) {
    for (const auto& s : r.samples) {
        if (s.error) err << "sample " << s.id << " failed: " << *s.error << "\n";
    }
}

int cmd_run(const RunArgs& a, RunManifest m, std::ostream& out, std::ostream& err) {
    apply_run_flags(a, m);
    const auto bench = make_bench(a.mode, m);
    const auto report = run_benchmark(bench.samples, *bench.generator, *bench.retriever, *bench.scorer, m.run,
                                      m.budgets, m.workers);
    report_failures(report, err);
    if (m.output) write_file_atomic(*m.output, report_to_json(report));
    out << format_report_table(report);
    if (report.failures > 0) out << fmt::format("{} of {} samples failed\n", report.failures, bench.samples.size());
    return 0;
}

struct SweepArgs {
    RunArgs run;
    std::string sweep, grid;
};

int cmd_sweep(const SweepArgs& a, RunManifest m, std::ostream& out, std::ostream& err) {
    if (a.sweep != "t_rag" && a.sweep != "t_acc") throw std::invalid_argument("--sweep must be t_rag or t_acc");
    const auto grid = parse_grid(a.grid);
    apply_run_flags(a.run, m);
    const auto bench = make_bench(a.run.mode, m);
    const int budget = m.budgets.back();

    json rows = json::array();
    out << fmt::format("{:>10} {:>9} {:>9} {:>8}\n", a.sweep, "EM(%)", "ES(%)", "aART");
    for (double value : grid) {
        RunConfig cfg = m.run;
        const auto len = static_cast<std::size_t>(budget);
        // The threshold not being swept is held at 0. A t_acc of 0 never keeps
        // the earlier prediction, i.e. Select is off.
        const double t_rag = a.sweep == "t_rag" ? value : 0.0;
        const double t_acc = a.sweep == "t_acc" ? value : 0.0;
        if (t_acc <= 0.0) {
            cfg.schedule = ThresholdSchedule::uniform(len, t_rag, 1.0, m.run.schedule.epsilon);
            cfg.enable_select = false;
        } else {
            cfg.schedule = ThresholdSchedule::uniform(len, t_rag, t_acc, m.run.schedule.epsilon);
        }
        const auto r =
            run_benchmark(bench.samples, *bench.generator, *bench.retriever, *bench.scorer, cfg, {budget}, m.workers);
        report_failures(r, err);
        rows.push_back({{"threshold", value},
                        {"em", r.card_em[0]},
                        {"es", r.card_es[0]},
                        {"aart", r.card_aart[0]},
                        {"failures", r.failures}});
        out << fmt::format("{:>10.4g} {:>9.2f} {:>9.2f} {:>8.3f}\n", value, 100.0 * r.card_em[0],
                           100.0 * r.card_es[0], r.card_aart[0]);
    }
    if (m.output) {
        json j;
        j["sweep"] = a.sweep;
        j["budget"] = budget;
        j["rows"] = rows;
        write_file_atomic(*m.output, j.dump(2) + "\n");
    }
    return 0;
}

// ---- latency ----

struct LatencyArgs {
    std::optional<double> t_r, t_d, t_g0, t_gi;
    double art_single = 0.0;
    std::vector<double> art_marginal;
};

int cmd_latency(const LatencyArgs& a, RunManifest m, std::ostream& out) {
    LatencyParams p = m.latency;
    if (a.t_r) p.t_r = *a.t_r;
    if (a.t_d) p.t_d = *a.t_d;
    if (a.t_g0) p.t_g0 = *a.t_g0;
    if (a.t_gi) p.t_gi = *a.t_gi;
    const auto rows = latency_model(p, a.art_single, a.art_marginal);
    out << fmt::format("{:>5} {:>8} {:>12} {:>12} {:>8}\n", "iter", "ART(%)", "CARD(ms)", "RG(ms)", "RL(%)");
    for (const auto& r : rows) {
        out << fmt::format("{:>5} {:>8.1f} {:>12.1f} {:>12.1f} {:>8.1f}\n", r.iteration, 100.0 * r.art, r.card_ms,
                           r.baseline_ms, 100.0 * r.reduced);
    }
    return 0;
}

// ---- synth ----

struct SynthArgs {
    std::string out_dir, traces;
    std::optional<std::uint64_t> seed;
    std::optional<int> num_samples;
};

int cmd_synth(const SynthArgs& a, RunManifest m, std::ostream& out) {
    if (a.seed) m.synth.seed = *a.seed;
    if (a.num_samples) m.synth.num_samples = *a.num_samples;
    m.synth.validate();
    if (!a.traces.empty()) require_parent(a.traces);
    const auto data = gen_corpus(m.synth);
    materialize(data, a.out_dir);
    out << fmt::format("{} samples, {} corpus files -> {}\n", data.samples.size(), data.corpus.files.size(),
                       a.out_dir);
    if (a.traces.empty()) return 0;

    // Always-retrieve episodes: the raw material for estimator training.
    RunConfig cfg = m.run;
    cfg.enable_adaptive = false;
    cfg.enable_select = false;
    cfg.validate();
    JaccardRetriever retriever;
    retriever.add_corpus(data.corpus);
    const MockGenerator generator(m.synth, data.truth);
    const ConstantScorer unused(0.0);
    std::vector<TraceRecord> records;
    records.reserve(data.samples.size());
    for (const auto& s : data.samples) records.push_back({s, run_episode(s, generator, retriever, unused, cfg).episode});
    write_traces(records, a.traces);
    out << fmt::format("{} traces with {} generations each -> {}\n", records.size(), cfg.max_iter + 1, a.traces);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive retrieval critique: features, estimator training, benchmark runs and latency model",
                 "ragcrit"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string manifest_path;
    app.add_option("--manifest", manifest_path, "JSON manifest; command-line flags override its fields")
        ->check(CLI::ExistingFile);

    FeaturesArgs fa;
    auto* features = app.add_subcommand("features", "Extract per-iteration feature vectors from a trace file");
    features->add_option("--in", fa.in, "Trace JSONL")->required();
    features->add_option("--out", fa.out, "Feature JSONL")->required();
    features->add_option("--feature-set", fa.feature_set, "full | prob | entropy")->capture_default_str();
    features->add_flag("--label", fa.label, "Attach ES targets computed against the ground truth");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train the quality estimator on labeled features");
    train_cmd->add_option("--features", ta.features, "Labeled feature JSONL")->required();
    train_cmd->add_option("--model", ta.model, "Output model JSON")->required();
    train_cmd->add_option("--feature-set", ta.feature_set, "Needed only for unmarked 7-entry rows");
    train_cmd->add_option("--trees", ta.trees, "Number of boosting rounds");
    train_cmd->add_option("--lr", ta.lr, "Learning rate");
    train_cmd->add_option("--max-leaves", ta.max_leaves);
    train_cmd->add_option("--min-samples-leaf", ta.min_samples_leaf);
    train_cmd->add_option("--max-depth", ta.max_depth);
    train_cmd->add_option("--seed", ta.seed);

    ScoreArgs sa;
    auto* score = app.add_subcommand("score", "Predicted quality for every iteration of a trace file");
    score->add_option("--model", sa.model, "Model JSON")->required();
    score->add_option("--traces", sa.traces, "Trace JSONL")->required();
    score->add_option("--out", sa.out, "Output JSONL (default: standard output)");

    auto add_run_options = [](CLI::App* cmd, RunArgs& r) {
        cmd->add_option("--mode", r.mode, "synthetic | replay")->capture_default_str();
        cmd->add_option("--report", r.report, "Output report JSON");
        cmd->add_option("--model", r.model, "Model JSON");
        cmd->add_option("--traces", r.traces, "Trace JSONL for replay mode");
        cmd->add_option("--scorer", r.scorer, "model | oracle | constant");
        cmd->add_option("--budgets", r.budgets_csv, "Comma-separated ascending iteration budgets");
        cmd->add_option("--workers", r.workers, "Worker threads");
        cmd->add_option("--seed", r.seed, "Synthetic corpus seed");
        cmd->add_option("--num-samples", r.num_samples, "Synthetic sample count");
    };
    RunArgs ra;
    auto* run = app.add_subcommand("run", "Benchmark the critiqued pipeline against always-retrieve baselines");
    add_run_options(run, ra);

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep", "Vary one threshold uniformly, holding the other at 0");
    add_run_options(sweep, wa.run);
    sweep->add_option("--sweep", wa.sweep, "t_rag | t_acc")->required();
    sweep->add_option("--grid", wa.grid, "lo:hi:step")->required();

    LatencyArgs la;
    auto* latency = app.add_subcommand("latency", "Per-iteration latency and reduction versus always retrieving");
    latency->add_option("--t-r", la.t_r, "Retrieval time (ms)");
    latency->add_option("--art-single", la.art_single, "Retrieval rate of the first round")->required();
    latency->add_option("--art-marginal", la.art_marginal, "Retrieval rates of later rounds")->delimiter(',');
    latency->add_option("--t-d", la.t_d, "Estimator time (ms)");
    latency->add_option("--t-g0", la.t_g0, "Zero-shot generation time (ms)");
    latency->add_option("--t-gi", la.t_gi, "Retrieval-augmented generation time (ms)");

    SynthArgs ya;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus (and optionally always-retrieve traces)");
    synth->add_option("--out", ya.out_dir, "Output directory")->required();
    synth->add_option("--traces", ya.traces, "Also write always-retrieve traces here");
    synth->add_option("--seed", ya.seed);
    synth->add_option("--num-samples", ya.num_samples);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        RunManifest m = manifest_path.empty() ? RunManifest{} : load_manifest(manifest_path);
        if (app.got_subcommand(features)) return cmd_features(fa, out, err);
        if (app.got_subcommand(train_cmd)) return cmd_train(ta, m, out, err);
        if (app.got_subcommand(score)) return cmd_score(sa, out, err);
        if (app.got_subcommand(run)) return cmd_run(ra, std::move(m), out, err);
        if (app.got_subcommand(sweep)) return cmd_sweep(wa, std::move(m), out, err);
        if (app.got_subcommand(latency)) return cmd_latency(la, std::move(m), out);
        if (app.got_subcommand(synth)) return cmd_synth(ya, std::move(m), out);
    } catch (const CommandFailed&) {
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace ragcrit::cli
