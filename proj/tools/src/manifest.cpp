#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ragcrit/cli.hpp"

namespace ragcrit::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) throw ManifestError("unknown key \"" + key + "\" in " + where);
    }
}

const json& object_at(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_object()) throw ManifestError(std::string("\"") + key + "\" must be an object");
    return v;
}

template <typename T>
void read(const json& obj, const char* key, T& field, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        field = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ManifestError(where + "." + key + " has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path;
}

void read_run(const json& j, RunConfig& run) {
    const std::string where = "run";
    reject_unknown(j, {"max_iter", "mode", "enable_adaptive", "enable_select", "top_k", "query_window_lines",
                       "snippet_char_budget", "exclude_zero_shot_from_select", "truncate_for_metrics"},
                   where);
    read(j, "max_iter", run.max_iter, where);
    if (j.contains("mode")) {
        std::string mode;
        read(j, "mode", mode, where);
        if (mode == "single") {
            run.mode = RagMode::Single;
        } else if (mode == "iterative") {
            run.mode = RagMode::Iterative;
        } else {
            throw ManifestError("run.mode must be \"single\" or \"iterative\"");
        }
    }
    read(j, "enable_adaptive", run.enable_adaptive, where);
    read(j, "enable_select", run.enable_select, where);
    read(j, "top_k", run.top_k, where);
    read(j, "query_window_lines", run.query_window_lines, where);
    read(j, "snippet_char_budget", run.snippet_char_budget, where);
    read(j, "exclude_zero_shot_from_select", run.exclude_zero_shot_from_select, where);
    read(j, "truncate_for_metrics", run.truncate_for_metrics, where);
}

void read_schedule(const json& j, ThresholdSchedule& schedule) {
    const std::string where = "schedule";
    reject_unknown(j, {"preset", "t_rag", "t_acc", "epsilon"}, where);
    if (j.contains("preset")) {
        std::string preset;
        read(j, "preset", preset, where);
        if (preset == "line") {
            schedule = ThresholdSchedule::line_level();
        } else if (preset == "function") {
            schedule = ThresholdSchedule::function_level();
        } else {
            throw ManifestError("schedule.preset must be \"line\" or \"function\"");
        }
    }
    read(j, "t_rag", schedule.t_rag, where);
    read(j, "t_acc", schedule.t_acc, where);
    read(j, "epsilon", schedule.epsilon, where);
}

void read_synth(const json& j, SynthParams& s) {
    const std::string where = "synth";
    reject_unknown(j, {"seed", "num_samples", "lambda_lines", "helpful_fraction", "misleading_fraction",
                       "vocab_size_eff", "q_base", "q_boost", "noise_sigma", "misleading_penalty", "prompt_lines",
                       "max_gt_lines"},
                   where);
    read(j, "seed", s.seed, where);
    read(j, "num_samples", s.num_samples, where);
    read(j, "lambda_lines", s.lambda_lines, where);
    read(j, "helpful_fraction", s.helpful_fraction, where);
    read(j, "misleading_fraction", s.misleading_fraction, where);
    read(j, "vocab_size_eff", s.vocab_size_eff, where);
    read(j, "q_base", s.q_base, where);
    read(j, "q_boost", s.q_boost, where);
    read(j, "noise_sigma", s.noise_sigma, where);
    read(j, "misleading_penalty", s.misleading_penalty, where);
    read(j, "prompt_lines", s.prompt_lines, where);
    read(j, "max_gt_lines", s.max_gt_lines, where);
}

void read_latency(const json& j, LatencyParams& l) {
    const std::string where = "latency";
    reject_unknown(j, {"t_d", "t_r", "t_g0", "t_gi"}, where);
    read(j, "t_d", l.t_d, where);
    read(j, "t_r", l.t_r, where);
    read(j, "t_g0", l.t_g0, where);
    read(j, "t_gi", l.t_gi, where);
}

void read_train(const json& j, TrainParams& t) {
    const std::string where = "train";
    reject_unknown(j, {"num_trees", "learning_rate", "max_leaves", "min_samples_leaf", "max_depth", "seed"}, where);
    read(j, "num_trees", t.num_trees, where);
    read(j, "learning_rate", t.learning_rate, where);
    read(j, "max_leaves", t.max_leaves, where);
    read(j, "min_samples_leaf", t.min_samples_leaf, where);
    read(j, "max_depth", t.max_depth, where);
    read(j, "seed", t.seed, where);
}

}  // namespace

void RunManifest::validate() const {
    if (budgets.empty()) throw std::invalid_argument("budgets must not be empty");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] < 1) throw std::invalid_argument("budgets must be >= 1");
        if (i > 0 && budgets[i] <= budgets[i - 1]) throw std::invalid_argument("budgets must be strictly ascending");
    }
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (scorer != "model" && scorer != "oracle" && scorer != "constant") {
        throw std::invalid_argument("scorer must be \"model\", \"oracle\" or \"constant\"");
    }
    if (!(constant_score >= 0.0 && constant_score <= 1.0)) {
        throw std::invalid_argument("constant_score must lie in [0, 1]");
    }
    run.validate();
    const auto need = static_cast<std::size_t>(budgets.back());
    if (run.schedule.t_rag.size() < need || run.schedule.t_acc.size() < need) {
        throw std::invalid_argument("threshold schedule is shorter than the largest budget (" +
                                    std::to_string(need) + ")");
    }
    synth.validate();
    latency.validate();
    train.validate();
}

RunManifest manifest_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ManifestError("manifest must be a JSON object");
    reject_unknown(j, {"traces", "model", "output", "feature_set", "budgets", "workers", "scorer", "constant_score",
                       "run", "schedule", "synth", "latency", "train"},
                   "manifest");

    RunManifest m;
    const std::string where = "manifest";
    auto path_field = [&](const char* key, std::optional<std::filesystem::path>& field) {
        if (!j.contains(key)) return;
        std::string p;
        read(j, key, p, where);
        field = resolve(base_dir, p);
    };
    path_field("traces", m.traces);
    path_field("model", m.model);
    path_field("output", m.output);
    if (j.contains("feature_set")) {
        std::string name;
        read(j, "feature_set", name, where);
        const auto set = parse_feature_set(name);
        if (!set) throw ManifestError("feature_set must be full, prob or entropy");
        m.feature_set = *set;
    }
    read(j, "budgets", m.budgets, where);
    read(j, "workers", m.workers, where);
    read(j, "scorer", m.scorer, where);
    read(j, "constant_score", m.constant_score, where);
    if (j.contains("run")) read_run(object_at(j, "run"), m.run);
    if (j.contains("schedule")) read_schedule(object_at(j, "schedule"), m.run.schedule);
    if (j.contains("synth")) read_synth(object_at(j, "synth"), m.synth);
    if (j.contains("latency")) read_latency(object_at(j, "latency"), m.latency);
    if (j.contains("train")) read_train(object_at(j, "train"), m.train);
    return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return manifest_from_json(buf.str(), path.parent_path());
}

std::string manifest_to_json(const RunManifest& m) {
    json j;
    if (m.traces) j["traces"] = m.traces->generic_string();
    if (m.model) j["model"] = m.model->generic_string();
    if (m.output) j["output"] = m.output->generic_string();
    j["feature_set"] = std::string(to_string(m.feature_set));
    j["budgets"] = m.budgets;
    j["workers"] = m.workers;
    j["scorer"] = m.scorer;
    j["constant_score"] = m.constant_score;
    j["run"] = {{"max_iter", m.run.max_iter},
                {"mode", m.run.mode == RagMode::Iterative ? "iterative" : "single"},
                {"enable_adaptive", m.run.enable_adaptive},
                {"enable_select", m.run.enable_select},
                {"top_k", m.run.top_k},
                {"query_window_lines", m.run.query_window_lines},
                {"snippet_char_budget", m.run.snippet_char_budget},
                {"exclude_zero_shot_from_select", m.run.exclude_zero_shot_from_select},
                {"truncate_for_metrics", m.run.truncate_for_metrics}};
    j["schedule"] = {{"t_rag", m.run.schedule.t_rag},
                     {"t_acc", m.run.schedule.t_acc},
                     {"epsilon", m.run.schedule.epsilon}};
    const auto& s = m.synth;
    j["synth"] = {{"seed", s.seed},
                  {"num_samples", s.num_samples},
                  {"lambda_lines", s.lambda_lines},
                  {"helpful_fraction", s.helpful_fraction},
                  {"misleading_fraction", s.misleading_fraction},
                  {"vocab_size_eff", s.vocab_size_eff},
                  {"q_base", s.q_base},
                  {"q_boost", s.q_boost},
                  {"noise_sigma", s.noise_sigma},
                  {"misleading_penalty", s.misleading_penalty},
                  {"prompt_lines", s.prompt_lines},
                  {"max_gt_lines", s.max_gt_lines}};
    j["latency"] = {{"t_d", m.latency.t_d}, {"t_r", m.latency.t_r}, {"t_g0", m.latency.t_g0}, {"t_gi", m.latency.t_gi}};
    const auto& t = m.train;
    j["train"] = {{"num_trees", t.num_trees},
                  {"learning_rate", t.learning_rate},
                  {"max_leaves", t.max_leaves},
                  {"min_samples_leaf", t.min_samples_leaf},
                  {"max_depth", t.max_depth},
                  {"seed", t.seed}};
    return j.dump(2);
}

std::vector<double> parse_grid(std::string_view spec) {
    const auto c1 = spec.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
    if (c2 == std::string_view::npos || spec.find(':', c2 + 1) != std::string_view::npos) {
        throw std::invalid_argument("grid must look like lo:hi:step");
    }
    auto number = [&](std::string_view part) {
        const std::string s(part);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size() || !std::isfinite(v)) {
            throw std::invalid_argument("grid component is not a number: \"" + s + "\"");
        }
        return v;
    };
    const double lo = number(spec.substr(0, c1));
    const double hi = number(spec.substr(c1 + 1, c2 - c1 - 1));
    const double step = number(spec.substr(c2 + 1));
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be > 0");
    if (hi < lo) throw std::invalid_argument("grid upper bound is below the lower bound");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 100000) throw std::invalid_argument("grid has too many points");
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        // Rounded to 12 decimals so 0.05 steps print and compare as written.
        out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    }
    return out;
}

}  // namespace ragcrit::cli
