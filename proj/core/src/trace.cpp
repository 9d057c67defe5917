#include "ragcrit/trace.hpp"

#include <cmath>
#include <system_error>

#include <json.hpp>

namespace ragcrit {

using nlohmann::json;

TraceFormatError::TraceFormatError(std::size_t line, const std::string& reason)
    : std::runtime_error(line == 0 ? reason : "line " + std::to_string(line) + ": " + reason),
      line_(line),
      reason_(reason) {}

void validate(const StepDistribution& step) {
    if (const auto* l = std::get_if<LogitsStep>(&step)) {
        if (l->logits.size() < 2) {
            throw std::invalid_argument("logits row must have at least 2 entries");
        }
        if (l->chosen >= l->logits.size()) {
            throw std::invalid_argument("chosen index " + std::to_string(l->chosen) +
                                        " out of range for logits row of length " +
                                        std::to_string(l->logits.size()));
        }
        for (double v : l->logits) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");
        }
        return;
    }
    const auto& s = std::get<SummaryStep>(step);
    if (!(s.chosen_prob > 0.0 && s.chosen_prob <= 1.0)) {
        throw std::invalid_argument("chosen probability must lie in (0, 1]");
    }
    if (!(s.entropy_nats >= 0.0) || !std::isfinite(s.entropy_nats)) {
        throw std::invalid_argument("entropy must be finite and nonnegative");
    }
}

std::optional<StepForm> step_form(const PredictionTrace& trace) {
    if (trace.steps.empty()) return std::nullopt;
    return std::holds_alternative<LogitsStep>(trace.steps.front()) ? StepForm::Logits
                                                                    : StepForm::Summary;
}

void validate(const PredictionTrace& trace) {
    if (trace.tokens.size() != trace.steps.size()) {
        throw std::invalid_argument("tokens length " + std::to_string(trace.tokens.size()) +
                                    " differs from steps length " +
                                    std::to_string(trace.steps.size()));
    }
    const auto form = step_form(trace);
    for (const auto& step : trace.steps) {
        const auto f = std::holds_alternative<LogitsStep>(step) ? StepForm::Logits : StepForm::Summary;
        if (f != *form) throw std::invalid_argument("steps mix logits and summary forms");
        validate(step);
    }
}

void validate(const TraceRecord& record) {
    if (record.sample.id.empty()) throw std::invalid_argument("sample id is empty");
    for (std::size_t i = 0; i < record.episode.iterations.size(); ++i) {
        const auto& it = record.episode.iterations[i];
        if (it.index != static_cast<int>(i)) {
            throw std::invalid_argument("iteration indices must be 0..k contiguous; position " +
                                        std::to_string(i) + " has index " +
                                        std::to_string(it.index));
        }
        validate(it.trace);
    }
}

namespace {

json iteration_to_json(const IterationRecord& it) {
    json j;
    j["index"] = it.index;
    j["text"] = it.trace.text;
    j["tokens"] = it.trace.tokens;
    j["retrieved"] = it.retrieved;
    if (step_form(it.trace) == StepForm::Logits) {
        json logits = json::array();
        json chosen = json::array();
        for (const auto& s : it.trace.steps) {
            const auto& l = std::get<LogitsStep>(s);
            logits.push_back(l.logits);
            chosen.push_back(l.chosen);
        }
        j["logits"] = std::move(logits);
        j["chosen"] = std::move(chosen);
    } else {
        json probs = json::array();
        json ents = json::array();
        for (const auto& s : it.trace.steps) {
            const auto& sm = std::get<SummaryStep>(s);
            probs.push_back(sm.chosen_prob);
            ents.push_back(sm.entropy_nats);
        }
        j["probs"] = std::move(probs);
        j["entropies"] = std::move(ents);
    }
    if (it.snippet_ids) j["snippet_ids"] = *it.snippet_ids;
    return j;
}

const json& require(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw TraceFormatError(line, std::string("missing key \"") + key + "\"");
    return *it;
}

std::string get_string(const json& obj, const char* key, std::size_t line) {
    const auto& v = require(obj, key, line);
    if (!v.is_string()) throw TraceFormatError(line, std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
}

std::vector<double> get_numbers(const json& v, const std::string& what, std::size_t line) {
    if (!v.is_array()) throw TraceFormatError(line, "\"" + what + "\" must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) throw TraceFormatError(line, "\"" + what + "\" must contain numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

IterationRecord iteration_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw TraceFormatError(line, "iteration must be an object");
    IterationRecord it;
    const auto& idx = require(j, "index", line);
    if (!idx.is_number_integer()) throw TraceFormatError(line, "\"index\" must be an integer");
    it.index = idx.get<int>();
    it.trace.text = get_string(j, "text", line);
    const auto& toks = require(j, "tokens", line);
    if (!toks.is_array()) throw TraceFormatError(line, "\"tokens\" must be an array");
    for (const auto& t : toks) {
        if (!t.is_string()) throw TraceFormatError(line, "\"tokens\" must contain strings");
        it.trace.tokens.push_back(t.get<std::string>());
    }
    const auto& retrieved = require(j, "retrieved", line);
    if (!retrieved.is_boolean()) throw TraceFormatError(line, "\"retrieved\" must be a boolean");
    it.retrieved = retrieved.get<bool>();

    const bool has_summary = j.contains("probs") || j.contains("entropies");
    const bool has_logits = j.contains("logits") || j.contains("chosen");
    if (has_summary == has_logits) {
        throw TraceFormatError(line, has_summary
                                         ? "both summary (probs/entropies) and logits forms present"
                                         : "neither summary (probs/entropies) nor logits form present");
    }
    const auto n_tokens = it.trace.tokens.size();
    auto check_len = [&](std::size_t n, const char* key) {
        if (n != n_tokens) {
            throw TraceFormatError(line, std::string("\"") + key + "\" has length " + std::to_string(n) +
                                             " but \"tokens\" has length " + std::to_string(n_tokens));
        }
    };
    if (has_summary) {
        auto probs = get_numbers(require(j, "probs", line), "probs", line);
        auto ents = get_numbers(require(j, "entropies", line), "entropies", line);
        check_len(probs.size(), "probs");
        check_len(ents.size(), "entropies");
        for (std::size_t t = 0; t < probs.size(); ++t) {
            it.trace.steps.emplace_back(SummaryStep{probs[t], ents[t]});
        }
    } else {
        const auto& rows = require(j, "logits", line);
        const auto& chosen = require(j, "chosen", line);
        if (!rows.is_array()) throw TraceFormatError(line, "\"logits\" must be an array of arrays");
        if (!chosen.is_array()) throw TraceFormatError(line, "\"chosen\" must be an array");
        check_len(rows.size(), "logits");
        check_len(chosen.size(), "chosen");
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (!chosen[t].is_number_unsigned()) {
                throw TraceFormatError(line, "\"chosen\" must contain nonnegative integers");
            }
            it.trace.steps.emplace_back(
                LogitsStep{get_numbers(rows[t], "logits", line), chosen[t].get<std::size_t>()});
        }
    }
    if (auto sn = j.find("snippet_ids"); sn != j.end()) {
        if (!sn->is_array()) throw TraceFormatError(line, "\"snippet_ids\" must be an array");
        std::vector<std::string> ids;
        for (const auto& s : *sn) {
            if (!s.is_string()) throw TraceFormatError(line, "\"snippet_ids\" must contain strings");
            ids.push_back(s.get<std::string>());
        }
        it.snippet_ids = std::move(ids);
    }
    return it;
}

}  // namespace

std::string to_json_line(const TraceRecord& record) {
    json j;
    j["id"] = record.sample.id;
    j["prompt"] = record.sample.prompt;
    j["ground_truth"] = record.sample.ground_truth;
    if (record.sample.corpus_ref) j["corpus_ref"] = *record.sample.corpus_ref;
    json iters = json::array();
    for (const auto& it : record.episode.iterations) iters.push_back(iteration_to_json(it));
    j["iterations"] = std::move(iters);
    return j.dump();
}

TraceRecord parse_trace_line(const std::string& line, std::size_t line_number) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw TraceFormatError(line_number, std::string("JSON parse error: ") + e.what());
    }
    if (!j.is_object()) throw TraceFormatError(line_number, "record must be a JSON object");

    TraceRecord rec;
    rec.sample.id = get_string(j, "id", line_number);
    rec.sample.prompt = get_string(j, "prompt", line_number);
    rec.sample.ground_truth = get_string(j, "ground_truth", line_number);
    if (j.contains("corpus_ref")) rec.sample.corpus_ref = get_string(j, "corpus_ref", line_number);
    rec.episode.sample_id = rec.sample.id;
    const auto& iters = require(j, "iterations", line_number);
    if (!iters.is_array()) throw TraceFormatError(line_number, "\"iterations\" must be an array");
    for (const auto& it : iters) rec.episode.iterations.push_back(iteration_from_json(it, line_number));

    try {
        validate(rec);
    } catch (const std::invalid_argument& e) {
        throw TraceFormatError(line_number, e.what());
    }
    return rec;
}

TraceReader::TraceReader(const std::filesystem::path& path) : in_(path) {
    if (!in_) throw std::runtime_error("cannot open trace file: " + path.string());
}

std::optional<TraceRecord> TraceReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        return parse_trace_line(line, line_no_);
    }
    return std::nullopt;
}

std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
    TraceReader reader(path);
    std::vector<TraceRecord> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                                 ec.message());
    }
}

void write_traces(const std::vector<TraceRecord>& records, const std::filesystem::path& path) {
    std::string buf;
    for (const auto& r : records) {
        validate(r);
        buf += to_json_line(r);
        buf += '\n';
    }
    write_file_atomic(path, buf);
}

}  // namespace ragcrit
