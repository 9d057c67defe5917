#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ragcrit {

/// Full logits row for one decoding step plus the index of the emitted token.
struct LogitsStep {
    std::vector<double> logits;
    std::size_t chosen = 0;

    bool operator==(const LogitsStep&) const = default;
};

/// Summarized step: probability of the emitted token and the entropy of the
/// step distribution in nats. Enough for every statistical feature.
struct SummaryStep {
    double chosen_prob = 1.0;
    double entropy_nats = 0.0;

    bool operator==(const SummaryStep&) const = default;
};

using StepDistribution = std::variant<LogitsStep, SummaryStep>;

enum class StepForm { Logits, Summary };

struct PredictionTrace {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<StepDistribution> steps;

    std::size_t size() const noexcept { return steps.size(); }
    bool empty() const noexcept { return steps.empty(); }

    bool operator==(const PredictionTrace&) const = default;
};

struct CompletionSample {
    std::string id;
    std::string prompt;
    std::string ground_truth;
    std::optional<std::string> corpus_ref;

    bool operator==(const CompletionSample&) const = default;
};

struct IterationRecord {
    int index = 0;
    PredictionTrace trace;
    bool retrieved = false;
    std::optional<std::vector<std::string>> snippet_ids;

    bool operator==(const IterationRecord&) const = default;
};

struct EpisodeRecord {
    std::string sample_id;
    std::vector<IterationRecord> iterations;

    bool operator==(const EpisodeRecord&) const = default;
};

/// One line of a trace file.
struct TraceRecord {
    CompletionSample sample;
    EpisodeRecord episode;

    bool operator==(const TraceRecord&) const = default;
};

/// Raised for any malformed or invalid trace line. `line()` is 1-based, 0 when
/// the error is not tied to a line (e.g. validation of an in-memory value).
class TraceFormatError : public std::runtime_error {
public:
    TraceFormatError(std::size_t line, const std::string& reason);

    std::size_t line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

/// Throws std::invalid_argument when a step violates its form's invariants.
void validate(const StepDistribution& step);
/// Token/step count agreement, uniform step form, per-step invariants.
void validate(const PredictionTrace& trace);
/// Sample id nonempty, contiguous iteration indices, every trace valid.
void validate(const TraceRecord& record);

/// Form shared by all steps, nullopt for an empty trace.
std::optional<StepForm> step_form(const PredictionTrace& trace);

std::string to_json_line(const TraceRecord& record);
/// Parses one JSONL line. `line_number` is only used for diagnostics.
TraceRecord parse_trace_line(const std::string& line, std::size_t line_number = 0);

/// Streams records from a trace JSONL file in file order. Blank lines are
/// skipped; the first malformed line raises TraceFormatError.
class TraceReader {
public:
    explicit TraceReader(const std::filesystem::path& path);

    std::optional<TraceRecord> next();
    std::size_t line_number() const noexcept { return line_no_; }

private:
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

std::vector<TraceRecord> read_traces(const std::filesystem::path& path);

/// Writes all records to `path` via a temporary file renamed on success.
void write_traces(const std::vector<TraceRecord>& records, const std::filesystem::path& path);

/// Writes `contents` to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ragcrit
