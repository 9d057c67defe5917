#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ragcrit/estimator.hpp"
#include "ragcrit/features.hpp"
#include "ragcrit/orchestrator.hpp"
#include "ragcrit/simkit.hpp"

namespace ragcrit::cli {

/// Everything a run, sweep or synth invocation needs, read from one JSON file.
/// Relative paths in the file resolve against the file's directory.
struct RunManifest {
    std::optional<std::filesystem::path> traces;
    std::optional<std::filesystem::path> model;
    std::optional<std::filesystem::path> output;

    FeatureSet feature_set = FeatureSet::Full;
    std::vector<int> budgets{1, 2, 3, 4};
    unsigned workers = 1;
    /// "model", "oracle" or "constant".
    std::string scorer = "model";
    double constant_score = 0.0;

    RunConfig run;
    SynthParams synth;
    LatencyParams latency;
    TrainParams train;

    /// Throws std::invalid_argument describing the first problem found.
    void validate() const;
};

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown keys are rejected so typos do not silently fall back to defaults.
RunManifest manifest_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const RunManifest& manifest);

/// "lo:hi:step", inclusive of hi up to rounding.
std::vector<double> parse_grid(std::string_view spec);

/// Entry point shared by the executable and the tests. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ragcrit::cli
