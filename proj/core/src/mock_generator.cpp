#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ragcrit/simkit.hpp"

namespace ragcrit {

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> sa(a), sb(b);
    std::sort(sa.begin(), sa.end());
    sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
    std::sort(sb.begin(), sb.end());
    sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (std::size_t i = 0, j = 0; i < sa.size() && j < sb.size();) {
        if (sa[i] < sb[j]) {
            ++i;
        } else if (sb[j] < sa[i]) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

namespace {

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) out.emplace_back(text.substr(start));
            break;
        }
        out.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

/// Splits text into pieces of (leading whitespace, word) so concatenation
/// reproduces the text exactly.
std::vector<std::pair<std::string, std::string>> pieces_of(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto ws_end = std::min(text.find_first_not_of(" \t\n", i), text.size());
        const auto word_end = std::min(text.find_first_of(" \t\n", ws_end), text.size());
        if (ws_end == text.size() && !out.empty()) {
            out.back().second += std::string(text.substr(i));
            break;
        }
        out.emplace_back(std::string(text.substr(i, ws_end - i)), std::string(text.substr(ws_end, word_end - ws_end)));
        i = word_end;
    }
    return out;
}

constexpr const char* kNoiseSyllables[] = {"ba", "ko", "ly", "mu", "ni", "os", "pe", "ru", "si", "tu"};

std::string corrupt(const std::string& word, SimRng& rng) {
    std::string out;
    do {
        out.clear();
        const auto n = 2 + rng.below(2);
        for (std::uint64_t k = 0; k < n; ++k) out += kNoiseSyllables[rng.below(std::size(kNoiseSyllables))];
    } while (out == word);
    return out;
}

}  // namespace

MockGenerator::MockGenerator(SynthParams params, std::unordered_map<std::string, SampleTruth> truth)
    : params_(params), truth_(std::move(truth)) {
    params_.validate();
}

double MockGenerator::two_bucket_entropy(double p, int vocab_size_eff) {
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log((1.0 - p) / (vocab_size_eff - 1));
    return std::max(h, 0.0);
}

double MockGenerator::relevance(const SampleTruth& truth, const std::vector<RetrievedSnippet>& snippets) const {
    if (truth.gt_lines.empty()) return 0.0;
    std::vector<std::string> gt_tokens;
    for (const auto& l : truth.gt_lines) {
        auto toks = lexical_tokens(l);
        gt_tokens.insert(gt_tokens.end(), toks.begin(), toks.end());
    }
    const std::size_t span = truth.gt_lines.size();
    double best = 0.0;
    for (const auto& s : snippets) {
        std::vector<std::vector<std::string>> line_tokens;
        for (const auto& l : split_lines(s.text)) line_tokens.push_back(lexical_tokens(l));
        const std::size_t last_start = line_tokens.size() > span ? line_tokens.size() - span : 0;
        for (std::size_t start = 0; start <= last_start; ++start) {
            std::vector<std::string> window;
            for (std::size_t k = start; k < std::min(start + span, line_tokens.size()); ++k) {
                window.insert(window.end(), line_tokens[k].begin(), line_tokens[k].end());
            }
            best = std::max(best, jaccard(window, gt_tokens));
        }
    }
    return best;
}

bool MockGenerator::is_misleading(const SampleTruth& truth, const std::vector<RetrievedSnippet>& snippets) const {
    if (truth.decoy_marker.empty()) return false;
    return std::any_of(snippets.begin(), snippets.end(), [&](const RetrievedSnippet& s) {
        return s.text.find(truth.decoy_marker) != std::string::npos;
    });
}

double MockGenerator::effective_quality(const SampleTruth& truth,
                                        const std::vector<RetrievedSnippet>& snippets) const {
    double q = params_.q_base + params_.q_boost * relevance(truth, snippets);
    if (is_misleading(truth, snippets)) q -= params_.misleading_penalty;
    return std::clamp(q, 0.01, 0.99);
}

PredictionTrace MockGenerator::complete(const GenerationRequest& request) const {
    const auto found = truth_.find(std::string(request.sample_id));
    if (found == truth_.end()) {
        throw std::invalid_argument("mock generator has no ground truth for sample " + std::string(request.sample_id));
    }
    const auto& truth = found->second;
    static const std::vector<RetrievedSnippet> kNone;
    const auto& snippets = request.snippets ? *request.snippets : kNone;

    std::uint64_t h = hash_bytes(std::string_view(reinterpret_cast<const char*>(&params_.seed), sizeof params_.seed));
    h = hash_bytes(request.prompt, h);
    for (const auto& s : snippets) {
        h = hash_bytes("\x1f", h);
        h = hash_bytes(s.id, h);
        h = hash_bytes("\x1e", h);
        h = hash_bytes(s.text, h);
    }
    SimRng rng(h);

    const double q = effective_quality(truth, snippets);
    std::string gt_text;
    for (std::size_t i = 0; i < truth.gt_lines.size(); ++i) {
        if (i > 0) gt_text += '\n';
        gt_text += truth.gt_lines[i];
    }

    PredictionTrace trace;
    for (const auto& [ws, word] : pieces_of(gt_text)) {
        const bool correct = rng.bernoulli(q);
        std::string token = ws + (correct || word.empty() ? word : corrupt(word, rng));
        const double p = std::clamp(q + rng.normal(0.0, params_.noise_sigma), 0.01, 0.99);
        trace.text += token;
        trace.tokens.push_back(std::move(token));
        trace.steps.emplace_back(SummaryStep{p, two_bucket_entropy(p, params_.vocab_size_eff)});
    }
    return trace;
}

ReplayGenerator::ReplayGenerator(const std::vector<TraceRecord>& records) {
    for (const auto& r : records) {
        auto& log = logs_[r.sample.id];
        log.clear();
        for (const auto& it : r.episode.iterations) log.push_back(it.trace);
    }
}

PredictionTrace ReplayGenerator::complete(const GenerationRequest& request) const {
    const auto it = logs_.find(std::string(request.sample_id));
    if (it == logs_.end()) throw std::runtime_error("no logged iterations for this sample");
    const auto i = static_cast<std::size_t>(request.iteration);
    if (i >= it->second.size()) {
        throw std::runtime_error("replay trace exhausted: generation " + std::to_string(i) + " requested, " +
                                 std::to_string(it->second.size()) + " logged");
    }
    return it->second[i];
}

}  // namespace ragcrit
