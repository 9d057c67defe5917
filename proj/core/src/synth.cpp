#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ragcrit/simkit.hpp"

namespace ragcrit {

void SynthParams::validate() const {
    if (num_samples < 0) throw std::invalid_argument("num_samples must be >= 0");
    if (!(lambda_lines > 0.0)) throw std::invalid_argument("lambda_lines must be > 0");
    auto fraction = [](double f, const char* name) {
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    };
    fraction(helpful_fraction, "helpful_fraction");
    fraction(misleading_fraction, "misleading_fraction");
    if (helpful_fraction + misleading_fraction > 1.0 + 1e-12) {
        throw std::invalid_argument("helpful_fraction + misleading_fraction must not exceed 1");
    }
    if (vocab_size_eff < 2) throw std::invalid_argument("vocab_size_eff must be >= 2");
    if (q_base < 0.0 || q_boost < 0.0 || q_base + q_boost > 0.99) {
        throw std::invalid_argument("need q_base, q_boost >= 0 and q_base + q_boost <= 0.99");
    }
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (!(misleading_penalty >= 0.0)) throw std::invalid_argument("misleading_penalty must be >= 0");
    if (prompt_lines < 1) throw std::invalid_argument("prompt_lines must be >= 1");
    if (max_gt_lines < 1) throw std::invalid_argument("max_gt_lines must be >= 1");
}

double clipped_poisson_mean(double lambda, int cap) {
    double p = std::exp(-lambda);
    double cdf = 0.0;
    double mean = 0.0;
    for (int k = 0; k < cap; ++k) {
        mean += k * p;
        cdf += p;
        p *= lambda / (k + 1);
    }
    return mean + cap * (1.0 - cdf);
}

namespace {

constexpr const char* kKeywords[] = {"def",  "return", "self", "if",   "for",   "in",
                                     "not",  "None",   "import", "from", "class", "with"};
constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ta", "ne", "su", "ri", "po", "da", "ve",
                                      "xo", "ju", "be", "fa", "gi", "hu", "zo", "ce", "wy", "qu"};
constexpr std::size_t kWordCount = 3000;

class LineMaker {
public:
    explicit LineMaker(SimRng& rng) : rng_(rng) {
        words_.reserve(kWordCount);
        for (std::size_t i = 0; i < kWordCount; ++i) {
            std::string w;
            std::size_t v = i + 20;
            while (v > 0) {
                w += kSyllables[v % 20];
                v /= 20;
            }
            words_.push_back(std::move(w));
        }
    }

    const std::string& word() { return words_[rng_.below(words_.size())]; }

    std::string token() {
        if (rng_.bernoulli(0.3)) return kKeywords[rng_.below(std::size(kKeywords))];
        return word();
    }

    std::string line() {
        std::string out(4 * rng_.below(3), ' ');
        const auto n = 3 + rng_.below(5);
        for (std::uint64_t i = 0; i < n; ++i) {
            if (i > 0) out += ' ';
            out += token();
        }
        return out;
    }

    std::vector<std::string> lines(std::size_t n) {
        std::vector<std::string> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(line());
        return out;
    }

    /// Replaces each word of `src` with probability `rate`; at least one word changes.
    std::string mutate(const std::string& src, double rate) {
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t i = 0; i < src.size();) {
            if (src[i] == ' ') {
                ++i;
                continue;
            }
            const auto j = src.find(' ', i);
            const auto end = j == std::string::npos ? src.size() : j;
            spans.emplace_back(i, end);
            i = end;
        }
        const std::size_t forced = spans.empty() ? 0 : rng_.below(spans.size());
        std::string out;
        std::size_t pos = 0;
        for (std::size_t s = 0; s < spans.size(); ++s) {
            out.append(src, pos, spans[s].first - pos);
            const std::string orig = src.substr(spans[s].first, spans[s].second - spans[s].first);
            const bool replace = rng_.bernoulli(rate);
            if (replace || s == forced) {
                std::string w = word();
                while (w == orig) w = word();
                out += w;
            } else {
                out += orig;
            }
            pos = spans[s].second;
        }
        out.append(src, pos, std::string::npos);
        return out;
    }

private:
    SimRng& rng_;
    std::vector<std::string> words_;
};

std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        out += lines[i];
        if (i + 1 < to) out += '\n';
    }
    return out;
}

void append(std::vector<std::string>& dst, const std::vector<std::string>& src, std::size_t from, std::size_t to) {
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(from), src.begin() + static_cast<std::ptrdiff_t>(to));
}

}  // namespace

SyntheticData gen_corpus(const SynthParams& params) {
    params.validate();
    SimRng rng(params.seed ^ 0x5eed5eed5eedULL);
    LineMaker maker(rng);
    SyntheticData data;
    data.corpus.name = "synth";

    const int background = std::max(20, params.num_samples / 5);
    for (int f = 0; f < background; ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "lib/mod_%04d.py", f);
        data.corpus.files[name] = maker.lines(60);
    }

    const auto prompt_lines = static_cast<std::size_t>(params.prompt_lines);
    for (int i = 0; i < params.num_samples; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "s%05d", i);
        const auto n_gt = 1 + std::min(rng.poisson(params.lambda_lines), params.max_gt_lines - 1);
        auto context = maker.lines(prompt_lines);
        auto gt = maker.lines(static_cast<std::size_t>(n_gt));

        CompletionSample sample;
        sample.id = id;
        sample.prompt = join_lines(context, 0, context.size()) + "\n";
        sample.ground_truth = join_lines(gt, 0, gt.size());
        sample.corpus_ref = data.corpus.name;

        SampleTruth truth;
        truth.gt_lines = gt;
        const double u = rng.uniform();
        if (u < params.helpful_fraction) {
            // A copy of the continuation elsewhere, sharing only a few context lines.
            truth.kind = SampleKind::Helpful;
            std::vector<std::string> file = maker.lines(rng.below(10));
            append(file, context, prompt_lines - std::min<std::size_t>(4, prompt_lines), prompt_lines);
            append(file, gt, 0, gt.size());
            append(file, maker.lines(8), 0, 8);
            data.corpus.files["copies/" + sample.id + ".py"] = std::move(file);
        } else if (u < params.helpful_fraction + params.misleading_fraction) {
            // A near-duplicate of the context that continues differently.
            truth.kind = SampleKind::Misleading;
            std::vector<std::string> decoy;
            for (const auto& l : gt) decoy.push_back(maker.mutate(l, 0.6));
            truth.decoy_marker = decoy.front();
            std::vector<std::string> file = maker.lines(rng.below(10));
            append(file, context, prompt_lines - std::min<std::size_t>(12, prompt_lines), prompt_lines);
            append(file, decoy, 0, decoy.size());
            append(file, maker.lines(8), 0, 8);
            data.corpus.files["vendor/" + sample.id + ".py"] = std::move(file);
        }
        data.truth.emplace(sample.id, std::move(truth));
        data.samples.push_back(std::move(sample));
    }
    return data;
}

std::string sample_to_json_line(const CompletionSample& sample) {
    nlohmann::json j;
    j["id"] = sample.id;
    j["prompt"] = sample.prompt;
    j["ground_truth"] = sample.ground_truth;
    if (sample.corpus_ref) j["corpus_ref"] = *sample.corpus_ref;
    return j.dump();
}

std::vector<CompletionSample> read_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open samples file: " + path.string());
    std::vector<CompletionSample> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw TraceFormatError(no, std::string("JSON parse error: ") + e.what());
        }
        auto str = [&](const char* key) {
            if (!j.contains(key) || !j[key].is_string()) {
                throw TraceFormatError(no, std::string("missing string \"") + key + "\"");
            }
            return j[key].get<std::string>();
        };
        CompletionSample s;
        s.id = str("id");
        if (s.id.empty()) throw TraceFormatError(no, "sample id is empty");
        s.prompt = str("prompt");
        s.ground_truth = str("ground_truth");
        if (j.contains("corpus_ref")) s.corpus_ref = str("corpus_ref");
        out.push_back(std::move(s));
    }
    return out;
}

void materialize(const SyntheticData& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const auto root = dir / "corpus" / data.corpus.name;
    for (const auto& [name, lines] : data.corpus.files) {
        const auto path = root / name;
        fs::create_directories(path.parent_path());
        std::string body;
        for (const auto& l : lines) {
            body += l;
            body += '\n';
        }
        write_file_atomic(path, body);
    }
    std::string samples;
    for (const auto& s : data.samples) {
        samples += sample_to_json_line(s);
        samples += '\n';
    }
    fs::create_directories(dir);
    write_file_atomic(dir / "samples.jsonl", samples);
}

Corpus load_corpus(const std::filesystem::path& dir, std::string name) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
    Corpus corpus;
    corpus.name = std::move(name);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path());
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        corpus.files[fs::relative(entry.path(), dir).generic_string()] = std::move(lines);
    }
    return corpus;
}

}  // namespace ragcrit
