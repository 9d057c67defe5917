#include "ragcrit/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace ragcrit {

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    constexpr char32_t kReplacement = 0xFFFD;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        char32_t min_cp = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
            min_cp = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
            min_cp = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
            min_cp = 0x10000;
        } else {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        bool ok = i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
            } else {
                cp = (cp << 6) | (b & 0x3F);
            }
        }
        if (ok && (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
        if (!ok) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    // Two-row DP with the shorter string on the inner axis.
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
            diag = up;
        }
    }
    return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein(std::u32string_view(decode_utf8(a)), std::u32string_view(decode_utf8(b)));
}

double edit_similarity(std::string_view y, std::string_view y_hat) {
    const auto a = decode_utf8(y);
    const auto b = decode_utf8(y_hat);
    const auto longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    const auto dist = levenshtein(a, b);
    return 1.0 - static_cast<double>(dist) / static_cast<double>(longest);
}

std::string normalize_for_match(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (true) {
        const auto nl = s.find('\n', start);
        auto line = s.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        const auto end = line.find_last_not_of(" \t\r\f\v");
        lines.push_back(end == std::string_view::npos ? std::string_view{} : line.substr(0, end + 1));
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out += '\n';
        out += lines[i];
    }
    return out;
}

bool exact_match(std::string_view y, std::string_view y_hat) {
    return normalize_for_match(y) == normalize_for_match(y_hat);
}

std::size_t count_lines(std::string_view s) {
    if (s.empty()) return 0;
    auto n = static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
    return s.back() == '\n' ? n : n + 1;
}

std::string truncate_lines(std::string_view s, std::size_t max_lines) {
    std::size_t pos = 0;
    for (std::size_t k = 0; k < max_lines; ++k) {
        const auto nl = s.find('\n', pos);
        if (nl == std::string_view::npos) return std::string(s);
        pos = nl + 1;
    }
    // Drop the newline that terminates the last kept line.
    return std::string(s.substr(0, pos == 0 ? 0 : pos - 1));
}

MetricValue evaluate_prediction(std::string_view ground_truth, std::string_view prediction,
                                bool truncate) {
    std::string cut;
    if (truncate) {
        cut = truncate_lines(prediction, std::max<std::size_t>(count_lines(ground_truth), 1));
        prediction = cut;
    }
    MetricValue m;
    m.es = edit_similarity(ground_truth, prediction);
    m.em = exact_match(ground_truth, prediction);
    return m;
}

double score_target(const CompletionSample& sample, const PredictionTrace& trace, bool truncate) {
    return evaluate_prediction(sample.ground_truth, trace.text, truncate).es;
}

}  // namespace ragcrit
