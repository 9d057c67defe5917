#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library and favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// p(chosen) by the textbook formula in long double.
inline long double softmax(const std::vector<double>& logits, std::size_t chosen) {
    long double z = 0.0L;
    for (double v : logits) z += std::exp(static_cast<long double>(v));
    return std::exp(static_cast<long double>(logits[chosen])) / z;
}

inline long double entropy(const std::vector<double>& logits) {
    long double z = 0.0L;
    for (double v : logits) z += std::exp(static_cast<long double>(v));
    long double h = 0.0L;
    for (double v : logits) {
        const long double p = std::exp(static_cast<long double>(v)) / z;
        if (p > 0.0L) h -= p * std::log(p);
    }
    return h;
}

/// max, min, avg, population std, direct product, N-th root of the product.
inline std::vector<long double> stats(const std::vector<double>& xs) {
    long double mx = xs[0], mn = xs[0], sum = 0.0L, prod = 1.0L;
    for (double x : xs) {
        mx = std::max<long double>(mx, x);
        mn = std::min<long double>(mn, x);
        sum += x;
        prod *= x;
    }
    const long double n = static_cast<long double>(xs.size());
    const long double avg = sum / n;
    long double ss = 0.0L;
    for (double x : xs) ss += (x - avg) * (x - avg);
    return {mx, mn, avg, std::sqrt(ss / n), prod, std::pow(prod, 1.0L / n)};
}

/// Table-1 vector: which = 0 full, 1 probabilities only, 2 entropies only.
inline std::vector<long double> features(const std::vector<double>& probs, const std::vector<double>& ents,
                                         int which) {
    std::vector<long double> out;
    if (which != 2) {
        const auto s = stats(probs);
        out.insert(out.end(), s.begin(), s.end());
    }
    if (which != 1) {
        const auto s = stats(ents);
        out.insert(out.end(), s.begin(), s.end());
    }
    out.push_back(static_cast<long double>(probs.size()));
    return out;
}

/// Full (n+1) x (m+1) edit-distance table over code points.
inline std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return d[a.size()][b.size()];
}

inline std::string utf8(const std::u32string& s) {
    std::string out;
    for (char32_t c : s) {
        const auto u = static_cast<std::uint32_t>(c);
        if (u < 0x80) {
            out += static_cast<char>(u);
        } else if (u < 0x800) {
            out += static_cast<char>(0xC0 | (u >> 6));
            out += static_cast<char>(0x80 | (u & 0x3F));
        } else if (u < 0x10000) {
            out += static_cast<char>(0xE0 | (u >> 12));
            out += static_cast<char>(0x80 | ((u >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (u & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (u >> 18));
            out += static_cast<char>(0x80 | ((u >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((u >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (u & 0x3F));
        }
    }
    return out;
}

/// Random string over a small mixed alphabet so collisions are common.
inline std::u32string random_u32(std::mt19937_64& rng, std::size_t max_len) {
    static const char32_t kAlphabet[] = {U'a', U'b', U'c', U'd', U' ', U'\n', U'λ', U'é', U'中', U'😀'};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, std::size(kAlphabet) - 1);
    std::u32string s(len(rng), U'a');
    for (auto& c : s) c = kAlphabet[pick(rng)];
    return s;
}

/// Index of the maximum, the latest one on ties.
inline std::size_t argmax_latest(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] >= xs[best]) best = i;
    }
    return best;
}

/// |a - b| <= rel * max(|a|, |b|), with a tiny absolute floor for exact zeros.
inline bool close_rel(long double a, long double b, long double rel) {
    const long double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) <= rel * scale || std::fabs(a - b) <= 1e-300L;
}

}  // namespace oracle
