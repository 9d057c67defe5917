#include "ragcrit/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ragcrit {

std::string_view to_string(FeatureSet set) noexcept {
    switch (set) {
        case FeatureSet::Full: return "full";
        case FeatureSet::ProbOnly: return "prob";
        case FeatureSet::EntropyOnly: return "entropy";
    }
    return "full";
}

std::optional<FeatureSet> parse_feature_set(std::string_view name) noexcept {
    if (name == "full") return FeatureSet::Full;
    if (name == "prob") return FeatureSet::ProbOnly;
    if (name == "entropy") return FeatureSet::EntropyOnly;
    return std::nullopt;
}

std::size_t feature_dimension(FeatureSet set) noexcept {
    return set == FeatureSet::Full ? 13 : 7;
}

namespace {

// exp() clamped to the finite double range.
double exp_clamped(double log_value) {
    static const double kMaxLog = std::log(std::numeric_limits<double>::max());
    if (log_value >= kMaxLog) return std::numeric_limits<double>::max();
    return std::exp(log_value);
}

void check_logits(std::span<const double> logits) {
    if (logits.size() < 2) throw std::invalid_argument("logits row must have at least 2 entries");
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");
    }
}

}  // namespace

SequenceStats summarize(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("cannot summarize an empty sequence");
    const auto n = static_cast<double>(xs.size());
    SequenceStats s;
    s.max = *std::max_element(xs.begin(), xs.end());
    s.min = *std::min_element(xs.begin(), xs.end());
    if (!(s.min >= 0.0)) throw std::invalid_argument("feature inputs must be nonnegative");

    double sum = 0.0;
    double log_sum = 0.0;
    for (double x : xs) {
        sum += x;
        log_sum += std::log(x);  // -inf for x == 0 makes both products 0
    }
    s.avg = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - s.avg) * (x - s.avg);
    s.std = std::sqrt(ss / n);
    s.prod = exp_clamped(log_sum);
    s.geo = exp_clamped(log_sum / n);
    // Guard the mean/geo ordering against last-ulp rounding in exp/log.
    s.avg = std::clamp(s.avg, s.min, s.max);
    s.geo = std::clamp(s.geo, s.min, s.avg);
    return s;
}

double softmax_probability(std::span<const double> logits, std::size_t chosen) {
    check_logits(logits);
    if (chosen >= logits.size()) throw std::out_of_range("chosen index out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::exp(logits[chosen] - m) / z;
}

double step_entropy(std::span<const double> logits) {
    check_logits(logits);
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    const double log_z = std::log(z);
    // H = -sum p (l - m - log z); terms whose p underflows to 0 vanish.
    double h = 0.0;
    for (double v : logits) {
        const double shifted = v - m;
        const double p = std::exp(shifted - log_z);
        if (p > 0.0) h -= p * (shifted - log_z);
    }
    return std::clamp(h, 0.0, std::log(static_cast<double>(logits.size())));
}

FeatureVector extract_features(std::span<const double> probs, std::span<const double> entropies,
                               FeatureSet set) {
    if (probs.empty()) throw std::invalid_argument("empty generation has no features");
    if (probs.size() != entropies.size()) {
        throw std::invalid_argument("probability and entropy sequences differ in length");
    }
    for (double p : probs) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("probability outside (0, 1]");
    }
    for (double h : entropies) {
        if (!(h >= 0.0) || !std::isfinite(h)) throw std::invalid_argument("entropy must be finite and >= 0");
    }

    FeatureVector fv;
    fv.feature_set = set;
    fv.values.reserve(feature_dimension(set));
    auto append = [&fv](const SequenceStats& s) {
        fv.values.insert(fv.values.end(), {s.max, s.min, s.avg, s.std, s.prod, s.geo});
    };
    if (set != FeatureSet::EntropyOnly) append(summarize(probs));
    if (set != FeatureSet::ProbOnly) append(summarize(entropies));
    fv.values.push_back(static_cast<double>(probs.size()));
    return fv;
}

void step_signals(const PredictionTrace& trace, std::vector<double>& probs,
                  std::vector<double>& entropies) {
    probs.clear();
    entropies.clear();
    probs.reserve(trace.steps.size());
    entropies.reserve(trace.steps.size());
    for (const auto& step : trace.steps) {
        if (const auto* l = std::get_if<LogitsStep>(&step)) {
            // A chosen token whose probability underflows is still a positive probability.
            probs.push_back(std::max(softmax_probability(l->logits, l->chosen),
                                     std::numeric_limits<double>::min()));
            entropies.push_back(step_entropy(l->logits));
        } else {
            const auto& s = std::get<SummaryStep>(step);
            probs.push_back(s.chosen_prob);
            entropies.push_back(s.entropy_nats);
        }
    }
}

FeatureVector features_from_trace(const PredictionTrace& trace, FeatureSet set) {
    if (trace.empty()) throw std::invalid_argument("empty generation has no features");
    std::vector<double> probs;
    std::vector<double> entropies;
    step_signals(trace, probs, entropies);
    return extract_features(probs, entropies, set);
}

}  // namespace ragcrit
