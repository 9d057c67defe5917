#include <algorithm>
#include <stdexcept>

#include "ragcrit/simkit.hpp"

namespace ragcrit {

void LatencyParams::validate() const {
    if (t_d < 0.0 || t_r < 0.0 || t_g0 < 0.0 || t_gi < 0.0) {
        throw std::invalid_argument("latency terms must be >= 0");
    }
}

std::vector<LatencyRow> latency_model(const LatencyParams& p, double art_single,
                                      const std::vector<double>& art_marginal) {
    p.validate();
    auto check = [](double art) {
        if (!(art >= 0.0 && art <= 1.0)) throw std::invalid_argument("retrieval rate must lie in [0, 1]");
    };
    check(art_single);
    for (double a : art_marginal) check(a);

    std::vector<LatencyRow> rows;
    const double baseline = p.t_r + p.t_gi;
    // Zero-shot generation runs alongside the first retrieval.
    LatencyRow first{1, art_single, std::max(p.t_g0, p.t_r) + p.t_d + art_single * p.t_gi, baseline, 0.0};
    first.reduced = baseline > 0.0 ? 1.0 - first.card_ms / baseline : 0.0;
    rows.push_back(first);
    for (std::size_t i = 0; i < art_marginal.size(); ++i) {
        const double art = art_marginal[i];
        LatencyRow row{static_cast<int>(i) + 2, art, p.t_d + art * (p.t_r + p.t_gi), baseline, 0.0};
        row.reduced = baseline > 0.0 ? 1.0 - row.card_ms / baseline : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace ragcrit
