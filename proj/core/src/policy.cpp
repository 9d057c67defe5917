#include "ragcrit/policy.hpp"

#include <stdexcept>
#include <string>

namespace ragcrit {

void ThresholdSchedule::validate() const {
    if (t_rag.empty()) throw std::invalid_argument("t_rag schedule is empty");
    if (t_acc.empty()) throw std::invalid_argument("t_acc schedule is empty");
    for (double t : t_acc) {
        if (!(t > 0.0)) throw std::invalid_argument("t_acc entries must be > 0");
    }
    for (double t : t_rag) {
        if (t != t) throw std::invalid_argument("t_rag entries must not be NaN");
    }
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
}

ThresholdSchedule ThresholdSchedule::line_level() {
    return {{0.9, 0.8, 0.7, 0.6}, {0.8, 0.9, 0.95, 0.99}, 1e-8};
}

ThresholdSchedule ThresholdSchedule::function_level() {
    return {{0.65, 0.45, 0.3, 0.25}, {0.9, 0.9, 0.95, 0.99}, 1e-8};
}

ThresholdSchedule ThresholdSchedule::uniform(std::size_t length, double t_rag, double t_acc, double epsilon) {
    return {std::vector<double>(length, t_rag), std::vector<double>(length, t_acc), epsilon};
}

std::size_t resolve_best(std::span<const double> scores, std::span<const double> t_acc, double epsilon,
                         std::size_t first) {
    if (scores.empty()) throw std::invalid_argument("resolve_best needs at least one score");
    if (first >= scores.size()) throw std::invalid_argument("resolve_best start index out of range");
    if (scores.size() - 1 > t_acc.size()) {
        throw std::invalid_argument("t_acc covers " + std::to_string(t_acc.size()) +
                                    " predecessors, need " + std::to_string(scores.size() - 1));
    }
    std::vector<std::size_t> best(scores.size());
    for (std::size_t i = first; i < scores.size(); ++i) {
        best[i] = i;
        for (std::size_t j = i; j-- > first;) {
            if (select(scores[j], scores[i], t_acc[j], epsilon)) {
                best[i] = best[j];
                break;
            }
        }
    }
    return best.back();
}

std::size_t resolve_best(std::span<const double> scores, const ThresholdSchedule& schedule,
                         std::size_t first) {
    return resolve_best(scores, schedule.t_acc, schedule.epsilon, first);
}

}  // namespace ragcrit
