#include "fed3d/correction.hpp"

#include <cmath>
#include <string>

#include "fed3d/common.hpp"

namespace fed3d {

double grad_measure(double true_class_prob) {
    if (!(true_class_prob >= 0.0 && true_class_prob <= 1.0)) {
        throw DomainError("grad_measure: probability " + std::to_string(true_class_prob) +
                          " outside [0,1]");
    }
    return 1.0 - true_class_prob;
}

std::vector<double> local_coefficients(const std::vector<double>& measures) {
    if (measures.empty()) throw DomainError("local_coefficients: empty batch");
    double sum = 0.0;
    for (double g : measures) sum += g;
    std::size_t b = measures.size();
    if (sum == 0.0) {
        log_warn("local_coefficients: degenerate batch (all measures zero), using R=1");
        return std::vector<double>(b, 1.0);
    }
    std::vector<double> out(b);
    double bn = static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = bn * measures[i] / sum;
    return out;
}

ClassStats class_distribution_stats(const std::vector<double>& measures,
                                    const std::vector<int>& labels,
                                    std::size_t num_classes) {
    if (measures.size() != labels.size()) {
        throw ShapeError("class_distribution_stats: " + std::to_string(measures.size()) +
                         " measures vs " + std::to_string(labels.size()) + " labels");
    }
    if (measures.empty()) throw DomainError("class_distribution_stats: empty dataset");
    std::vector<double> sums(num_classes, 0.0);
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < measures.size(); ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw DomainError("class_distribution_stats: label " + std::to_string(y) +
                              " out of range at sample " + std::to_string(i));
        }
        sums[static_cast<std::size_t>(y)] += measures[i];
        counts[static_cast<std::size_t>(y)] += 1;
    }
    ClassStats stats;
    stats.per_class.resize(num_classes);
    for (std::size_t o = 0; o < num_classes; ++o) {
        if (counts[o] > 0) stats.per_class[o] = sums[o] / static_cast<double>(counts[o]);
    }
    return stats;
}

std::vector<double> global_coefficients(const std::vector<ClassStats>& client_stats,
                                        std::size_t num_classes,
                                        const std::vector<double>& previous) {
    double total = 0.0;
    std::vector<double> per_class(num_classes, 0.0);
    for (const ClassStats& cs : client_stats) {
        if (cs.per_class.size() != num_classes) {
            throw ShapeError("global_coefficients: stats for " +
                             std::to_string(cs.per_class.size()) + " classes, expected " +
                             std::to_string(num_classes));
        }
        for (std::size_t o = 0; o < num_classes; ++o) {
            if (cs.per_class[o]) {
                per_class[o] += *cs.per_class[o];
                total += *cs.per_class[o];
            }
        }
    }
    if (total == 0.0) {
        log_warn("global_coefficients: zero denominator, keeping previous coefficients");
        return previous;
    }
    double s = static_cast<double>(client_stats.size());
    double o_count = static_cast<double>(num_classes);
    std::vector<double> out(num_classes);
    for (std::size_t o = 0; o < num_classes; ++o) {
        out[o] = std::log(1.0 + 2.0 * s * o_count * per_class[o] / total);
    }
    return out;
}

std::vector<double> corrected_coefficients(const std::vector<double>& measures,
                                           const std::vector<int>& labels,
                                           const std::vector<double>& global_coeffs) {
    if (measures.size() != labels.size()) {
        throw ShapeError("corrected_coefficients: " + std::to_string(measures.size()) +
                         " measures vs " + std::to_string(labels.size()) + " labels");
    }
    if (measures.empty()) throw DomainError("corrected_coefficients: empty batch");
    std::size_t b = measures.size();
    std::vector<double> powered(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= global_coeffs.size()) {
            throw DomainError("corrected_coefficients: label " + std::to_string(y) +
                              " out of range at sample " + std::to_string(i));
        }
        powered[i] = std::pow(measures[i], global_coeffs[static_cast<std::size_t>(y)]);
        sum += powered[i];
    }
    if (sum == 0.0) {
        log_warn("corrected_coefficients: all exponentiated measures zero, using R=1");
        return std::vector<double>(b, 1.0);
    }
    std::vector<double> out(b);
    double bn = static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = bn * powered[i] / sum;
    return out;
}

Value weighted_loss(const std::vector<Value>& per_sample_losses,
                    const std::vector<double>& rhat) {
    return weighted_mean(per_sample_losses, rhat);
}

}  // namespace fed3d
