#pragma once

#include <optional>
#include <vector>

#include "fed3d/autodiff.hpp"

namespace fed3d {

// Gradient-magnitude measure of one sample at the true-class output
// neuron: |p - 1| = 1 - p for p, the true-class softmax probability.
double grad_measure(double true_class_prob);

// Local batch correction coefficients: R_i = B * g_i / sum(g). A
// degenerate batch (sum == 0) falls back to all ones with a warning.
std::vector<double> local_coefficients(const std::vector<double>& measures);

// Per-class mean of the gradient measures a client observed; classes the
// client never saw are explicitly absent.
struct ClassStats {
    std::vector<std::optional<double>> per_class;

    std::size_t num_classes() const { return per_class.size(); }
};

ClassStats class_distribution_stats(const std::vector<double>& measures,
                                    const std::vector<int>& labels, std::size_t num_classes);

// Server-side global correction coefficients:
//   G_o = ln(1 + 2 * S * O * sum_c stats[c][o] / sum_c sum_o stats[c][o])
// Absent entries contribute zero to both sums. A zero denominator keeps
// `previous` unchanged (warned).
std::vector<double> global_coefficients(const std::vector<ClassStats>& client_stats,
                                        std::size_t num_classes,
                                        const std::vector<double>& previous);

// Local-global coefficients: measures raised to the class's global
// exponent, then batch-normalized like local_coefficients.
std::vector<double> corrected_coefficients(const std::vector<double>& measures,
                                           const std::vector<int>& labels,
                                           const std::vector<double>& global_coeffs);

// (1/B) * sum_i rhat[i] * losses[i], with rhat held constant (no gradient
// flows through the coefficients).
Value weighted_loss(const std::vector<Value>& per_sample_losses,
                    const std::vector<double>& rhat);

}  // namespace fed3d
