#pragma once

#include <functional>

#include "fed3d/autodiff.hpp"

namespace fed3d {

// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12),
// where central is the (fn(x+eps) - fn(x-eps)) / (2 eps) difference per coordinate.
double finite_diff_check(const std::function<double(const Tensor&)>& fn, const Tensor& at,
                         const Tensor& analytic, double eps);

// Convenience: derives the analytic gradient of `build`'s scalar output
// w.r.t. the input leaf, then compares it against central differences of
// the same computation on fresh tapes.
double finite_diff_check(const std::function<Value(Tape&, Value)>& build, const Tensor& at,
                         double eps);

// Checks the accumulated gradient of one parameter of a model computation.
// `forward` must evaluate the scalar loss with whatever value `p` holds.
double finite_diff_check_param(const std::function<double()>& forward, Parameter& p,
                               const Tensor& analytic, double eps);

}  // namespace fed3d
