#include "fed3d/gradcheck.hpp"

#include <cmath>

#include "fed3d/common.hpp"

namespace fed3d {

double finite_diff_check(const std::function<double(const Tensor&)>& fn, const Tensor& at,
                         const Tensor& analytic, double eps) {
    if (eps <= 0.0) throw DomainError("finite_diff_check: eps must be positive");
    if (!analytic.same_shape(at)) {
        throw ShapeError("finite_diff_check: gradient " + shape_str(analytic) +
                         " vs point " + shape_str(at));
    }
    Tensor probe = at;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.numel(); ++i) {
        double orig = probe[i];
        probe[i] = orig + eps;
        double fp = fn(probe);
        probe[i] = orig - eps;
        double fm = fn(probe);
        probe[i] = orig;
        double central = (fp - fm) / (2.0 * eps);
        double a = analytic[i];
        double rel = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

double finite_diff_check(const std::function<Value(Tape&, Value)>& build, const Tensor& at,
                         double eps) {
    Tape tape;
    Value x = tape.input(at, true);
    Value loss = build(tape, x);
    tape.backward(loss);
    Tensor analytic = tape.grad(x);
    auto fn = [&build](const Tensor& t) {
        Tape fresh;
        Value loss = build(fresh, fresh.input(t, false));
        return fresh.value(loss)[0];
    };
    return finite_diff_check(fn, at, analytic, eps);
}

double finite_diff_check_param(const std::function<double()>& forward, Parameter& p,
                               const Tensor& analytic, double eps) {
    auto fn = [&forward, &p](const Tensor& t) {
        Tensor saved = p.value;
        p.value = t;
        double out = forward();
        p.value = saved;
        return out;
    };
    return finite_diff_check(fn, p.value, analytic, eps);
}

}  // namespace fed3d
