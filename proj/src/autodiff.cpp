#include "fed3d/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fed3d/common.hpp"

namespace fed3d {

namespace {

void require_same_tape(Value a, Value b, const char* op) {
    if (a.tape != b.tape || a.tape == nullptr) {
        throw ShapeError(std::string(op) + ": values from different tapes");
    }
}

void check_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t));
    }
}

// out += a * b  (a[m,k], b[k,n])
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = a.at(i, kk);
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(kk, j);
        }
    }
}

// out += a * b^T  (a[m,k], b[n,k])
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += a.at(i, kk) * b.at(j, kk);
            out.at(i, j) += acc;
        }
    }
}

// out += a^T * b  (a[k,m], b[k,n])
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t i = 0; i < m; ++i) {
            double av = a.at(kk, i);
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(kk, j);
        }
    }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---- Tape -------------------------------------------------------------

Value Tape::emplace(Tensor value, bool needs_grad,
                    std::function<void(Tape&, const Tensor&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = needs_grad ? std::move(backprop) : nullptr;
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Value Tape::input(const Tensor& v, bool requires_grad) {
    return emplace(v, requires_grad, nullptr);
}

Value Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Value{this, it->second};
    Value v = emplace(p.value, p.trainable, nullptr);
    nodes_[v.id].source = &p;
    param_nodes_[&p] = v.id;
    return v;
}

void Tape::accumulate_grad(Value v, const Tensor& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
    n.grad.add_scaled(g, 1.0);
}

const Tensor& Tape::grad(Value v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.numel() == 0) {
        const_cast<Tape*>(this)->zero_scratch_ = Tensor::zeros(n.value.shape());
        return zero_scratch_;
    }
    return n.grad;
}

void Tape::backward(Value loss) {
    Node& ln = nodes_[loss.id];
    if (ln.value.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(ln.value));
    }
    ln.grad = Tensor::full(ln.value.shape(), 1.0);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.numel() == 0 || !n.backprop) continue;
        n.backprop(*this, n.grad);
    }
    for (auto& [p, id] : param_nodes_) {
        Node& n = nodes_[id];
        if (p->trainable && n.grad.numel() != 0) p->grad.add_scaled(n.grad, 1.0);
    }
}

void Tape::reset() {
    nodes_.clear();
    param_nodes_.clear();
}

// ---- ops --------------------------------------------------------------

Value matmul(Value a, Value b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_2d(av, "matmul");
    check_2d(bv, "matmul");
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(av) + " vs " +
                         shape_str(bv));
    }
    Tensor out({av.rows(), bv.cols()});
    matmul_acc(av, bv, out);
    bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
    return t.emplace(std::move(out), ng, [a, b](Tape& tp, const Tensor& g) {
        if (tp.node(a).needs_grad) {
            Tensor ga = Tensor::zeros(tp.value(a).shape());
            matmul_nt_acc(g, tp.value(b), ga);  // g * b^T
            tp.accumulate_grad(a, ga);
        }
        if (tp.node(b).needs_grad) {
            Tensor gb = Tensor::zeros(tp.value(b).shape());
            matmul_tn_acc(tp.value(a), g, gb);  // a^T * g
            tp.accumulate_grad(b, gb);
        }
    });
}

Value matmul_nt(Value a, Value b) {
    require_same_tape(a, b, "matmul_nt");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_2d(av, "matmul_nt");
    check_2d(bv, "matmul_nt");
    if (av.cols() != bv.cols()) {
        throw ShapeError("matmul_nt: inner extents differ, " + shape_str(av) + " vs " +
                         shape_str(bv));
    }
    Tensor out({av.rows(), bv.rows()});
    matmul_nt_acc(av, bv, out);
    bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
    return t.emplace(std::move(out), ng, [a, b](Tape& tp, const Tensor& g) {
        if (tp.node(a).needs_grad) {
            Tensor ga = Tensor::zeros(tp.value(a).shape());
            matmul_acc(g, tp.value(b), ga);  // g * b
            tp.accumulate_grad(a, ga);
        }
        if (tp.node(b).needs_grad) {
            Tensor gb = Tensor::zeros(tp.value(b).shape());
            matmul_tn_acc(g, tp.value(a), gb);  // g^T * a
            tp.accumulate_grad(b, gb);
        }
    });
}

Value add(Value a, Value b) {
    require_same_tape(a, b, "add");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (!av.same_shape(bv)) {
        throw ShapeError("add: shapes differ, " + shape_str(av) + " vs " + shape_str(bv));
    }
    Tensor out = av;
    out.add_scaled(bv, 1.0);
    bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
    return t.emplace(std::move(out), ng, [a, b](Tape& tp, const Tensor& g) {
        tp.accumulate_grad(a, g);
        tp.accumulate_grad(b, g);
    });
}

Value add_rowvec(Value a, Value bias) {
    require_same_tape(a, bias, "add_rowvec");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(bias);
    check_2d(av, "add_rowvec");
    if (bv.rank() != 1 || bv.numel() != av.cols()) {
        throw ShapeError("add_rowvec: bias " + shape_str(bv) + " does not match columns of " +
                         shape_str(av));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += bv[j];
    bool ng = t.node(a).needs_grad || t.node(bias).needs_grad;
    return t.emplace(std::move(out), ng, [a, bias](Tape& tp, const Tensor& g) {
        tp.accumulate_grad(a, g);
        if (tp.node(bias).needs_grad) {
            Tensor gb = Tensor::zeros(tp.value(bias).shape());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
            tp.accumulate_grad(bias, gb);
        }
    });
}

Value scale(Value a, double c) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    out.scale(c);
    return t.emplace(std::move(out), t.node(a).needs_grad, [a, c](Tape& tp, const Tensor& g) {
        Tensor ga = g;
        ga.scale(c);
        tp.accumulate_grad(a, ga);
    });
}

Value concat_rows(Value a, Value b) {
    require_same_tape(a, b, "concat_rows");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_2d(av, "concat_rows");
    check_2d(bv, "concat_rows");
    if (av.cols() != bv.cols()) {
        throw ShapeError("concat_rows: column counts differ, " + shape_str(av) + " vs " +
                         shape_str(bv));
    }
    Tensor out({av.rows() + bv.rows(), av.cols()});
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t i = 0; i < bv.rows(); ++i)
        for (std::size_t j = 0; j < bv.cols(); ++j) out.at(av.rows() + i, j) = bv.at(i, j);
    bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
    std::size_t split = av.rows();
    return t.emplace(std::move(out), ng, [a, b, split](Tape& tp, const Tensor& g) {
        if (tp.node(a).needs_grad) {
            Tensor ga({split, g.cols()});
            for (std::size_t i = 0; i < split; ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) ga.at(i, j) = g.at(i, j);
            tp.accumulate_grad(a, ga);
        }
        if (tp.node(b).needs_grad) {
            Tensor gb({g.rows() - split, g.cols()});
            for (std::size_t i = 0; i < gb.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb.at(i, j) = g.at(split + i, j);
            tp.accumulate_grad(b, gb);
        }
    });
}

Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Tape& t = *parts[0].tape;
    std::size_t rows = t.value(parts[0]).rows();
    std::size_t total_cols = 0;
    bool ng = false;
    for (Value p : parts) {
        require_same_tape(parts[0], p, "concat_cols");
        const Tensor& pv = t.value(p);
        check_2d(pv, "concat_cols");
        if (pv.rows() != rows) {
            throw ShapeError("concat_cols: row counts differ, " +
                             shape_str(t.value(parts[0])) + " vs " + shape_str(pv));
        }
        total_cols += pv.cols();
        ng = ng || t.node(p).needs_grad;
    }
    Tensor out({rows, total_cols});
    std::size_t off = 0;
    for (Value p : parts) {
        const Tensor& pv = t.value(p);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
        off += pv.cols();
    }
    std::vector<Value> held = parts;
    return t.emplace(std::move(out), ng, [held](Tape& tp, const Tensor& g) {
        std::size_t off = 0;
        for (Value p : held) {
            const Tensor& pv = tp.value(p);
            if (tp.node(p).needs_grad) {
                Tensor gp(pv.shape());
                for (std::size_t i = 0; i < pv.rows(); ++i)
                    for (std::size_t j = 0; j < pv.cols(); ++j) gp.at(i, j) = g.at(i, off + j);
                tp.accumulate_grad(p, gp);
            }
            off += pv.cols();
        }
    });
}

Value softmax_rows(Value a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    check_2d(av, "softmax_rows");
    if (av.cols() < 1) throw ShapeError("softmax_rows: empty rows in " + shape_str(av));
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double m = av.at(i, 0);
        for (std::size_t j = 1; j < av.cols(); ++j) m = std::max(m, av.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            double e = std::exp(av.at(i, j) - m);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) /= sum;
    }
    Value res = t.emplace(out, t.node(a).needs_grad, nullptr);
    t.node(res).backprop = [a, res](Tape& tp, const Tensor& g) {
        const Tensor& y = tp.value(res);
        Tensor ga(y.shape());
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                ga.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
        tp.accumulate_grad(a, ga);
    };
    if (!t.node(res).needs_grad) t.node(res).backprop = nullptr;
    return res;
}

Value gelu(Value a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) {
        double x = av[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return t.emplace(std::move(out), t.node(a).needs_grad, [a](Tape& tp, const Tensor& g) {
        const Tensor& x = tp.value(a);
        Tensor ga(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) {
            double xi = x[i];
            double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
            ga[i] = g[i] * (cdf + xi * pdf);
        }
        tp.accumulate_grad(a, ga);
    });
}

Value group_maxpool(Value a, std::size_t groups) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    check_2d(av, "group_maxpool");
    if (groups == 0 || av.rows() % groups != 0) {
        throw ConfigError("group_maxpool: " + std::to_string(av.rows()) +
                          " rows not divisible into " + std::to_string(groups) + " groups");
    }
    std::size_t per = av.rows() / groups;
    Tensor out({groups, av.cols()});
    auto argmax = std::make_shared<std::vector<std::size_t>>(groups * av.cols());
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        for (std::size_t j = 0; j < av.cols(); ++j) {
            std::size_t best = gidx * per;
            double bv = av.at(best, j);
            for (std::size_t r = gidx * per + 1; r < (gidx + 1) * per; ++r) {
                if (av.at(r, j) > bv) {
                    bv = av.at(r, j);
                    best = r;
                }
            }
            out.at(gidx, j) = bv;
            (*argmax)[gidx * av.cols() + j] = best;
        }
    }
    return t.emplace(std::move(out), t.node(a).needs_grad,
                     [a, argmax](Tape& tp, const Tensor& g) {
                         Tensor ga = Tensor::zeros(tp.value(a).shape());
                         for (std::size_t gi = 0; gi < g.rows(); ++gi)
                             for (std::size_t j = 0; j < g.cols(); ++j)
                                 ga.at((*argmax)[gi * g.cols() + j], j) += g.at(gi, j);
                         tp.accumulate_grad(a, ga);
                     });
}

Value mean_rows(Value a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    check_2d(av, "mean_rows");
    std::size_t m = av.rows();
    Tensor out({1, av.cols()});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out.at(0, j) += av.at(i, j);
    out.scale(1.0 / static_cast<double>(m));
    return t.emplace(std::move(out), t.node(a).needs_grad, [a, m](Tape& tp, const Tensor& g) {
        Tensor ga(tp.value(a).shape());
        double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(i, j) = g.at(0, j) * inv;
        tp.accumulate_grad(a, ga);
    });
}

Value stack_rows(const std::vector<Value>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    Tape& t = *rows[0].tape;
    std::size_t n = t.value(rows[0]).cols();
    bool ng = false;
    for (Value r : rows) {
        const Tensor& rv = t.value(r);
        if (rv.rows() != 1 || rv.cols() != n) {
            throw ShapeError("stack_rows: expected [1x" + std::to_string(n) + "], got " +
                             shape_str(rv));
        }
        ng = ng || t.node(r).needs_grad;
    }
    Tensor out({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = t.value(rows[i]).at(0, j);
    std::vector<Value> held = rows;
    return t.emplace(std::move(out), ng, [held](Tape& tp, const Tensor& g) {
        for (std::size_t i = 0; i < held.size(); ++i) {
            if (!tp.node(held[i]).needs_grad) continue;
            Tensor gr({std::size_t{1}, g.cols()});
            for (std::size_t j = 0; j < g.cols(); ++j) gr.at(0, j) = g.at(i, j);
            tp.accumulate_grad(held[i], gr);
        }
    });
}

Value sum_all(Value a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
    Tensor out = Tensor::from_values({1}, {s});
    return t.emplace(std::move(out), t.node(a).needs_grad, [a](Tape& tp, const Tensor& g) {
        Tensor ga = Tensor::full(tp.value(a).shape(), g[0]);
        tp.accumulate_grad(a, ga);
    });
}

Value weighted_mean(const std::vector<Value>& scalars, const std::vector<double>& weights) {
    if (scalars.empty()) throw ShapeError("weighted_mean: no inputs");
    if (scalars.size() != weights.size()) {
        throw ShapeError("weighted_mean: " + std::to_string(scalars.size()) + " scalars vs " +
                         std::to_string(weights.size()) + " weights");
    }
    Tape& t = *scalars[0].tape;
    double inv_b = 1.0 / static_cast<double>(scalars.size());
    double acc = 0.0;
    bool ng = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const Tensor& sv = t.value(scalars[i]);
        if (sv.numel() != 1) {
            throw ShapeError("weighted_mean: non-scalar input " + shape_str(sv));
        }
        acc += weights[i] * sv[0];
        ng = ng || t.node(scalars[i]).needs_grad;
    }
    Tensor out = Tensor::from_values({1}, {acc * inv_b});
    std::vector<Value> held = scalars;
    std::vector<double> w = weights;
    return t.emplace(std::move(out), ng, [held, w, inv_b](Tape& tp, const Tensor& g) {
        for (std::size_t i = 0; i < held.size(); ++i) {
            if (!tp.node(held[i]).needs_grad) continue;
            Tensor gs = Tensor::from_values({1}, {g[0] * w[i] * inv_b});
            tp.accumulate_grad(held[i], gs);
        }
    });
}

CrossEntropyOut cross_entropy(Value logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Tensor& lv = t.value(logits);
    check_2d(lv, "cross_entropy");
    std::size_t batch = lv.rows(), classes = lv.cols();
    if (labels.size() != batch) {
        throw ShapeError("cross_entropy: " + std::to_string(batch) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
    }
    auto softm = std::make_shared<Tensor>(lv.shape());
    std::vector<double> true_prob(batch);
    double loss_acc = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DomainError("cross_entropy: label " + std::to_string(y) +
                              " out of range [0," + std::to_string(classes) + ") at sample " +
                              std::to_string(i));
        }
        double m = lv.at(i, 0);
        for (std::size_t j = 1; j < classes; ++j) m = std::max(m, lv.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            double e = std::exp(lv.at(i, j) - m);
            softm->at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < classes; ++j) softm->at(i, j) /= sum;
        // loss_i = log(sum exp(l-m)) + (m - l_y); exact ln(O) at uniform logits
        loss_acc += std::log(sum) + (m - lv.at(i, static_cast<std::size_t>(y)));
        true_prob[i] = softm->at(i, static_cast<std::size_t>(y));
    }
    Tensor out = Tensor::from_values({1}, {loss_acc / static_cast<double>(batch)});
    std::vector<int> held_labels = labels;
    Value loss = t.emplace(std::move(out), t.node(logits).needs_grad,
                           [logits, softm, held_labels](Tape& tp, const Tensor& g) {
                               const Tensor& s = *softm;
                               Tensor gl(s.shape());
                               double inv_b = 1.0 / static_cast<double>(s.rows());
                               for (std::size_t i = 0; i < s.rows(); ++i) {
                                   for (std::size_t j = 0; j < s.cols(); ++j)
                                       gl.at(i, j) = g[0] * inv_b * s.at(i, j);
                                   gl.at(i, static_cast<std::size_t>(held_labels[i])) -=
                                       g[0] * inv_b;
                               }
                               tp.accumulate_grad(logits, gl);
                           });
    return CrossEntropyOut{loss, std::move(true_prob)};
}

std::vector<double> softmax_values(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

}  // namespace fed3d
