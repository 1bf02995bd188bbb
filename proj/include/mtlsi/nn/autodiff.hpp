#pragma once

// Reverse-mode automatic differentiation over matrix-valued nodes.
//
// A tape records every operation of one forward pass. Nodes are coarse
// (whole affine layers, a full recurrent scan) and each carries its own
// backward rule, so a BiGRU forward/backward touches a few dozen nodes rather
// than millions of scalars. Every op checks its output for NaN/Inf and every
// backward rule checks the gradients it produced.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtlsi/error.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::nn {

/// A trainable tensor with its gradient slot.
struct parameter {
    std::string name;
    matrix value;
    matrix grad;

    void zero_grad() { grad = matrix::Zero(value.rows(), value.cols()); }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

class tape;

/// Handle to a node on a tape.
struct var {
    const tape* owner = nullptr;
    std::size_t id = 0;
};

class tape {
public:
    using backward_fn = std::function<void(tape&, const matrix& upstream)>;

    tape() = default;
    tape(const tape&) = delete;
    tape& operator=(const tape&) = delete;

    var constant(matrix value, std::string label = "constant")
    {
        return push(node{std::move(value), {}, nullptr, nullptr, nullptr, false, std::move(label)});
    }

    /// Trainable leaf; backward accumulates into `p.grad`.
    var leaf(parameter& p)
    {
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            p.zero_grad();
        }
        return push(node{{}, {}, nullptr, &p.value, &p, true, p.name});
    }

    /// Frozen leaf (inference); no gradient is tracked.
    var leaf(const parameter& p) { return push(node{{}, {}, nullptr, &p.value, nullptr, false, p.name}); }

    /// Records an op result. `inputs` decide whether the node needs a gradient.
    var record(matrix value, std::initializer_list<var> inputs, backward_fn back, std::string label)
    {
        bool needs = false;
        for (const var& in : inputs) {
            check_owner(in);
            needs = needs || nodes_[in.id].needs_grad;
        }
        if (!value.allFinite()) {
            throw error(errc::numerical_error, "non-finite value produced by '" + label + "'");
        }
        return push(node{std::move(value), {}, needs ? std::move(back) : nullptr, nullptr, nullptr, needs,
                         std::move(label)});
    }

    [[nodiscard]] const matrix& value(var v) const
    {
        check_owner(v);
        const node& n = nodes_[v.id];
        return n.external != nullptr ? *n.external : n.value;
    }

    [[nodiscard]] bool needs_grad(var v) const
    {
        check_owner(v);
        return nodes_[v.id].needs_grad;
    }

    /// Gradient of the last backward() target with respect to `v`
    /// (zero if `v` did not influence it).
    [[nodiscard]] matrix grad(var v) const
    {
        check_owner(v);
        const node& n = nodes_[v.id];
        if (n.grad.size() == 0) {
            const matrix& val = value(v);
            return matrix::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    /// Adds `contribution` to the gradient of `v` if it needs one.
    void accumulate(var v, const matrix& contribution)
    {
        node& n = nodes_[v.id];
        if (!n.needs_grad) {
            return;
        }
        if (n.grad.size() == 0) {
            n.grad = contribution;
        } else {
            n.grad += contribution;
        }
    }

    /// Back-propagates from a 1x1 node through everything recorded before it.
    void backward(var loss)
    {
        if (loss.owner != this || loss.id >= nodes_.size()) {
            throw error(errc::graph_error, "backward() called on a node that this tape never recorded");
        }
        if (consumed_) {
            throw error(errc::graph_error, "backward() already ran on this tape");
        }
        const matrix& out = value(loss);
        if (out.rows() != 1 || out.cols() != 1) {
            throw error(errc::graph_error, "backward() needs a scalar (1x1) loss node");
        }
        consumed_ = true;
        if (!nodes_[loss.id].needs_grad) {
            return;
        }
        nodes_[loss.id].grad = matrix::Ones(1, 1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            node& n = nodes_[i];
            if (n.grad.size() == 0) {
                continue;
            }
            if (!n.grad.allFinite()) {
                throw error(errc::numerical_error, "non-finite gradient reaching '" + n.label + "'");
            }
            if (n.back) {
                // rules only touch gradients of earlier nodes, so n.grad stays put
                n.back(*this, n.grad);
            }
            if (n.param != nullptr) {
                n.param->grad += n.grad;
            }
        }
    }

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    void clear()
    {
        nodes_.clear();
        consumed_ = false;
    }

private:
    struct node {
        matrix value;
        matrix grad;
        backward_fn back;
        const matrix* external; ///< parameter storage for leaves
        parameter* param;
        bool needs_grad;
        std::string label;
    };

    var push(node n)
    {
        nodes_.push_back(std::move(n));
        return var{this, nodes_.size() - 1};
    }

    void check_owner(var v) const
    {
        if (v.owner != this || v.id >= nodes_.size()) {
            throw error(errc::graph_error, "variable does not belong to this tape");
        }
    }

    std::vector<node> nodes_;
    bool consumed_ = false;
};

// ---- elementwise and structural ops ----------------------------------------

/// y = x W^T + b, applied to every row of x (time-distributed dense).
inline var affine(tape& t, var x, var w, var b, std::string label = "affine")
{
    const matrix& xv = t.value(x);
    const matrix& wv = t.value(w);
    const matrix& bv = t.value(b);
    if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows()) {
        throw error(errc::dimension_mismatch, label + ": input " + std::to_string(xv.cols()) + " cols vs weight "
                                                  + std::to_string(wv.rows()) + "x" + std::to_string(wv.cols()));
    }
    matrix y = xv * wv.transpose();
    y.rowwise() += bv.row(0);
    return t.record(std::move(y), {x, w, b},
                    [x, w, b](tape& tp, const matrix& dy) {
                        if (tp.needs_grad(x)) {
                            tp.accumulate(x, dy * tp.value(w));
                        }
                        if (tp.needs_grad(w)) {
                            tp.accumulate(w, dy.transpose() * tp.value(x));
                        }
                        if (tp.needs_grad(b)) {
                            tp.accumulate(b, dy.colwise().sum());
                        }
                    },
                    std::move(label));
}

inline var tanh(tape& t, var x, std::string label = "tanh")
{
    const var self{&t, t.size()};
    return t.record(t.value(x).array().tanh().matrix(), {x},
                    [x, self](tape& tp, const matrix& dy) {
                        const auto& yv = tp.value(self);
                        tp.accumulate(x, (dy.array() * (1.0 - yv.array().square())).matrix());
                    },
                    std::move(label));
}

inline var concat_cols(tape& t, var a, var b, std::string label = "concat")
{
    const matrix& av = t.value(a);
    const matrix& bv = t.value(b);
    if (av.rows() != bv.rows()) {
        throw error(errc::dimension_mismatch, label + ": row counts differ");
    }
    matrix y(av.rows(), av.cols() + bv.cols());
    y << av, bv;
    const Eigen::Index split = av.cols();
    return t.record(std::move(y), {a, b},
                    [a, b, split](tape& tp, const matrix& dy) {
                        tp.accumulate(a, dy.leftCols(split));
                        tp.accumulate(b, dy.rightCols(dy.cols() - split));
                    },
                    std::move(label));
}

inline var add(tape& t, var a, var b, std::string label = "add")
{
    const matrix& av = t.value(a);
    const matrix& bv = t.value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
        throw error(errc::dimension_mismatch, label + ": shapes differ");
    }
    return t.record(av + bv, {a, b},
                    [a, b](tape& tp, const matrix& dy) {
                        tp.accumulate(a, dy);
                        tp.accumulate(b, dy);
                    },
                    std::move(label));
}

inline var scale(tape& t, var a, double s, std::string label = "scale")
{
    return t.record(t.value(a) * s, {a}, [a, s](tape& tp, const matrix& dy) { tp.accumulate(a, dy * s); },
                    std::move(label));
}

inline var sum(tape& t, var a, std::string label = "sum")
{
    const matrix& av = t.value(a);
    const Eigen::Index rows = av.rows();
    const Eigen::Index cols = av.cols();
    return t.record(matrix::Constant(1, 1, av.sum()), {a},
                    [a, rows, cols](tape& tp, const matrix& dy) {
                        tp.accumulate(a, matrix::Constant(rows, cols, dy(0, 0)));
                    },
                    std::move(label));
}

// ---- losses -----------------------------------------------------------------

/// Mean absolute error over all entries.
inline var mae(tape& t, var pred, const matrix& target, std::string label = "mae")
{
    const matrix& pv = t.value(pred);
    if (pv.rows() != target.rows() || pv.cols() != target.cols()) {
        throw error(errc::dimension_mismatch, label + ": prediction " + std::to_string(pv.rows()) + "x"
                                                  + std::to_string(pv.cols()) + " vs target " + std::to_string(target.rows())
                                                  + "x" + std::to_string(target.cols()));
    }
    const matrix diff = pv - target;
    const auto n = static_cast<double>(diff.size());
    return t.record(matrix::Constant(1, 1, diff.cwiseAbs().sum() / n), {pred},
                    [pred, diff, n](tape& tp, const matrix& dy) {
                        tp.accumulate(pred, (diff.array().sign() * (dy(0, 0) / n)).matrix());
                    },
                    std::move(label));
}

/// Row-wise log-softmax via log-sum-exp.
inline matrix log_softmax(const matrix& logits)
{
    matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

inline matrix softmax(const matrix& logits) { return log_softmax(logits).array().exp().matrix(); }

/// Mean over rows of -log softmax(logits)[label].
inline var cross_entropy(tape& t, var logits, std::span<const std::int32_t> labels, std::string label = "cross_entropy")
{
    const matrix& lv = t.value(logits);
    if (static_cast<std::size_t>(lv.rows()) != labels.size()) {
        throw error(errc::dimension_mismatch, label + ": " + std::to_string(lv.rows()) + " logit rows vs "
                                                  + std::to_string(labels.size()) + " labels");
    }
    const matrix logp = log_softmax(lv);
    std::vector<std::int32_t> targets(labels.begin(), labels.end());
    double total = 0.0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] < 0 || targets[r] >= lv.cols()) {
            throw error(errc::bad_label, label + ": label " + std::to_string(targets[r]) + " out of range");
        }
        total -= logp(static_cast<Eigen::Index>(r), targets[r]);
    }
    const auto n = static_cast<double>(targets.size());
    return t.record(matrix::Constant(1, 1, total / n), {logits},
                    [logits, logp, targets = std::move(targets), n](tape& tp, const matrix& dy) {
                        matrix g = logp.array().exp().matrix();
                        for (std::size_t r = 0; r < targets.size(); ++r) {
                            g(static_cast<Eigen::Index>(r), targets[r]) -= 1.0;
                        }
                        tp.accumulate(logits, g * (dy(0, 0) / n));
                    },
                    std::move(label));
}

} // namespace mtlsi::nn
