#pragma once

#include <memory>
#include <string>

#include "mtlsi/nn/autodiff.hpp"

namespace mtlsi::nn {

/// Standard GRU cell (reset gate applied before the recurrent candidate
/// product):
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * h~
struct gru_cell_params {
    parameter W_z, W_r, W_h; ///< hidden x input
    parameter U_z, U_r, U_h; ///< hidden x hidden
    parameter b_z, b_r, b_h; ///< 1 x hidden

    gru_cell_params() = default;

    gru_cell_params(std::size_t n_in, std::size_t n_hidden, const std::string& prefix)
    {
        const auto in = static_cast<Eigen::Index>(n_in);
        const auto h = static_cast<Eigen::Index>(n_hidden);
        W_z = {prefix + ".W_z", matrix::Zero(h, in), {}};
        W_r = {prefix + ".W_r", matrix::Zero(h, in), {}};
        W_h = {prefix + ".W_h", matrix::Zero(h, in), {}};
        U_z = {prefix + ".U_z", matrix::Zero(h, h), {}};
        U_r = {prefix + ".U_r", matrix::Zero(h, h), {}};
        U_h = {prefix + ".U_h", matrix::Zero(h, h), {}};
        b_z = {prefix + ".b_z", matrix::Zero(1, h), {}};
        b_r = {prefix + ".b_r", matrix::Zero(1, h), {}};
        b_h = {prefix + ".b_h", matrix::Zero(1, h), {}};
    }

    [[nodiscard]] std::size_t n_hidden() const { return static_cast<std::size_t>(U_z.value.rows()); }
    [[nodiscard]] std::size_t n_input() const { return static_cast<std::size_t>(W_z.value.cols()); }

    template <typename Fn>
    void for_each(Fn&& fn)
    {
        for (parameter* p : {&W_z, &W_r, &W_h, &U_z, &U_r, &U_h, &b_z, &b_r, &b_h}) {
            fn(*p);
        }
    }

    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        for (const parameter* p : {&W_z, &W_r, &W_h, &U_z, &U_r, &U_h, &b_z, &b_r, &b_h}) {
            fn(*p);
        }
    }

    void check() const
    {
        const auto h = U_z.value.rows();
        const auto in = W_z.value.cols();
        bool ok = true;
        for (const parameter* w : {&W_z, &W_r, &W_h}) {
            ok = ok && w->value.rows() == h && w->value.cols() == in;
        }
        for (const parameter* u : {&U_z, &U_r, &U_h}) {
            ok = ok && u->value.rows() == h && u->value.cols() == h;
        }
        for (const parameter* b : {&b_z, &b_r, &b_h}) {
            ok = ok && b->value.rows() == 1 && b->value.cols() == h;
        }
        if (!ok) {
            throw error(errc::dimension_mismatch, "GRU cell '" + W_z.name + "' has inconsistent parameter shapes");
        }
    }
};

/// Closed-form trainable scalar count of one cell: 3 (h*in + h*h + h).
inline std::size_t gru_cell_param_count(std::size_t n_in, std::size_t n_hidden)
{
    return 3 * (n_hidden * n_in + n_hidden * n_hidden + n_hidden);
}

namespace detail {

inline matrix sigmoid(const matrix& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

/// Saved activations of one recurrent scan.
struct gru_trace {
    matrix z, r, c, h; ///< (steps*batch) x hidden, row t*batch + b
};

/// Scans `steps` time steps of a batch laid out as rows t*batch + b.
/// `reverse` processes t = steps-1 .. 0; output row block t always holds the
/// state after consuming x_t. Initial state is zero.
inline gru_trace gru_scan(const matrix& x, std::size_t batch, bool reverse, const matrix& W_z, const matrix& W_r,
                          const matrix& W_h, const matrix& U_z, const matrix& U_r, const matrix& U_h,
                          const matrix& b_z, const matrix& b_r, const matrix& b_h)
{
    const auto b = static_cast<Eigen::Index>(batch);
    const Eigen::Index steps = x.rows() / b;
    const Eigen::Index h = U_z.rows();

    matrix xz = x * W_z.transpose();
    matrix xr = x * W_r.transpose();
    matrix xh = x * W_h.transpose();
    xz.rowwise() += b_z.row(0);
    xr.rowwise() += b_r.row(0);
    xh.rowwise() += b_h.row(0);

    gru_trace tr{matrix(x.rows(), h), matrix(x.rows(), h), matrix(x.rows(), h), matrix(x.rows(), h)};
    matrix prev = matrix::Zero(b, h);
    matrix a(b, h);
    for (Eigen::Index s = 0; s < steps; ++s) {
        const Eigen::Index t = reverse ? steps - 1 - s : s;
        const Eigen::Index row = t * b;
        a.noalias() = xz.middleRows(row, b);
        a.noalias() += prev * U_z.transpose();
        tr.z.middleRows(row, b) = sigmoid(a);
        a.noalias() = xr.middleRows(row, b);
        a.noalias() += prev * U_r.transpose();
        tr.r.middleRows(row, b) = sigmoid(a);
        const matrix rh = tr.r.middleRows(row, b).cwiseProduct(prev);
        a.noalias() = xh.middleRows(row, b);
        a.noalias() += rh * U_h.transpose();
        tr.c.middleRows(row, b) = a.array().tanh().matrix();
        const auto z = tr.z.middleRows(row, b).array();
        tr.h.middleRows(row, b) = ((1.0 - z) * prev.array() + z * tr.c.middleRows(row, b).array()).matrix();
        prev = tr.h.middleRows(row, b);
    }
    return tr;
}

} // namespace detail

/// One direction of a recurrent layer as a tape op. `x` has steps*batch rows.
template <typename Cell>
var gru_sequence(tape& t, var x, Cell& cell, std::size_t batch, bool reverse, std::string label = "gru")
{
    cell.check();
    // leaves first: pushing nodes may move earlier values
    const var Wz = t.leaf(cell.W_z), Wr = t.leaf(cell.W_r), Wh = t.leaf(cell.W_h);
    const var Uz = t.leaf(cell.U_z), Ur = t.leaf(cell.U_r), Uh = t.leaf(cell.U_h);
    const var bz = t.leaf(cell.b_z), br = t.leaf(cell.b_r), bh = t.leaf(cell.b_h);
    const matrix& xv = t.value(x);
    if (static_cast<std::size_t>(xv.cols()) != cell.n_input() || batch == 0 || xv.rows() % static_cast<Eigen::Index>(batch) != 0) {
        throw error(errc::dimension_mismatch, label + ": input is " + std::to_string(xv.rows()) + "x"
                                                  + std::to_string(xv.cols()) + ", cell expects "
                                                  + std::to_string(cell.n_input()) + " columns");
    }

    auto trace = std::make_shared<detail::gru_trace>(
        detail::gru_scan(xv, batch, reverse, cell.W_z.value, cell.W_r.value, cell.W_h.value, cell.U_z.value,
                         cell.U_r.value, cell.U_h.value, cell.b_z.value, cell.b_r.value, cell.b_h.value));
    matrix out = trace->h;

    auto back = [=](tape& tp, const matrix& dout) {
        const auto b = static_cast<Eigen::Index>(batch);
        const matrix& X = tp.value(x);
        const matrix& U_z = tp.value(Uz);
        const matrix& U_r = tp.value(Ur);
        const matrix& U_h = tp.value(Uh);
        const Eigen::Index steps = X.rows() / b;
        const Eigen::Index h = U_z.rows();

        matrix daz(X.rows(), h), dar(X.rows(), h), dah(X.rows(), h);
        matrix dUz = matrix::Zero(h, h), dUr = matrix::Zero(h, h), dUh = matrix::Zero(h, h);
        matrix carry = matrix::Zero(b, h);
        const matrix zero_state = matrix::Zero(b, h);
        for (Eigen::Index s = steps; s-- > 0;) {
            const Eigen::Index t_idx = reverse ? steps - 1 - s : s;
            const Eigen::Index row = t_idx * b;
            const Eigen::Index prev_row = reverse ? row + b : row - b;
            const matrix& prev_src = s == 0 ? zero_state : trace->h;
            const auto prev = s == 0 ? zero_state.middleRows(0, b) : prev_src.middleRows(prev_row, b);

            const matrix dh = dout.middleRows(row, b) + carry;
            const auto z = trace->z.middleRows(row, b).array();
            const auto r = trace->r.middleRows(row, b).array();
            const auto c = trace->c.middleRows(row, b).array();

            daz.middleRows(row, b) = (dh.array() * (c - prev.array()) * z * (1.0 - z)).matrix();
            dah.middleRows(row, b) = (dh.array() * z * (1.0 - c.square())).matrix();
            const matrix drh = dah.middleRows(row, b) * U_h;
            dar.middleRows(row, b) = (drh.array() * prev.array() * r * (1.0 - r)).matrix();

            carry = (dh.array() * (1.0 - z) + drh.array() * r).matrix();
            carry.noalias() += daz.middleRows(row, b) * U_z;
            carry.noalias() += dar.middleRows(row, b) * U_r;

            dUz.noalias() += daz.middleRows(row, b).transpose() * prev;
            dUr.noalias() += dar.middleRows(row, b).transpose() * prev;
            const matrix rprev = (r * prev.array()).matrix();
            dUh.noalias() += dah.middleRows(row, b).transpose() * rprev;
        }
        tp.accumulate(Uz, dUz);
        tp.accumulate(Ur, dUr);
        tp.accumulate(Uh, dUh);
        tp.accumulate(Wz, daz.transpose() * X);
        tp.accumulate(Wr, dar.transpose() * X);
        tp.accumulate(Wh, dah.transpose() * X);
        tp.accumulate(bz, daz.colwise().sum());
        tp.accumulate(br, dar.colwise().sum());
        tp.accumulate(bh, dah.colwise().sum());
        if (tp.needs_grad(x)) {
            matrix dx = daz * tp.value(Wz);
            dx.noalias() += dar * tp.value(Wr);
            dx.noalias() += dah * tp.value(Wh);
            tp.accumulate(x, dx);
        }
    };
    return t.record(std::move(out), {x, Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh}, std::move(back), std::move(label));
}

/// One GRU update for a single input vector (no tape).
inline vector gru_step(const vector& x, const vector& h_prev, const gru_cell_params& p)
{
    p.check();
    if (static_cast<std::size_t>(x.size()) != p.n_input() || static_cast<std::size_t>(h_prev.size()) != p.n_hidden()) {
        throw error(errc::dimension_mismatch, "gru_step: input " + std::to_string(x.size()) + " / state "
                                                  + std::to_string(h_prev.size()) + " do not match the cell");
    }
    const vector z = detail::sigmoid(p.W_z.value * x + p.U_z.value * h_prev + p.b_z.value.row(0).transpose());
    const vector r = detail::sigmoid(p.W_r.value * x + p.U_r.value * h_prev + p.b_r.value.row(0).transpose());
    const vector c = (p.W_h.value * x + p.U_h.value * r.cwiseProduct(h_prev) + p.b_h.value.row(0).transpose())
                         .array()
                         .tanh()
                         .matrix();
    return ((1.0 - z.array()) * h_prev.array() + z.array() * c.array()).matrix();
}

/// Bidirectional layer over one sequence (rows = time): row t is
/// [forward state at t, backward state at t]. Zero initial states.
inline matrix bigru_layer(const matrix& x, const gru_cell_params& fwd, const gru_cell_params& bwd)
{
    fwd.check();
    bwd.check();
    if (static_cast<std::size_t>(x.cols()) != fwd.n_input() || fwd.n_input() != bwd.n_input()) {
        throw error(errc::dimension_mismatch, "bigru_layer: input width does not match the cells");
    }
    const auto f = detail::gru_scan(x, 1, false, fwd.W_z.value, fwd.W_r.value, fwd.W_h.value, fwd.U_z.value,
                                    fwd.U_r.value, fwd.U_h.value, fwd.b_z.value, fwd.b_r.value, fwd.b_h.value);
    const auto b = detail::gru_scan(x, 1, true, bwd.W_z.value, bwd.W_r.value, bwd.W_h.value, bwd.U_z.value,
                                    bwd.U_r.value, bwd.U_h.value, bwd.b_z.value, bwd.b_r.value, bwd.b_h.value);
    matrix out(x.rows(), f.h.cols() + b.h.cols());
    out << f.h, b.h;
    return out;
}

} // namespace mtlsi::nn
