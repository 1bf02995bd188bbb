#pragma once

// Shared trunk: 3 stacked bidirectional GRU layers, then a time-distributed
// dense layer with tanh. Heads: a linear TV regressor (9 outputs) and, in
// multi-task mode, a linear phoneme classifier (41 logits; softmax is applied
// only inside the loss and accuracy computations).

#include <array>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/nn/autodiff.hpp"
#include "mtlsi/nn/gru.hpp"
#include "mtlsi/random.hpp"

namespace mtlsi::nn {

enum class task_mode { single, multi };

inline std::string_view to_string(task_mode m) { return m == task_mode::single ? "single" : "multi"; }

inline task_mode parse_task_mode(std::string_view s)
{
    if (s == "single") {
        return task_mode::single;
    }
    if (s == "multi") {
        return task_mode::multi;
    }
    throw error(errc::invalid_config, "unknown task mode '" + std::string(s) + "'");
}

struct model_config {
    std::size_t n_inputs = k_mfcc;
    std::size_t hidden = 16;  ///< units per direction
    std::size_t dense = 32;   ///< shared time-distributed layer width
    std::size_t layers = 3;
    std::size_t n_tvs = k_tvs;
    std::size_t n_phonemes = k_phonemes;
    task_mode mode = task_mode::multi;

    static model_config desk(task_mode mode = task_mode::multi)
    {
        model_config c;
        c.mode = mode;
        return c;
    }

    /// Sized so the trainable count lands within 1% of 2.19 M / 2.20 M.
    static model_config paper(task_mode mode = task_mode::multi)
    {
        model_config c;
        c.hidden = 220;
        c.dense = 256;
        c.mode = mode;
        return c;
    }

    bool operator==(const model_config&) const = default;
};

inline nlohmann::json to_json(const model_config& c)
{
    return {{"n_inputs", c.n_inputs}, {"hidden", c.hidden}, {"dense", c.dense},           {"layers", c.layers},
            {"n_tvs", c.n_tvs},       {"n_phonemes", c.n_phonemes}, {"mode", std::string(to_string(c.mode))}};
}

inline model_config model_config_from_json(const nlohmann::json& j, model_config c = {})
{
    c.n_inputs = j.value("n_inputs", c.n_inputs);
    c.hidden = j.value("hidden", c.hidden);
    c.dense = j.value("dense", c.dense);
    c.layers = j.value("layers", c.layers);
    c.n_tvs = j.value("n_tvs", c.n_tvs);
    c.n_phonemes = j.value("n_phonemes", c.n_phonemes);
    if (j.contains("mode")) {
        c.mode = parse_task_mode(j.at("mode").get<std::string>());
    }
    if (c.n_inputs == 0 || c.hidden == 0 || c.dense == 0 || c.layers == 0 || c.n_tvs == 0 || c.n_phonemes == 0) {
        throw error(errc::invalid_config, "model dimensions must be positive");
    }
    return c;
}

/// Closed-form trainable scalar count for a configuration.
inline std::size_t count_params(const model_config& c)
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::size_t in = l == 0 ? c.n_inputs : 2 * c.hidden;
        n += 2 * gru_cell_param_count(in, c.hidden);
    }
    n += c.dense * 2 * c.hidden + c.dense;
    n += c.n_tvs * c.dense + c.n_tvs;
    if (c.mode == task_mode::multi) {
        n += c.n_phonemes * c.dense + c.n_phonemes;
    }
    return n;
}

inline std::size_t phoneme_head_size(const model_config& c) { return c.n_phonemes * c.dense + c.n_phonemes; }

/// All trainable weights of the network.
class model_params {
public:
    model_params() = default;

    /// Zero-initialized parameters with the right shapes.
    explicit model_params(const model_config& cfg) : config_(cfg)
    {
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::size_t in = l == 0 ? cfg.n_inputs : 2 * cfg.hidden;
            const std::string prefix = "layer" + std::to_string(l);
            layers_.push_back({gru_cell_params(in, cfg.hidden, prefix + ".fwd"),
                               gru_cell_params(in, cfg.hidden, prefix + ".bwd")});
        }
        const auto h2 = static_cast<Eigen::Index>(2 * cfg.hidden);
        const auto d = static_cast<Eigen::Index>(cfg.dense);
        dense_w_ = {"dense.W", matrix::Zero(d, h2), {}};
        dense_b_ = {"dense.b", matrix::Zero(1, d), {}};
        tv_w_ = {"tv_head.W", matrix::Zero(static_cast<Eigen::Index>(cfg.n_tvs), d), {}};
        tv_b_ = {"tv_head.b", matrix::Zero(1, static_cast<Eigen::Index>(cfg.n_tvs)), {}};
        if (cfg.mode == task_mode::multi) {
            ph_w_ = parameter{"phoneme_head.W", matrix::Zero(static_cast<Eigen::Index>(cfg.n_phonemes), d), {}};
            ph_b_ = parameter{"phoneme_head.b", matrix::Zero(1, static_cast<Eigen::Index>(cfg.n_phonemes)), {}};
        }
    }

    /// Uniform(-s, s) weights with s = sqrt(1 / fan_in), zero biases. The
    /// phoneme head is drawn from its own stream, so single- and multi-task
    /// models with one seed share an identical trunk and TV head.
    static model_params initialized(const model_config& cfg, std::uint64_t seed)
    {
        model_params p(cfg);
        rng trunk(derive_seed(seed, "init-trunk"));
        const auto fill = [](rng& gen, parameter& w) {
            const double s = std::sqrt(1.0 / static_cast<double>(w.value.cols()));
            for (Eigen::Index i = 0; i < w.value.size(); ++i) {
                w.value.data()[i] = gen.uniform(-s, s);
            }
        };
        for (auto& layer : p.layers_) {
            for (auto& cell : layer) {
                for (parameter* w : {&cell.W_z, &cell.W_r, &cell.W_h, &cell.U_z, &cell.U_r, &cell.U_h}) {
                    fill(trunk, *w);
                }
            }
        }
        fill(trunk, p.dense_w_);
        fill(trunk, p.tv_w_);
        if (p.ph_w_) {
            rng head(derive_seed(seed, "init-phoneme-head"));
            fill(head, *p.ph_w_);
        }
        return p;
    }

    [[nodiscard]] const model_config& config() const { return config_; }
    [[nodiscard]] bool multitask() const { return ph_w_.has_value(); }

    [[nodiscard]] std::size_t n_layers() const { return layers_.size(); }
    [[nodiscard]] gru_cell_params& cell(std::size_t layer, bool backward) { return layers_.at(layer)[backward ? 1 : 0]; }
    [[nodiscard]] const gru_cell_params& cell(std::size_t layer, bool backward) const
    {
        return layers_.at(layer)[backward ? 1 : 0];
    }
    parameter& dense_w() { return dense_w_; }
    parameter& dense_b() { return dense_b_; }
    parameter& tv_w() { return tv_w_; }
    parameter& tv_b() { return tv_b_; }
    [[nodiscard]] const parameter& dense_w() const { return dense_w_; }
    [[nodiscard]] const parameter& dense_b() const { return dense_b_; }
    [[nodiscard]] const parameter& tv_w() const { return tv_w_; }
    [[nodiscard]] const parameter& tv_b() const { return tv_b_; }
    parameter& ph_w() { return require_head(ph_w_); }
    parameter& ph_b() { return require_head(ph_b_); }
    [[nodiscard]] const parameter& ph_w() const { return require_head(ph_w_); }
    [[nodiscard]] const parameter& ph_b() const { return require_head(ph_b_); }

    /// Recurrent layers and the shared dense layer.
    std::vector<parameter*> trunk()
    {
        std::vector<parameter*> out;
        for (auto& layer : layers_) {
            for (auto& cell : layer) {
                cell.for_each([&](parameter& p) { out.push_back(&p); });
            }
        }
        out.push_back(&dense_w_);
        out.push_back(&dense_b_);
        return out;
    }

    std::vector<parameter*> tv_head() { return {&tv_w_, &tv_b_}; }

    std::vector<parameter*> phoneme_head()
    {
        if (!ph_w_) {
            return {};
        }
        return {&*ph_w_, &*ph_b_};
    }

    std::vector<parameter*> all()
    {
        auto out = trunk();
        for (auto* p : tv_head()) {
            out.push_back(p);
        }
        for (auto* p : phoneme_head()) {
            out.push_back(p);
        }
        return out;
    }

    [[nodiscard]] std::vector<const parameter*> all() const
    {
        auto out = const_cast<model_params&>(*this).all();
        return {out.begin(), out.end()};
    }

    void zero_grad()
    {
        for (auto* p : all()) {
            p->zero_grad();
        }
    }

    [[nodiscard]] parameter* find(const std::string& name)
    {
        for (auto* p : all()) {
            if (p->name == name) {
                return p;
            }
        }
        return nullptr;
    }

private:
    template <typename Opt>
    static decltype(*std::declval<Opt&>()) require_head(Opt& head)
    {
        if (!head) {
            throw error(errc::graph_error, "single-task model has no phoneme head");
        }
        return *head;
    }

    model_config config_;
    std::vector<std::array<gru_cell_params, 2>> layers_;
    parameter dense_w_, dense_b_, tv_w_, tv_b_;
    std::optional<parameter> ph_w_, ph_b_;
};

/// Exact number of trainable scalars held by `p`.
inline std::size_t count_params(const model_params& p)
{
    std::size_t n = 0;
    for (const auto* q : p.all()) {
        n += q->size();
    }
    return n;
}

struct model_outputs {
    var tv;
    std::optional<var> logits;
};

template <typename Params>
concept model_params_ref = std::same_as<std::remove_const_t<Params>, model_params>;

/// Records a forward pass. `x` stacks a batch of sequences as rows
/// t * batch + b. With const parameters nothing is tracked for backward.
template <model_params_ref Params>
model_outputs forward(tape& t, Params& params, const matrix& x, std::size_t batch)
{
    const auto& cfg = params.config();
    if (static_cast<std::size_t>(x.cols()) != cfg.n_inputs) {
        throw error(errc::dimension_mismatch, "forward: input has " + std::to_string(x.cols()) + " columns, model expects "
                                                  + std::to_string(cfg.n_inputs));
    }
    var h = t.constant(x, "input");
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        const std::string name = "bigru layer " + std::to_string(l);
        const var f = gru_sequence(t, h, params.cell(l, false), batch, false, name + " (forward)");
        const var b = gru_sequence(t, h, params.cell(l, true), batch, true, name + " (backward)");
        h = concat_cols(t, f, b, name + " concat");
    }
    const var shared = tanh(t, affine(t, h, t.leaf(params.dense_w()), t.leaf(params.dense_b()), "shared dense"),
                            "shared dense tanh");
    model_outputs out;
    out.tv = affine(t, shared, t.leaf(params.tv_w()), t.leaf(params.tv_b()), "tv head");
    if (params.multitask()) {
        out.logits = affine(t, shared, t.leaf(params.ph_w()), t.leaf(params.ph_b()), "phoneme head");
    }
    return out;
}

struct prediction {
    matrix tv;     ///< L x 9
    matrix logits; ///< L x 41, empty for single-task models
};

/// Inference on one utterance (L x n_inputs).
inline prediction predict(const model_params& params, const matrix& features)
{
    tape t;
    const auto out = forward(t, params, features, 1);
    prediction p{t.value(out.tv), {}};
    if (out.logits) {
        p.logits = t.value(*out.logits);
    }
    return p;
}

} // namespace mtlsi::nn
