#pragma once

// Training loops for the three regimes:
//  - single_task: minimize L_tv with the TV-only network.
//  - mtl_algo1:   per epoch, one full pass minimizing L_tv (trunk + TV head),
//                 then one pass over the same batch order minimizing L_ph
//                 (trunk + phoneme head). Fixed epoch budget.
//  - mtl_algo2:   per batch, one step on L_joint = L_tv + alpha * L_ph, with
//                 early stopping on the validation joint loss.
// All regimes keep the weights of the best validation epoch.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/metrics/evaluate.hpp"
#include "mtlsi/nn/model.hpp"
#include "mtlsi/random.hpp"
#include "mtlsi/train/dataset.hpp"
#include "mtlsi/train/optim.hpp"

namespace mtlsi::train {

enum class algorithm { single_task, mtl_algo1, mtl_algo2 };

inline std::string_view to_string(algorithm a)
{
    switch (a) {
    case algorithm::single_task: return "single_task";
    case algorithm::mtl_algo1: return "mtl_algo1";
    case algorithm::mtl_algo2: return "mtl_algo2";
    }
    return "?";
}

inline algorithm parse_algorithm(std::string_view s)
{
    if (s == "single_task" || s == "single") {
        return algorithm::single_task;
    }
    if (s == "mtl_algo1" || s == "algo1") {
        return algorithm::mtl_algo1;
    }
    if (s == "mtl_algo2" || s == "algo2") {
        return algorithm::mtl_algo2;
    }
    throw error(errc::invalid_config, "unknown algorithm '" + std::string(s) + "'");
}

/// best_so_far: stop after `patience` epochs without a new minimum.
/// literal: keep going while val[i] < val[i - patience].
enum class stop_rule { best_so_far, literal };

/// What "validation loss" means for early stopping and best-epoch selection.
enum class selector { val_loss, dev_ppmc };

struct train_config {
    algorithm algo = algorithm::mtl_algo2;
    double alpha = 0.5;
    int patience = 10;
    double base_lr = 1e-3;
    int lr_hold_epochs = 10;
    int lr_decay_interval = 5;
    double lr_decay_factor = 0.5;
    std::size_t batch_size = 128;
    int max_epochs = 100;
    std::uint64_t seed = 1;
    stop_rule rule = stop_rule::best_so_far;
    selector select = selector::val_loss;
    /// mtl_algo1 runs its full epoch budget unless this is set.
    bool algo1_early_stopping = false;

    [[nodiscard]] schedule_config schedule() const
    {
        return {base_lr, lr_hold_epochs, lr_decay_interval, lr_decay_factor};
    }

    void validate() const
    {
        const auto bad = [](const std::string& what) { throw error(errc::invalid_config, what); };
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            bad("alpha must lie in [0, 1]");
        }
        if (patience < 1) {
            bad("patience must be at least 1");
        }
        if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
            bad("lr_decay_factor must lie in (0, 1]");
        }
        if (!(base_lr > 0.0) || lr_hold_epochs < 0 || lr_decay_interval < 1) {
            bad("learning-rate schedule is invalid");
        }
        if (batch_size == 0 || max_epochs < 0) {
            bad("batch_size must be positive and max_epochs nonnegative");
        }
    }
};

inline double lr_at(int epoch, const train_config& cfg) { return lr_at(epoch, cfg.schedule()); }

inline nlohmann::json to_json(const train_config& c)
{
    return {{"algorithm", std::string(to_string(c.algo))},
            {"alpha", c.alpha},
            {"patience", c.patience},
            {"base_lr", c.base_lr},
            {"lr_hold_epochs", c.lr_hold_epochs},
            {"lr_decay_interval", c.lr_decay_interval},
            {"lr_decay_factor", c.lr_decay_factor},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"seed", c.seed},
            {"early_stop_rule", c.rule == stop_rule::best_so_far ? "best_so_far" : "literal"},
            {"selector", c.select == selector::val_loss ? "val_loss" : "dev_ppmc"},
            {"algo1_early_stopping", c.algo1_early_stopping}};
}

inline train_config train_config_from_json(const nlohmann::json& j, train_config c = {})
{
    try {
        if (j.contains("algorithm")) {
            c.algo = parse_algorithm(j.at("algorithm").get<std::string>());
        }
        c.alpha = j.value("alpha", c.alpha);
        c.patience = j.value("patience", c.patience);
        c.base_lr = j.value("base_lr", c.base_lr);
        c.lr_hold_epochs = j.value("lr_hold_epochs", c.lr_hold_epochs);
        c.lr_decay_interval = j.value("lr_decay_interval", c.lr_decay_interval);
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.seed = j.value("seed", c.seed);
        if (j.contains("early_stop_rule")) {
            const auto r = j.at("early_stop_rule").get<std::string>();
            if (r != "best_so_far" && r != "literal") {
                throw error(errc::invalid_config, "unknown early_stop_rule '" + r + "'");
            }
            c.rule = r == "literal" ? stop_rule::literal : stop_rule::best_so_far;
        }
        if (j.contains("selector")) {
            const auto s = j.at("selector").get<std::string>();
            if (s != "val_loss" && s != "dev_ppmc") {
                throw error(errc::invalid_config, "unknown selector '" + s + "'");
            }
            c.select = s == "dev_ppmc" ? selector::dev_ppmc : selector::val_loss;
        }
        c.algo1_early_stopping = j.value("algo1_early_stopping", c.algo1_early_stopping);
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::invalid_config, std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
}

/// Patience-based stopping on a lower-is-better validation series.
class early_stopper {
public:
    early_stopper(int patience, stop_rule rule) : patience_(patience), rule_(rule) {}

    /// Records one epoch's validation value; true means stop now.
    bool update(double value)
    {
        history_.push_back(value);
        const int epoch = static_cast<int>(history_.size());
        if (value < best_) {
            best_ = value;
            best_epoch_ = epoch;
        }
        if (rule_ == stop_rule::best_so_far) {
            return epoch - best_epoch_ >= patience_;
        }
        return epoch > patience_ && !(value < history_[static_cast<std::size_t>(epoch - 1 - patience_)]);
    }

    [[nodiscard]] int best_epoch() const { return best_epoch_; }
    [[nodiscard]] double best() const { return best_; }
    [[nodiscard]] bool improved_last() const { return best_epoch_ == static_cast<int>(history_.size()); }

private:
    int patience_;
    stop_rule rule_;
    std::vector<double> history_;
    double best_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
};

struct epoch_log {
    int epoch = 0;
    double l_tv = 0.0;
    std::optional<double> l_ph;
    double l_joint = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    long steps = 0;
};

struct train_result {
    nn::model_params params;   ///< weights of the best validation epoch
    std::vector<epoch_log> logs;
    int best_epoch = 0;        ///< 0: no epoch completed, params are the initial ones
    long optimizer_steps = 0;
    double train_seconds = 0.0;
    bool stopped_early = false;
    bool diverged = false;
    std::string message;
};

using epoch_callback = std::function<void(const epoch_log&)>;

namespace detail {

struct losses {
    double tv = 0.0;
    double ph = 0.0;
};

/// Frame-weighted validation losses over a whole dataset.
inline losses dataset_losses(const nn::model_params& params, const dataset& data, std::size_t batch_size)
{
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    losses total;
    for (const auto& idx : chunk(order, batch_size)) {
        const auto b = make_batch(data, idx);
        nn::tape t;
        const auto out = nn::forward(t, params, b.x, b.size);
        const double w = static_cast<double>(b.size) / static_cast<double>(data.size());
        total.tv += w * t.value(nn::mae(t, out.tv, b.tv)).value();
        if (out.logits) {
            total.ph += w * t.value(nn::cross_entropy(t, *out.logits, b.labels)).value();
        }
    }
    return total;
}

inline std::vector<nn::parameter*> concat(std::vector<nn::parameter*> a, const std::vector<nn::parameter*>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace detail

/// Runs `cfg.algo` from the given initial weights.
inline train_result train_model(nn::model_params params, const dataset& train_set, const dataset& dev_set,
                                const train_config& cfg, const epoch_callback& on_epoch = {})
{
    using clock = std::chrono::steady_clock;
    cfg.validate();
    if (train_set.empty()) {
        throw error(errc::invalid_config, "training set is empty");
    }
    const bool multitask = cfg.algo != algorithm::single_task;
    if (multitask != params.multitask()) {
        throw error(errc::invalid_config, std::string(to_string(cfg.algo)) + " needs a "
                                              + (multitask ? "multi-task" : "single-task") + " model");
    }
    if (cfg.select == selector::dev_ppmc && dev_set.empty()) {
        throw error(errc::invalid_config, "dev_ppmc selection needs a nonempty dev set");
    }

    train_result result;
    result.params = params;
    adam optimizer;
    rng order_rng(derive_seed(cfg.seed, "batch-order"));
    const bool stops_early = cfg.algo != algorithm::mtl_algo1 || cfg.algo1_early_stopping;
    early_stopper stopper(cfg.patience, cfg.rule);

    const auto all_params = params.all();
    const auto tv_group = detail::concat(params.trunk(), params.tv_head());
    const auto ph_group = detail::concat(params.trunk(), params.phoneme_head());

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::optional<clock::time_point> started;
    auto epoch_start = clock::now();

    try {
        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            const double lr = lr_at(epoch, cfg);
            order_rng.shuffle(std::span<std::size_t>(order));
            const auto batches = chunk(order, cfg.batch_size);
            const long steps_before = optimizer.steps();

            epoch_log log;
            log.epoch = epoch;
            log.lr = lr;
            double sum_tv = 0.0;
            double sum_ph = 0.0;
            const auto n = static_cast<double>(train_set.size());

            const auto start_step = [&] {
                if (!started) {
                    started = clock::now();
                    epoch_start = *started;
                }
            };

            if (cfg.algo == algorithm::mtl_algo1) {
                for (const auto& idx : batches) {
                    const auto b = make_batch(train_set, idx);
                    start_step();
                    params.zero_grad();
                    nn::tape t;
                    const auto out = nn::forward(t, params, b.x, b.size);
                    const auto loss = nn::mae(t, out.tv, b.tv);
                    t.backward(loss);
                    optimizer.step(tv_group, lr);
                    sum_tv += t.value(loss).value() * static_cast<double>(b.size) / n;
                }
                for (const auto& idx : batches) {
                    const auto b = make_batch(train_set, idx);
                    params.zero_grad();
                    nn::tape t;
                    const auto out = nn::forward(t, params, b.x, b.size);
                    const auto loss = nn::cross_entropy(t, *out.logits, b.labels);
                    t.backward(loss);
                    optimizer.step(ph_group, lr);
                    sum_ph += t.value(loss).value() * static_cast<double>(b.size) / n;
                }
                log.l_tv = sum_tv;
                log.l_ph = sum_ph;
                log.l_joint = sum_tv + sum_ph;
            } else {
                double sum_joint = 0.0;
                for (const auto& idx : batches) {
                    const auto b = make_batch(train_set, idx);
                    start_step();
                    params.zero_grad();
                    nn::tape t;
                    const auto out = nn::forward(t, params, b.x, b.size);
                    const auto tv_loss = nn::mae(t, out.tv, b.tv);
                    nn::var loss = tv_loss;
                    const double w = static_cast<double>(b.size) / n;
                    if (multitask) {
                        const auto ph_loss = nn::cross_entropy(t, *out.logits, b.labels);
                        loss = nn::add(t, tv_loss, nn::scale(t, ph_loss, cfg.alpha), "joint loss");
                        sum_ph += t.value(ph_loss).value() * w;
                    }
                    t.backward(loss);
                    optimizer.step(all_params, lr);
                    sum_tv += t.value(tv_loss).value() * w;
                    sum_joint += t.value(loss).value() * w;
                }
                log.l_tv = sum_tv;
                if (multitask) {
                    log.l_ph = sum_ph;
                }
                log.l_joint = sum_joint;
            }
            log.steps = optimizer.steps() - steps_before;

            // validation
            if (cfg.select == selector::dev_ppmc) {
                const auto report = metrics::evaluate(params, dev_set);
                log.val_loss = report.average_ppmc ? -*report.average_ppmc : 0.0;
            } else if (dev_set.empty()) {
                log.val_loss = log.l_joint;
            } else {
                const auto v = detail::dataset_losses(params, dev_set, cfg.batch_size);
                switch (cfg.algo) {
                case algorithm::single_task: log.val_loss = v.tv; break;
                case algorithm::mtl_algo1: log.val_loss = v.tv + v.ph; break;
                case algorithm::mtl_algo2: log.val_loss = v.tv + cfg.alpha * v.ph; break;
                }
            }
            if (!std::isfinite(log.val_loss)) {
                throw error(errc::numerical_error, "validation loss is not finite at epoch " + std::to_string(epoch));
            }

            const auto now = clock::now();
            log.seconds = std::chrono::duration<double>(now - epoch_start).count();
            epoch_start = now;

            const bool stop = stopper.update(log.val_loss);
            if (stopper.improved_last()) {
                result.params = params;
                result.best_epoch = epoch;
            }
            result.logs.push_back(log);
            if (on_epoch) {
                on_epoch(log);
            }
            if (stops_early && stop) {
                result.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    } catch (const error& e) {
        if (e.code() != errc::numerical_error) {
            throw;
        }
        result.diverged = true;
        result.message = e.what();
    }
    result.optimizer_steps = optimizer.steps();
    for (const auto& l : result.logs) {
        result.train_seconds += l.seconds;
    }
    return result;
}

inline train_result train_single_task(nn::model_params params, const dataset& train_set, const dataset& dev_set,
                                      const train_config& cfg, const epoch_callback& on_epoch = {})
{
    if (cfg.algo != algorithm::single_task) {
        throw error(errc::invalid_config, "train_single_task needs algorithm single_task");
    }
    return train_model(std::move(params), train_set, dev_set, cfg, on_epoch);
}

inline train_result train_algorithm1(nn::model_params params, const dataset& train_set, const dataset& dev_set,
                                     const train_config& cfg, const epoch_callback& on_epoch = {})
{
    if (cfg.algo != algorithm::mtl_algo1) {
        throw error(errc::invalid_config, "train_algorithm1 needs algorithm mtl_algo1");
    }
    return train_model(std::move(params), train_set, dev_set, cfg, on_epoch);
}

inline train_result train_algorithm2(nn::model_params params, const dataset& train_set, const dataset& dev_set,
                                     const train_config& cfg, const epoch_callback& on_epoch = {})
{
    if (cfg.algo != algorithm::mtl_algo2) {
        throw error(errc::invalid_config, "train_algorithm2 needs algorithm mtl_algo2");
    }
    return train_model(std::move(params), train_set, dev_set, cfg, on_epoch);
}

} // namespace mtlsi::train
