#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>

#include "mtlsi/nn/autodiff.hpp"

namespace mtlsi::train {

struct schedule_config {
    double base_lr = 1e-3;
    int hold_epochs = 10;
    int decay_interval = 5;
    double decay_factor = 0.5;
};

/// Constant for the first `hold_epochs` epochs (1-based), then multiplied by
/// `decay_factor` once per started block of `decay_interval` epochs:
///   lr = base * gamma^ceil((epoch - hold) / interval).
inline double lr_at(int epoch, const schedule_config& s)
{
    if (epoch < 1) {
        throw error(errc::invalid_config, "epochs are numbered from 1");
    }
    if (epoch <= s.hold_epochs) {
        return s.base_lr;
    }
    const int over = epoch - s.hold_epochs;
    const int decays = (over + s.decay_interval - 1) / s.decay_interval;
    return s.base_lr * std::pow(s.decay_factor, decays);
}

struct adam_config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moments and step counts are kept per
/// parameter name, so a step over a subset of parameters leaves the others
/// (and their optimizer state) untouched.
class adam {
public:
    explicit adam(adam_config cfg = {}) : cfg_(cfg) {}

    void step(std::span<nn::parameter* const> params, double lr)
    {
        for (const nn::parameter* p : params) {
            if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
                throw error(errc::dimension_mismatch, "gradient of '" + p->name + "' does not match its value");
            }
            if (!p->grad.allFinite()) {
                throw error(errc::numerical_error, "non-finite gradient for '" + p->name + "'");
            }
        }
        for (nn::parameter* p : params) {
            auto& s = slots_[p->name];
            if (s.m.size() == 0) {
                s.m = matrix::Zero(p->value.rows(), p->value.cols());
                s.v = matrix::Zero(p->value.rows(), p->value.cols());
            }
            ++s.t;
            s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * p->grad;
            s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
            const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
            p->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg_.epsilon);
        }
        ++steps_;
    }

    [[nodiscard]] long steps() const { return steps_; }

    void reset()
    {
        slots_.clear();
        steps_ = 0;
    }

private:
    struct slot {
        matrix m;
        matrix v;
        long t = 0;
    };

    adam_config cfg_;
    std::map<std::string, slot> slots_;
    long steps_ = 0;
};

} // namespace mtlsi::train
