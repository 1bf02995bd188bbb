#pragma once

#include <cstdio>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/metrics/ppmc.hpp"
#include "mtlsi/nn/model.hpp"
#include "mtlsi/train/dataset.hpp"

namespace mtlsi::metrics {

/// Batched inference; result i belongs to sample i.
inline std::vector<nn::prediction> predict_dataset(const nn::model_params& params, const train::dataset& data,
                                                   std::size_t batch_size = 64)
{
    std::vector<nn::prediction> out(data.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (const auto& idx : train::chunk(order, batch_size)) {
        const auto b = train::make_batch(data, idx);
        nn::tape t;
        const auto res = nn::forward(t, params, b.x, b.size);
        const matrix& tv = t.value(res.tv);
        const auto bs = static_cast<Eigen::Index>(b.size);
        const Eigen::Index steps = tv.rows() / bs;
        for (Eigen::Index j = 0; j < bs; ++j) {
            auto& p = out[idx[static_cast<std::size_t>(j)]];
            p.tv.resize(steps, tv.cols());
            for (Eigen::Index s = 0; s < steps; ++s) {
                p.tv.row(s) = tv.row(s * bs + j);
            }
            if (res.logits) {
                const matrix& lg = t.value(*res.logits);
                p.logits.resize(steps, lg.cols());
                for (Eigen::Index s = 0; s < steps; ++s) {
                    p.logits.row(s) = lg.row(s * bs + j);
                }
            }
        }
    }
    return out;
}

struct eval_report {
    std::string model;
    std::vector<std::optional<double>> per_tv_ppmc;
    std::optional<double> average_ppmc;
    std::optional<double> phoneme_accuracy_excl_pad;
    std::optional<double> phoneme_accuracy_incl_pad;
    std::size_t n_test_frames = 0;
    std::size_t param_count = 0;
    std::optional<double> train_seconds;
    std::vector<std::string> warnings;
};

struct eval_options {
    pooling mode = pooling::concatenated;
    std::size_t batch_size = 64;
};

inline eval_report evaluate(const nn::model_params& params, const train::dataset& data, const eval_options& opt = {})
{
    if (data.empty()) {
        throw error(errc::invalid_config, "evaluation set is empty");
    }
    const auto preds = predict_dataset(params, data, opt.batch_size);
    std::vector<matrix> predicted;
    std::vector<matrix> truth;
    std::vector<std::vector<std::int32_t>> labels;
    std::vector<matrix> logits;
    eval_report r;
    for (std::size_t i = 0; i < data.size(); ++i) {
        predicted.push_back(preds[i].tv);
        truth.push_back(data.samples[i].tv);
        labels.push_back(data.samples[i].labels);
        if (params.multitask()) {
            logits.push_back(preds[i].logits);
        }
        for (auto l : data.samples[i].labels) {
            r.n_test_frames += l != k_pad_label ? 1 : 0;
        }
    }
    auto scores = score_tvs(predicted, truth, labels, opt.mode);
    r.per_tv_ppmc = std::move(scores.per_tv);
    r.average_ppmc = scores.average;
    r.warnings = std::move(scores.warnings);
    if (params.multitask()) {
        r.phoneme_accuracy_excl_pad = phoneme_accuracy(logits, labels, false);
        r.phoneme_accuracy_incl_pad = phoneme_accuracy(logits, labels, true);
    }
    r.param_count = nn::count_params(params);
    return r;
}

// ---- serialization --------------------------------------------------------

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json to_json(const eval_report& r)
{
    nlohmann::json per_tv = nlohmann::json::object();
    for (std::size_t i = 0; i < r.per_tv_ppmc.size(); ++i) {
        per_tv[std::string(k_tv_names.at(i))] = opt_json(r.per_tv_ppmc[i]);
    }
    nlohmann::json j = {{"model", r.model},
                        {"per_tv_ppmc", per_tv},
                        {"average_ppmc", opt_json(r.average_ppmc)},
                        {"phoneme_accuracy_excl_pad", opt_json(r.phoneme_accuracy_excl_pad)},
                        {"phoneme_accuracy_incl_pad", opt_json(r.phoneme_accuracy_incl_pad)},
                        {"n_test_frames", r.n_test_frames},
                        {"param_count", r.param_count},
                        {"warnings", r.warnings}};
    if (r.train_seconds) {
        j["train_seconds"] = *r.train_seconds;
    }
    return j;
}

inline std::string fixed(const std::optional<double>& v, int digits = 3)
{
    if (!v) {
        return "n/a";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return buf;
}

/// Rows of (name, report) as an aligned table: Model | LA .. TBCD | Average |
/// Phoneme acc (%) | Params [| Train s].
inline std::string tv_table_text(const std::vector<eval_report>& rows)
{
    bool timing = false;
    std::size_t name_width = 5;
    for (const auto& r : rows) {
        timing = timing || r.train_seconds.has_value();
        name_width = std::max(name_width, r.model.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width)) << "Model" << std::right;
    for (auto name : k_tv_names) {
        os << std::setw(8) << name;
    }
    os << std::setw(9) << "Average" << std::setw(12) << "PhonAcc(%)" << std::setw(10) << "Params";
    if (timing) {
        os << std::setw(10) << "Train(s)";
    }
    os << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(static_cast<int>(name_width)) << r.model << std::right;
        for (std::size_t i = 0; i < k_tvs; ++i) {
            os << std::setw(8) << fixed(i < r.per_tv_ppmc.size() ? r.per_tv_ppmc[i] : std::nullopt);
        }
        const auto acc = r.phoneme_accuracy_excl_pad ? std::optional<double>(100.0 * *r.phoneme_accuracy_excl_pad)
                                                     : std::nullopt;
        os << std::setw(9) << fixed(r.average_ppmc) << std::setw(12) << fixed(acc, 2) << std::setw(10) << r.param_count;
        if (timing) {
            os << std::setw(10) << fixed(r.train_seconds, 1);
        }
        os << "\n";
    }
    return os.str();
}

inline std::string csv_number(const std::optional<double>& v)
{
    if (!v) {
        return "";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

inline std::string tv_table_csv(const std::vector<eval_report>& rows)
{
    std::ostringstream os;
    os << "model";
    for (auto name : k_tv_names) {
        os << "," << name;
    }
    os << ",average,phoneme_accuracy_excl_pad,phoneme_accuracy_incl_pad,n_test_frames,param_count,train_seconds\n";
    for (const auto& r : rows) {
        os << r.model;
        for (std::size_t i = 0; i < k_tvs; ++i) {
            os << "," << csv_number(i < r.per_tv_ppmc.size() ? r.per_tv_ppmc[i] : std::nullopt);
        }
        os << "," << csv_number(r.average_ppmc) << "," << csv_number(r.phoneme_accuracy_excl_pad) << ","
           << csv_number(r.phoneme_accuracy_incl_pad) << "," << r.n_test_frames << "," << r.param_count << ","
           << csv_number(r.train_seconds) << "\n";
    }
    return os.str();
}

} // namespace mtlsi::metrics
