#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlsi/error.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::metrics {

/// Pearson product-moment correlation
///   sum (x - mx)(y - my) / sqrt(sum (x - mx)^2 * sum (y - my)^2).
/// Both sequences constant is undefined (throws). Exactly one constant
/// sequence carries no linear association and yields 0.
inline double ppmc(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw error(errc::dimension_mismatch,
                    "ppmc: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()) + " differ");
    }
    if (x.size() < 2) {
        throw error(errc::too_short, "ppmc needs at least two samples");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 && syy == 0.0) {
        throw error(errc::undefined_correlation, "ppmc of two constant sequences");
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

/// Fraction of frames whose argmax logit equals the label. With
/// `include_pad == false` frames labeled as padding are ignored; an empty
/// denominator returns nullopt.
inline std::optional<double> phoneme_accuracy(std::span<const matrix> logits,
                                              std::span<const std::vector<std::int32_t>> labels, bool include_pad)
{
    if (logits.size() != labels.size()) {
        throw error(errc::dimension_mismatch, "phoneme_accuracy: logits and labels cover different utterance counts");
    }
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t u = 0; u < logits.size(); ++u) {
        if (static_cast<std::size_t>(logits[u].rows()) != labels[u].size()) {
            throw error(errc::dimension_mismatch, "phoneme_accuracy: frame count mismatch in utterance " + std::to_string(u));
        }
        for (std::size_t t = 0; t < labels[u].size(); ++t) {
            if (!include_pad && labels[u][t] == k_pad_label) {
                continue;
            }
            Eigen::Index best = 0;
            logits[u].row(static_cast<Eigen::Index>(t)).maxCoeff(&best);
            hits += best == labels[u][t] ? 1 : 0;
            ++total;
        }
    }
    if (total == 0) {
        return std::nullopt;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

enum class pooling { concatenated, per_utterance };

struct tv_scores {
    std::vector<std::optional<double>> per_tv; ///< nullopt: ground truth constant, excluded
    std::optional<double> average;             ///< mean over the defined entries
    std::vector<std::string> warnings;
};

/// Per-TV correlation between predictions and targets over speech frames
/// (padding-labeled frames excluded), then the unweighted mean over TVs.
inline tv_scores score_tvs(std::span<const matrix> predicted, std::span<const matrix> truth,
                           std::span<const std::vector<std::int32_t>> labels, pooling mode = pooling::concatenated)
{
    if (predicted.size() != truth.size() || truth.size() != labels.size() || truth.empty()) {
        throw error(errc::dimension_mismatch, "score_tvs: need equal, nonempty prediction/target/label lists");
    }
    const auto n_tv = static_cast<std::size_t>(truth.front().cols());
    tv_scores out;
    out.per_tv.assign(n_tv, std::nullopt);

    const auto speech_column = [&](std::size_t u, std::size_t c, const matrix& m) {
        std::vector<double> v;
        for (std::size_t t = 0; t < labels[u].size(); ++t) {
            if (labels[u][t] != k_pad_label) {
                v.push_back(m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
            }
        }
        return v;
    };

    for (std::size_t c = 0; c < n_tv; ++c) {
        if (mode == pooling::concatenated) {
            std::vector<double> x;
            std::vector<double> y;
            for (std::size_t u = 0; u < truth.size(); ++u) {
                const auto px = speech_column(u, c, predicted[u]);
                const auto ty = speech_column(u, c, truth[u]);
                x.insert(x.end(), px.begin(), px.end());
                y.insert(y.end(), ty.begin(), ty.end());
            }
            const bool constant_truth = y.size() < 2 || std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
            if (constant_truth) {
                out.warnings.push_back("TV column " + std::to_string(c) + " has constant ground truth; excluded");
                continue;
            }
            out.per_tv[c] = ppmc(x, y);
        } else {
            double acc = 0.0;
            std::size_t n = 0;
            for (std::size_t u = 0; u < truth.size(); ++u) {
                const auto px = speech_column(u, c, predicted[u]);
                const auto ty = speech_column(u, c, truth[u]);
                if (ty.size() < 2 || std::all_of(ty.begin(), ty.end(), [&](double v) { return v == ty[0]; })) {
                    continue;
                }
                acc += ppmc(px, ty);
                ++n;
            }
            if (n == 0) {
                out.warnings.push_back("TV column " + std::to_string(c) + " is constant in every utterance; excluded");
                continue;
            }
            out.per_tv[c] = acc / static_cast<double>(n);
        }
    }
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& v : out.per_tv) {
        if (v) {
            acc += *v;
            ++n;
        }
    }
    if (n > 0) {
        out.average = acc / static_cast<double>(n);
    }
    return out;
}

} // namespace mtlsi::metrics
