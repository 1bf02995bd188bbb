#pragma once

#include "mtlsi/corpus/labels.hpp"
#include "mtlsi/nn/autodiff.hpp"

namespace mtlsi::train {

/// Mean of |predicted - target| over every entry.
inline double mae_loss(const matrix& predicted, const matrix& target)
{
    if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
        throw error(errc::dimension_mismatch, "mae_loss: shapes differ");
    }
    return (predicted - target).cwiseAbs().sum() / static_cast<double>(predicted.size());
}

/// Mean over frames of -log softmax(logits)[true class]; `one_hot_targets`
/// must have exactly one 1 per row.
inline double cross_entropy_loss(const matrix& logits, const matrix& one_hot_targets)
{
    if (logits.rows() != one_hot_targets.rows() || logits.cols() != one_hot_targets.cols()) {
        throw error(errc::dimension_mismatch, "cross_entropy_loss: shapes differ");
    }
    const auto labels = corpus::labels_from_one_hot(one_hot_targets);
    const matrix logp = nn::log_softmax(logits);
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        total -= logp(static_cast<Eigen::Index>(r), labels[r]);
    }
    return total / static_cast<double>(labels.size());
}

} // namespace mtlsi::train
