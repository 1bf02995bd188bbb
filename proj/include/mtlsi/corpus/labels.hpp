#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlsi/corpus/utterance.hpp"
#include "mtlsi/error.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::corpus {

struct phone_interval {
    std::string phone;
    double start_s = 0.0;
    double end_s = 0.0;
};

/// Frame t takes the label of the interval containing its center time
/// t * 10 ms + 5 ms (half-open intervals). Frames not covered by any interval
/// get the padding label.
inline std::vector<std::int32_t> align_to_frames(std::span<const phone_interval> intervals,
                                                 const phoneme_inventory& inventory, std::size_t n_frames = k_frames)
{
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        if (!(iv.end_s > iv.start_s) || iv.start_s < 0.0) {
            throw error(errc::bad_alignment, "interval " + std::to_string(i) + " ('" + iv.phone + "') is empty or negative");
        }
        if (i > 0 && iv.start_s < intervals[i - 1].end_s - 1e-9) {
            throw error(errc::bad_alignment,
                        "interval " + std::to_string(i) + " ('" + iv.phone + "') overlaps or precedes its predecessor");
        }
    }
    std::vector<int> ids;
    ids.reserve(intervals.size());
    for (const auto& iv : intervals) {
        ids.push_back(inventory.index_of(iv.phone));
    }

    std::vector<std::int32_t> labels(n_frames, k_pad_label);
    std::size_t j = 0;
    for (std::size_t t = 0; t < n_frames; ++t) {
        const double center = (static_cast<double>(t) + 0.5) / k_frame_rate;
        while (j < intervals.size() && center >= intervals[j].end_s) {
            ++j;
        }
        if (j < intervals.size() && center >= intervals[j].start_s) {
            labels[t] = ids[j];
        }
    }
    return labels;
}

inline matrix one_hot(std::span<const std::int32_t> labels, std::size_t n_classes = k_phonemes)
{
    matrix out = matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n_classes));
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= n_classes) {
            throw error(errc::bad_label, "label " + std::to_string(labels[t]) + " at frame " + std::to_string(t)
                                             + " outside [0, " + std::to_string(n_classes) + ")");
        }
        out(static_cast<Eigen::Index>(t), labels[t]) = 1.0;
    }
    return out;
}

/// Row-wise argmax; ties resolve to the lowest index.
inline std::vector<std::int32_t> argmax_rows(const matrix& m)
{
    std::vector<std::int32_t> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Eigen::Index best = 0;
        m.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(best);
    }
    return out;
}

/// Throws unless every row holds exactly one 1 and zeros elsewhere.
inline std::vector<std::int32_t> labels_from_one_hot(const matrix& m)
{
    std::vector<std::int32_t> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        int hot = -1;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            if (v == 1.0 && hot < 0) {
                hot = static_cast<int>(c);
            } else if (v != 0.0) {
                throw error(errc::bad_label, "row " + std::to_string(r) + " is not one-hot");
            }
        }
        if (hot < 0) {
            throw error(errc::bad_label, "row " + std::to_string(r) + " is not one-hot");
        }
        out[static_cast<std::size_t>(r)] = hot;
    }
    return out;
}

} // namespace mtlsi::corpus
