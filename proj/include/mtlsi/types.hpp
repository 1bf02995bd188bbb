#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include <Eigen/Dense>

namespace mtlsi {

using matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using fmatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using vector = Eigen::VectorXd;

inline constexpr std::size_t k_frames = 200;     // frames per 2 s segment
inline constexpr std::size_t k_mfcc = 13;        // cepstral coefficients per frame
inline constexpr std::size_t k_mel_filters = 40;
inline constexpr std::size_t k_tvs = 9;
inline constexpr std::size_t k_phonemes = 41;    // 40 monophones + padding
inline constexpr int k_pad_label = 40;
inline constexpr double k_segment_seconds = 2.0;
inline constexpr double k_frame_rate = 100.0;    // frames per second

/// Tract-variable column order used everywhere (targets, reports, plots).
inline constexpr std::array<std::string_view, k_tvs> k_tv_names = {
    "LA", "LP", "JA", "TTCL", "TTCD", "TMCL", "TMCD", "TBCL", "TBCD"};

} // namespace mtlsi
