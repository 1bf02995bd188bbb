#pragma once

// MFCC front end: 2 s segmentation, 20 ms / 10 ms Hamming framing, 40-band
// mel filterbank, 13 orthonormal DCT-II cepstra, per-utterance z-norm.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mtlsi/error.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::signal {

struct audio_segment {
    std::vector<float> samples;
    int sample_rate = 0;

    [[nodiscard]] double duration() const
    {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

inline bool all_finite(std::span<const float> samples)
{
    return std::all_of(samples.begin(), samples.end(), [](float v) { return std::isfinite(v); });
}

/// Splits a recording into consecutive segments of `seconds` each; the last
/// one is zero-padded at the end.
inline std::vector<audio_segment> segment_audio(std::span<const float> samples, int sample_rate,
                                                double seconds = k_segment_seconds)
{
    if (samples.empty()) {
        throw error(errc::empty_audio, "cannot segment an empty recording");
    }
    if (sample_rate <= 0) {
        throw error(errc::invalid_config, "sample rate must be positive");
    }
    if (!all_finite(samples)) {
        throw error(errc::numerical_error, "audio contains non-finite samples");
    }
    const auto seg_len = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    std::vector<audio_segment> out;
    for (std::size_t start = 0; start < samples.size(); start += seg_len) {
        audio_segment seg{std::vector<float>(seg_len, 0.0f), sample_rate};
        const std::size_t n = std::min(seg_len, samples.size() - start);
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), n, seg.samples.begin());
        out.push_back(std::move(seg));
    }
    return out;
}

struct frame_config {
    double win_ms = 20.0;
    double hop_ms = 10.0;
    /// y[n] = x[n] - a x[n-1]; 0 disables it.
    double preemphasis = 0.0;
};

inline std::size_t window_length(int sample_rate, const frame_config& cfg = {})
{
    return static_cast<std::size_t>(std::llround(cfg.win_ms * sample_rate / 1000.0));
}

inline std::size_t frame_start(std::size_t t, int sample_rate, const frame_config& cfg = {})
{
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(t) * cfg.hop_ms * sample_rate / 1000.0));
}

inline std::vector<double> hamming(std::size_t n)
{
    std::vector<double> w(n, 1.0);
    if (n < 2) {
        return w;
    }
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i)
                                      / static_cast<double>(n - 1));
    }
    return w;
}

/// Cuts a segment into Hamming-windowed frames on a fixed 100 frames/s grid.
/// Frame t starts at round(t * hop * fs); frames running past the end are
/// zero-padded. Returns one frame per row.
inline matrix frame_signal(const audio_segment& segment, const frame_config& cfg = {})
{
    if (segment.sample_rate <= 0 || segment.samples.empty()) {
        throw error(errc::empty_audio, "segment has no samples");
    }
    const std::size_t win = window_length(segment.sample_rate, cfg);
    const auto n_frames = static_cast<std::size_t>(
        std::llround(segment.duration() * 1e3 / cfg.hop_ms));
    const auto window = hamming(win);

    std::vector<double> x(segment.samples.begin(), segment.samples.end());
    if (cfg.preemphasis != 0.0) {
        for (std::size_t i = x.size() - 1; i > 0; --i) {
            x[i] -= cfg.preemphasis * x[i - 1];
        }
    }

    matrix frames = matrix::Zero(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(win));
    for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t start = frame_start(t, segment.sample_rate, cfg);
        for (std::size_t i = 0; i < win && start + i < x.size(); ++i) {
            frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = x[start + i] * window[i];
        }
    }
    return frames;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n) {
        p <<= 1;
    }
    return p;
}

struct mel_filterbank {
    std::size_t fft_size = 0;
    int sample_rate = 0;
    double f_low = 0.0;
    double f_high = 0.0;
    std::vector<double> centers_hz;
    matrix weights; ///< n_filters x (fft_size/2 + 1)

    [[nodiscard]] std::size_t n_filters() const { return static_cast<std::size_t>(weights.rows()); }
    [[nodiscard]] std::size_t n_bins() const { return fft_size / 2 + 1; }
};

/// Triangular filters with edges equally spaced on the mel scale between
/// f_low and f_high (default: 0 .. fs/2). Weights are evaluated at the exact
/// bin frequencies, peak value 1.
inline mel_filterbank make_mel_filterbank(std::size_t fft_size, int sample_rate,
                                          std::size_t n_filters = k_mel_filters, double f_low = 0.0,
                                          double f_high = -1.0)
{
    if (f_high < 0.0) {
        f_high = sample_rate / 2.0;
    }
    if (fft_size < 2 || n_filters == 0 || !(f_high > f_low)) {
        throw error(errc::invalid_config, "invalid mel filterbank parameters");
    }
    mel_filterbank fb;
    fb.fft_size = fft_size;
    fb.sample_rate = sample_rate;
    fb.f_low = f_low;
    fb.f_high = f_high;

    const double mel_lo = hz_to_mel(f_low);
    const double mel_hi = hz_to_mel(f_high);
    std::vector<double> edges(n_filters + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i)
                                          / static_cast<double>(n_filters + 1));
    }
    edges.front() = f_low;
    edges.back() = f_high;
    fb.centers_hz.assign(edges.begin() + 1, edges.end() - 1);

    const std::size_t bins = fb.n_bins();
    fb.weights = matrix::Zero(static_cast<Eigen::Index>(n_filters), static_cast<Eigen::Index>(bins));
    for (std::size_t m = 0; m < n_filters; ++m) {
        const double left = edges[m];
        const double center = edges[m + 1];
        const double right = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
            if (f <= left || f >= right) {
                continue;
            }
            const double rise = (f - left) / (center - left);
            const double fall = (right - f) / (right - center);
            fb.weights(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k))
                = std::max(0.0, std::min(rise, fall));
        }
    }
    return fb;
}

struct mfcc_config {
    std::size_t n_ceps = k_mfcc;
    double log_floor = 1e-10;
};

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
inline std::vector<double> dct2_orthonormal(std::span<const double> x, std::size_t n_out)
{
    const std::size_t n = x.size();
    std::vector<double> out(n_out, 0.0);
    for (std::size_t k = 0; k < n_out; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k)
                                   * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n)));
        }
        out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    }
    return out;
}

/// Cepstra for each windowed frame (one per row). Frames are zero-padded to the
/// filterbank's FFT size, which must be the next power of two of the frame
/// length.
inline matrix mfcc(const matrix& frames, const mel_filterbank& fb, const mfcc_config& cfg = {})
{
    const auto win = static_cast<std::size_t>(frames.cols());
    if (fb.fft_size != next_pow2(win)) {
        throw error(errc::dimension_mismatch,
                    "filterbank expects FFT size " + std::to_string(fb.fft_size) + " but frames of length "
                        + std::to_string(win) + " need " + std::to_string(next_pow2(win)));
    }
    if (cfg.n_ceps > fb.n_filters()) {
        throw error(errc::invalid_config, "more cepstra requested than mel filters");
    }

    Eigen::FFT<double> fft;
    std::vector<double> buffer(fb.fft_size);
    std::vector<std::complex<double>> spectrum;
    Eigen::VectorXd power(static_cast<Eigen::Index>(fb.n_bins()));
    std::vector<double> log_energy(fb.n_filters());

    matrix out(frames.rows(), static_cast<Eigen::Index>(cfg.n_ceps));
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
        std::fill(buffer.begin(), buffer.end(), 0.0);
        for (std::size_t i = 0; i < win; ++i) {
            buffer[i] = frames(t, static_cast<Eigen::Index>(i));
        }
        fft.fwd(spectrum, buffer);
        for (std::size_t k = 0; k < fb.n_bins(); ++k) {
            power(static_cast<Eigen::Index>(k)) = std::norm(spectrum[k]);
        }
        const Eigen::VectorXd energies = fb.weights * power;
        for (std::size_t m = 0; m < fb.n_filters(); ++m) {
            log_energy[m] = std::log(energies(static_cast<Eigen::Index>(m)) + cfg.log_floor);
        }
        const auto ceps = dct2_orthonormal(log_energy, cfg.n_ceps);
        for (std::size_t c = 0; c < cfg.n_ceps; ++c) {
            out(t, static_cast<Eigen::Index>(c)) = ceps[c];
        }
    }
    return out;
}

/// Per-column z-normalization with population standard deviation. Constant
/// columns become zero.
inline matrix znorm_utterance(const matrix& features)
{
    if (features.rows() < 2) {
        throw error(errc::too_short, "z-normalization needs at least two frames");
    }
    matrix out(features.rows(), features.cols());
    const auto n = static_cast<double>(features.rows());
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        const auto col = features.col(c);
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        const bool constant = col.maxCoeff() == col.minCoeff() || sd <= 1e-12 * std::max(1.0, std::abs(mean));
        if (constant) {
            out.col(c).setZero();
        } else {
            out.col(c) = (col.array() - mean) / sd;
        }
    }
    return out;
}

struct frontend_config {
    frame_config framing;
    mfcc_config cepstra;
};

/// Full front end for one 2 s segment: frames -> MFCC -> z-norm (L x 13).
inline matrix featurize(const audio_segment& segment, const frontend_config& cfg = {})
{
    const matrix frames = frame_signal(segment, cfg.framing);
    const auto fb = make_mel_filterbank(next_pow2(static_cast<std::size_t>(frames.cols())), segment.sample_rate);
    return znorm_utterance(mfcc(frames, fb, cfg.cepstra));
}

} // namespace mtlsi::signal
