#pragma once

// Synthetic stand-in for an articulatory corpus. Each speaker has its own
// articulatory target per phone and a vocal-tract-length style frequency
// warp. Utterances are phone sequences drawn from a Markov chain; targets
// are held for each phone and Gaussian-smoothed into 100 Hz tract-variable
// trajectories; audio is a sum of sinusoids whose log-frequencies and
// log-amplitudes are fixed smooth functions of the current TV vector.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "mtlsi/corpus/labels.hpp"
#include "mtlsi/corpus/utterance.hpp"
#include "mtlsi/error.hpp"
#include "mtlsi/random.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::corpus {

inline constexpr std::size_t k_monophones = k_phonemes - 1;

struct synth_spec {
    std::size_t n_speakers = 3;
    std::size_t utterances_per_speaker = 50;
    std::uint64_t seed = 1;
    int sample_rate = 22050;

    /// TV trajectories are attenuated by at least 40 dB above this frequency.
    double cutoff_hz = 10.0;
    double noise_level = 0.01;

    double min_speech_s = 1.4;
    double max_speech_s = 2.0;
    double min_phone_s = 0.06;
    double max_phone_s = 0.18;
    /// Phone durations of "fast" utterances are scaled by this factor.
    double fast_rate_factor = 0.7;

    /// Row-stochastic 40x40 phone transition matrix; empty draws one from the seed.
    std::vector<std::vector<double>> transition;
    /// Initial phone distribution (40 entries); empty means uniform.
    std::vector<double> initial;

    std::vector<double> base_freqs_hz = {300.0, 900.0, 1700.0, 2600.0, 3600.0};
    double freq_depth = 0.3;
    double amp_depth = 0.6;
    double amplitude = 0.1;
    /// TV targets are emitted in millimetre-like units: unit-scale
    /// articulatory states times this factor.
    double tv_scale = 10.0;

    double speaker_warp = 0.12;          ///< frequency warp drawn from [1-w, 1+w]
    double speaker_shift_spread = 0.1;   ///< per-speaker offset of all targets
    double speaker_target_spread = 0.1;  ///< per-(speaker, phone) target jitter
};

/// Everything the generator draws from the seed before producing utterances.
struct synth_model {
    std::vector<std::vector<double>> transition;
    std::vector<double> initial;
    matrix freq_mix;  ///< K x 9
    matrix amp_mix;   ///< K x 9
    std::vector<std::vector<std::array<double, k_tvs>>> targets; ///< [speaker][phone]
    std::vector<double> warps;
};

inline std::string speaker_name(std::size_t s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "spk%02zu", s);
    return buf;
}

inline std::string utterance_name(std::size_t s, std::size_t u)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "spk%02zu_u%03zu", s, u);
    return buf;
}

inline void validate(const synth_spec& spec)
{
    const auto bad = [](const std::string& what) { throw error(errc::bad_spec, what); };
    if (spec.n_speakers == 0 || spec.utterances_per_speaker == 0) {
        bad("corpus must have at least one speaker and one utterance");
    }
    if (spec.sample_rate <= 0 || spec.cutoff_hz <= 0.0 || spec.cutoff_hz >= k_frame_rate / 2) {
        bad("sample rate must be positive and cutoff inside (0, 50) Hz");
    }
    if (!(spec.min_speech_s > 0.0 && spec.min_speech_s <= spec.max_speech_s && spec.max_speech_s <= k_segment_seconds)) {
        bad("speech duration range must lie in (0, 2] s");
    }
    if (!(spec.min_phone_s > 0.0 && spec.min_phone_s <= spec.max_phone_s)) {
        bad("phone duration range is invalid");
    }
    if (!(spec.tv_scale > 0.0)) {
        bad("tv_scale must be positive");
    }
    if (spec.noise_level < 0.0 || spec.base_freqs_hz.empty()) {
        bad("noise level must be nonnegative and at least one sinusoid is required");
    }
    const auto check_distribution = [&](const std::vector<double>& row, const std::string& what) {
        if (row.size() != k_monophones) {
            bad(what + " must have 40 entries");
        }
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) {
                bad(what + " has a negative or non-finite probability");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            bad(what + " sums to " + std::to_string(sum) + ", not 1");
        }
    };
    if (!spec.transition.empty()) {
        if (spec.transition.size() != k_monophones) {
            bad("transition matrix must be 40x40");
        }
        for (std::size_t i = 0; i < spec.transition.size(); ++i) {
            check_distribution(spec.transition[i], "transition row " + std::to_string(i));
        }
    }
    if (!spec.initial.empty()) {
        check_distribution(spec.initial, "initial distribution");
    }
}

inline synth_model realize(const synth_spec& spec)
{
    validate(spec);
    synth_model model;
    rng gen(derive_seed(spec.seed, "synth-model"));

    if (spec.transition.empty()) {
        model.transition.assign(k_monophones, std::vector<double>(k_monophones, 0.0));
        for (std::size_t i = 0; i < k_monophones; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k_monophones; ++j) {
                const double u = gen.uniform();
                model.transition[i][j] = i == j ? 0.0 : u * u * u;
                sum += model.transition[i][j];
            }
            for (auto& p : model.transition[i]) {
                p /= sum;
            }
        }
    } else {
        model.transition = spec.transition;
    }
    model.initial = spec.initial.empty() ? std::vector<double>(k_monophones, 1.0 / k_monophones) : spec.initial;

    const auto k = static_cast<Eigen::Index>(spec.base_freqs_hz.size());
    model.freq_mix.resize(k, k_tvs);
    model.amp_mix.resize(k, k_tvs);
    const double mix_scale = std::sqrt(3.0 / k_tvs); // unit pre-activation variance for U(-1,1) targets
    for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k_tvs); ++c) {
            model.freq_mix(r, c) = mix_scale * gen.normal();
        }
    }
    for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k_tvs); ++c) {
            model.amp_mix(r, c) = mix_scale * gen.normal();
        }
    }

    std::vector<std::array<double, k_tvs>> phone_base(k_monophones);
    for (auto& target : phone_base) {
        for (auto& v : target) {
            v = gen.uniform(-1.0, 1.0);
        }
    }
    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
        rng spk(derive_seed(spec.seed, "speaker-" + std::to_string(s)));
        model.warps.push_back(1.0 + spk.uniform(-spec.speaker_warp, spec.speaker_warp));
        std::array<double, k_tvs> shift{};
        for (auto& v : shift) {
            v = spec.speaker_shift_spread * spk.normal();
        }
        std::vector<std::array<double, k_tvs>> targets(k_monophones);
        for (std::size_t p = 0; p < k_monophones; ++p) {
            for (std::size_t j = 0; j < k_tvs; ++j) {
                targets[p][j] = phone_base[p][j] + shift[j] + spec.speaker_target_spread * spk.normal();
            }
        }
        model.targets.push_back(std::move(targets));
    }
    return model;
}

/// Gaussian standard deviation (seconds) whose magnitude response is exactly
/// -40 dB at `cutoff_hz` and falls monotonically above it.
inline double smoothing_sigma_s(double cutoff_hz)
{
    return std::sqrt(std::log(100.0) / (2.0 * std::numbers::pi * std::numbers::pi)) / cutoff_hz;
}

/// Zero-phase Gaussian low-pass along each column at 100 Hz; edges are
/// extended by replication so constant input stays constant.
inline matrix lowpass_trajectories(const matrix& raw, double cutoff_hz)
{
    const double sigma = smoothing_sigma_s(cutoff_hz) * k_frame_rate;
    const auto radius = static_cast<Eigen::Index>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (Eigen::Index i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        norm += w;
    }
    for (auto& w : kernel) {
        w /= norm;
    }
    matrix out(raw.rows(), raw.cols());
    const Eigen::Index n = raw.rows();
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            double acc = 0.0;
            for (Eigen::Index i = -radius; i <= radius; ++i) {
                const Eigen::Index src = std::clamp<Eigen::Index>(t + i, 0, n - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * raw(src, c);
            }
            out(t, c) = acc;
        }
    }
    return out;
}

namespace detail {

inline std::size_t draw(rng& gen, const std::vector<double>& probs)
{
    const double u = gen.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
            return i;
        }
    }
    // rounding left u above the total; take the last reachable state
    for (std::size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) {
            return i;
        }
    }
    return 0;
}

} // namespace detail

/// Intervals covering [0, speech_end) drawn from the phone chain.
inline std::vector<phone_interval> sample_phones(const synth_spec& spec, const synth_model& model,
                                                 const phoneme_inventory& inventory, rate_tag rate, rng& gen)
{
    const double speech_end = gen.uniform(spec.min_speech_s, spec.max_speech_s);
    const double scale = rate == rate_tag::fast ? spec.fast_rate_factor : 1.0;
    std::vector<phone_interval> out;
    std::size_t phone = detail::draw(gen, model.initial);
    double t = 0.0;
    while (t < speech_end) {
        const double dur = scale * gen.uniform(spec.min_phone_s, spec.max_phone_s);
        const double end = std::min(speech_end, t + dur);
        out.push_back({inventory.symbol(static_cast<int>(phone)), t, end});
        t = end;
        phone = detail::draw(gen, model.transition[phone]);
    }
    return out;
}

inline utterance synthesize_utterance(const synth_spec& spec, const synth_model& model,
                                      const phoneme_inventory& inventory, std::size_t speaker, std::size_t index)
{
    rng gen(derive_seed(derive_seed(spec.seed, speaker + 1), index + 1));
    utterance u;
    u.id = utterance_name(speaker, index);
    u.speaker = speaker_name(speaker);
    u.rate = index % 2 == 0 ? rate_tag::normal : rate_tag::fast;

    const auto intervals = sample_phones(spec, model, inventory, u.rate, gen);
    u.phoneme_labels = align_to_frames(intervals, inventory);
    const double speech_end = intervals.back().end_s;

    std::size_t n_speech = 0;
    while (n_speech < k_frames && u.phoneme_labels[n_speech] != k_pad_label) {
        ++n_speech;
    }

    // held targets -> smoothed trajectories over the speech frames
    matrix raw(static_cast<Eigen::Index>(std::max<std::size_t>(n_speech, 1)), k_tvs);
    raw.setZero();
    for (std::size_t t = 0; t < n_speech; ++t) {
        const auto& target = model.targets[speaker][static_cast<std::size_t>(u.phoneme_labels[t])];
        for (std::size_t j = 0; j < k_tvs; ++j) {
            raw(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = target[j];
        }
    }
    const matrix smooth = lowpass_trajectories(raw, spec.cutoff_hz);
    u.tv_targets = fmatrix::Zero(k_frames, k_tvs);
    for (std::size_t t = 0; t < n_speech; ++t) {
        u.tv_targets.row(static_cast<Eigen::Index>(t)) = (spec.tv_scale * smooth.row(static_cast<Eigen::Index>(t))).cast<float>();
    }

    // audio: sinusoids driven by the (float-rounded) trajectories
    const int fs = spec.sample_rate;
    const auto total = static_cast<std::size_t>(std::llround(k_segment_seconds * fs));
    const auto speech_samples = std::min(total, static_cast<std::size_t>(std::llround(speech_end * fs)));
    u.audio.sample_rate = fs;
    u.audio.samples.assign(total, 0.0f);

    const auto k = static_cast<std::size_t>(model.freq_mix.rows());
    std::vector<double> phase(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        phase[i] = gen.uniform(0.0, 2.0 * std::numbers::pi);
    }
    Eigen::Matrix<double, k_tvs, 1> tv;
    const double warp = model.warps[speaker];
    for (std::size_t n = 0; n < speech_samples; ++n) {
        const double pos = static_cast<double>(n) / fs * k_frame_rate - 0.5;
        const double lo_pos = std::floor(pos);
        const double frac = pos - lo_pos;
        const auto last = static_cast<Eigen::Index>(std::max<std::size_t>(n_speech, 1) - 1);
        const Eigen::Index lo = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(lo_pos), 0, last);
        const Eigen::Index hi = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(lo_pos) + 1, 0, last);
        for (std::size_t j = 0; j < k_tvs; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            tv(jj) = ((1.0 - frac) * u.tv_targets(lo, jj) + frac * u.tv_targets(hi, jj)) / spec.tv_scale;
        }
        double sample = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double f = spec.base_freqs_hz[i] * warp
                * std::exp(spec.freq_depth * std::tanh(model.freq_mix.row(ii).dot(tv)));
            const double a = spec.amplitude * std::exp(spec.amp_depth * std::tanh(model.amp_mix.row(ii).dot(tv)));
            phase[i] += 2.0 * std::numbers::pi * f / fs;
            sample += a * std::sin(phase[i]);
        }
        sample += spec.noise_level * gen.normal();
        u.audio.samples[n] = static_cast<float>(std::clamp(sample, -1.0, 1.0));
    }
    return u;
}

inline std::vector<utterance> generate_synthetic(const synth_spec& spec,
                                                 const phoneme_inventory& inventory = default_inventory())
{
    const synth_model model = realize(spec);
    std::vector<utterance> out;
    out.reserve(spec.n_speakers * spec.utterances_per_speaker);
    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
        for (std::size_t i = 0; i < spec.utterances_per_speaker; ++i) {
            out.push_back(synthesize_utterance(spec, model, inventory, s, i));
        }
    }
    return out;
}

} // namespace mtlsi::corpus
