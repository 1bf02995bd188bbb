#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mtlsi/error.hpp"
#include "mtlsi/signal/frontend.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::corpus {

/// 40 monophones followed by the padding symbol at index 40.
class phoneme_inventory {
public:
    explicit phoneme_inventory(std::vector<std::string> symbols) : symbols_(std::move(symbols))
    {
        if (symbols_.size() != k_phonemes) {
            throw error(errc::schema_mismatch, "phoneme inventory must have " + std::to_string(k_phonemes)
                                                   + " entries, got " + std::to_string(symbols_.size()));
        }
        std::set<std::string> seen(symbols_.begin(), symbols_.end());
        if (seen.size() != symbols_.size()) {
            throw error(errc::schema_mismatch, "phoneme inventory has duplicate symbols");
        }
    }

    [[nodiscard]] const std::vector<std::string>& symbols() const { return symbols_; }
    [[nodiscard]] std::size_t size() const { return symbols_.size(); }
    [[nodiscard]] const std::string& padding() const { return symbols_.back(); }
    [[nodiscard]] const std::string& symbol(int index) const { return symbols_.at(static_cast<std::size_t>(index)); }

    [[nodiscard]] int index_of(std::string_view symbol) const
    {
        const auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
        if (it == symbols_.end()) {
            throw error(errc::bad_label, "unknown phoneme '" + std::string(symbol) + "'");
        }
        return static_cast<int>(it - symbols_.begin());
    }

    bool operator==(const phoneme_inventory&) const = default;

private:
    std::vector<std::string> symbols_;
};

/// ARPAbet monophones plus silence; "<pad>" marks zero-padded frames.
inline phoneme_inventory default_inventory()
{
    return phoneme_inventory({"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH",
                              "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",
                              "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH", "T",  "TH", "UH",
                              "UW", "V",  "W",  "Y",  "Z",  "ZH", "SIL", "<pad>"});
}

enum class rate_tag { normal, fast };

inline std::string_view to_string(rate_tag r) { return r == rate_tag::normal ? "normal" : "fast"; }

inline rate_tag parse_rate_tag(std::string_view s)
{
    if (s == "normal") {
        return rate_tag::normal;
    }
    if (s == "fast") {
        return rate_tag::fast;
    }
    throw error(errc::schema_mismatch, "unknown rate tag '" + std::string(s) + "'");
}

struct utterance {
    std::string id;
    std::string speaker;
    rate_tag rate = rate_tag::normal;
    signal::audio_segment audio;
    fmatrix tv_targets;                 ///< L x 9, column order k_tv_names
    std::vector<std::int32_t> phoneme_labels; ///< length L, values in [0, 40]

    bool operator==(const utterance& o) const
    {
        return id == o.id && speaker == o.speaker && rate == o.rate && audio.sample_rate == o.audio.sample_rate
            && audio.samples == o.audio.samples && tv_targets.rows() == o.tv_targets.rows()
            && tv_targets.cols() == o.tv_targets.cols() && tv_targets == o.tv_targets
            && phoneme_labels == o.phoneme_labels;
    }
};

/// Throws on any violated utterance invariant; messages name the utterance.
inline void validate(const utterance& u)
{
    const auto fail = [&](errc code, const std::string& what) {
        throw error(code, "utterance '" + u.id + "': " + what);
    };
    if (u.audio.sample_rate <= 0) {
        fail(errc::schema_mismatch, "sample rate must be positive");
    }
    const auto expected = static_cast<std::size_t>(std::llround(k_segment_seconds * u.audio.sample_rate));
    if (u.audio.samples.size() != expected) {
        fail(errc::dimension_mismatch, "audio has " + std::to_string(u.audio.samples.size()) + " samples, expected "
                                           + std::to_string(expected));
    }
    if (!signal::all_finite(u.audio.samples)) {
        fail(errc::numerical_error, "audio contains non-finite samples");
    }
    if (static_cast<std::size_t>(u.tv_targets.rows()) != k_frames
        || static_cast<std::size_t>(u.tv_targets.cols()) != k_tvs) {
        fail(errc::dimension_mismatch, "tv targets are " + std::to_string(u.tv_targets.rows()) + "x"
                                           + std::to_string(u.tv_targets.cols()) + ", expected 200x9");
    }
    if (!u.tv_targets.allFinite()) {
        fail(errc::numerical_error, "tv targets contain non-finite values");
    }
    if (u.phoneme_labels.size() != k_frames) {
        fail(errc::dimension_mismatch,
             "label sequence has length " + std::to_string(u.phoneme_labels.size()) + ", expected 200");
    }
    for (std::size_t t = 0; t < k_frames; ++t) {
        const int label = u.phoneme_labels[t];
        if (label < 0 || label > k_pad_label) {
            fail(errc::bad_label, "frame " + std::to_string(t) + " has label " + std::to_string(label));
        }
        if (label == k_pad_label && !u.tv_targets.row(static_cast<Eigen::Index>(t)).isZero(0.0)) {
            fail(errc::schema_mismatch, "padded frame " + std::to_string(t) + " has nonzero tv targets");
        }
    }
    // Frames lying entirely inside the trailing zero run must be padding.
    std::size_t last_nonzero = 0;
    bool any_nonzero = false;
    for (std::size_t i = u.audio.samples.size(); i-- > 0;) {
        if (u.audio.samples[i] != 0.0f) {
            last_nonzero = i;
            any_nonzero = true;
            break;
        }
    }
    for (std::size_t t = 0; t < k_frames; ++t) {
        const std::size_t start = signal::frame_start(t, u.audio.sample_rate);
        const bool silent_tail = !any_nonzero || start > last_nonzero;
        if (silent_tail && u.phoneme_labels[t] != k_pad_label) {
            fail(errc::schema_mismatch, "frame " + std::to_string(t) + " lies in trailing zero padding but is not labeled as padding");
        }
    }
}

/// Frames that belong to real speech (label != padding).
inline std::size_t count_speech_frames(const utterance& u)
{
    return static_cast<std::size_t>(
        std::count_if(u.phoneme_labels.begin(), u.phoneme_labels.end(), [](int l) { return l != k_pad_label; }));
}

} // namespace mtlsi::corpus
