#pragma once

// Experiment configuration: one JSON document with optional sections
// "synth", "split", "model", "train", "eval", "ablation", "gridsearch".
// A profile supplies every default; a config file overrides any subset.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/corpus/manifest.hpp"
#include "mtlsi/corpus/synth.hpp"
#include "mtlsi/metrics/ppmc.hpp"
#include "mtlsi/nn/model.hpp"
#include "mtlsi/train/grid_search.hpp"
#include "mtlsi/train/trainer.hpp"

namespace mtlsi::cli {

namespace fs = std::filesystem;

enum class profile { desk, paper };

inline profile parse_profile(std::string_view s)
{
    if (s == "desk") {
        return profile::desk;
    }
    if (s == "paper") {
        return profile::paper;
    }
    throw error(errc::invalid_config, "unknown profile '" + std::string(s) + "' (expected desk or paper)");
}

inline std::string_view to_string(profile p) { return p == profile::desk ? "desk" : "paper"; }

struct experiment_config {
    corpus::synth_spec synth;
    corpus::audio_format audio = corpus::audio_format::raw_f32;
    std::size_t n_train_speakers = 6;
    nn::model_config model;
    train::train_config train;
    metrics::pooling pooling = metrics::pooling::concatenated;
    std::vector<double> alphas{0.0, 0.1, 0.3, 0.5, 0.8, 1.0};
    std::vector<double> lr_grid = train::default_lr_grid();
    std::vector<std::size_t> batch_grid = train::default_batch_grid();
};

/// Desk: 3 speakers x 50 utterances, h = 16, batch 16, no learning-rate
/// decay (with four mini-batches per epoch the halving schedule stops
/// learning long before convergence). Paper: 8 speakers x 100 utterances,
/// the full-size network, batch 128 and gamma = 0.5; long-running.
inline experiment_config make_profile(profile p)
{
    experiment_config c;
    if (p == profile::desk) {
        c.model = nn::model_config::desk();
        c.train.batch_size = 16;
        c.train.lr_decay_factor = 1.0;
        c.train.max_epochs = 400;
    } else {
        c.synth.n_speakers = 8;
        c.synth.utterances_per_speaker = 100;
        c.model = nn::model_config::paper();
        c.train.batch_size = 128;
        c.train.lr_decay_factor = 0.5;
        c.train.max_epochs = 200;
    }
    return c;
}

inline nlohmann::json to_json(const corpus::synth_spec& s)
{
    nlohmann::json j = {{"n_speakers", s.n_speakers},
                        {"utterances_per_speaker", s.utterances_per_speaker},
                        {"seed", s.seed},
                        {"sample_rate", s.sample_rate},
                        {"cutoff_hz", s.cutoff_hz},
                        {"noise_level", s.noise_level},
                        {"min_speech_s", s.min_speech_s},
                        {"max_speech_s", s.max_speech_s},
                        {"min_phone_s", s.min_phone_s},
                        {"max_phone_s", s.max_phone_s},
                        {"fast_rate_factor", s.fast_rate_factor},
                        {"base_freqs_hz", s.base_freqs_hz},
                        {"freq_depth", s.freq_depth},
                        {"amp_depth", s.amp_depth},
                        {"amplitude", s.amplitude},
                        {"speaker_warp", s.speaker_warp},
                        {"speaker_shift_spread", s.speaker_shift_spread},
                        {"speaker_target_spread", s.speaker_target_spread},
                        {"tv_scale", s.tv_scale}};
    if (!s.transition.empty()) {
        j["transition"] = s.transition;
    }
    if (!s.initial.empty()) {
        j["initial"] = s.initial;
    }
    return j;
}

inline corpus::synth_spec synth_spec_from_json(const nlohmann::json& j, corpus::synth_spec s = {})
{
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.utterances_per_speaker = j.value("utterances_per_speaker", s.utterances_per_speaker);
    s.seed = j.value("seed", s.seed);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.cutoff_hz = j.value("cutoff_hz", s.cutoff_hz);
    s.noise_level = j.value("noise_level", s.noise_level);
    s.min_speech_s = j.value("min_speech_s", s.min_speech_s);
    s.max_speech_s = j.value("max_speech_s", s.max_speech_s);
    s.min_phone_s = j.value("min_phone_s", s.min_phone_s);
    s.max_phone_s = j.value("max_phone_s", s.max_phone_s);
    s.fast_rate_factor = j.value("fast_rate_factor", s.fast_rate_factor);
    s.base_freqs_hz = j.value("base_freqs_hz", s.base_freqs_hz);
    s.freq_depth = j.value("freq_depth", s.freq_depth);
    s.amp_depth = j.value("amp_depth", s.amp_depth);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.speaker_warp = j.value("speaker_warp", s.speaker_warp);
    s.speaker_shift_spread = j.value("speaker_shift_spread", s.speaker_shift_spread);
    s.speaker_target_spread = j.value("speaker_target_spread", s.speaker_target_spread);
    s.tv_scale = j.value("tv_scale", s.tv_scale);
    s.transition = j.value("transition", s.transition);
    s.initial = j.value("initial", s.initial);
    corpus::validate(s);
    return s;
}

inline nlohmann::json to_json(const experiment_config& c)
{
    return {{"synth", to_json(c.synth)},
            {"audio_format", std::string(corpus::to_string(c.audio))},
            {"split", {{"n_train_speakers", c.n_train_speakers}}},
            {"model", nn::to_json(c.model)},
            {"train", train::to_json(c.train)},
            {"eval", {{"pooling", c.pooling == metrics::pooling::concatenated ? "concatenated" : "per_utterance"}}},
            {"ablation", {{"alphas", c.alphas}}},
            {"gridsearch", {{"lr_grid", c.lr_grid}, {"batch_grid", c.batch_grid}}}};
}

namespace detail {

inline const nlohmann::json& section(const nlohmann::json& j, const char* name)
{
    static const nlohmann::json empty = nlohmann::json::object();
    if (!j.contains(name)) {
        return empty;
    }
    if (!j.at(name).is_object()) {
        throw error(errc::invalid_config, std::string("config section '") + name + "' must be an object");
    }
    return j.at(name);
}

} // namespace detail

/// Applies the sections present in `j` on top of `base`.
inline experiment_config apply_config(const nlohmann::json& j, experiment_config base)
{
    if (!j.is_object()) {
        throw error(errc::invalid_config, "config must be a JSON object");
    }
    static const std::vector<std::string> known{"synth", "audio_format", "split",    "model",
                                                "train", "eval",         "ablation", "gridsearch"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw error(errc::invalid_config, "unknown config section '" + key + "'");
        }
    }
    try {
        base.synth = synth_spec_from_json(detail::section(j, "synth"), base.synth);
        if (j.contains("audio_format")) {
            const auto f = j.at("audio_format").get<std::string>();
            if (f != "f32" && f != "pcm16") {
                throw error(errc::invalid_config, "audio_format must be f32 or pcm16");
            }
            base.audio = f == "f32" ? corpus::audio_format::raw_f32 : corpus::audio_format::wav_pcm16;
        }
        base.n_train_speakers = detail::section(j, "split").value("n_train_speakers", base.n_train_speakers);
        base.model = nn::model_config_from_json(detail::section(j, "model"), base.model);
        base.train = train::train_config_from_json(detail::section(j, "train"), base.train);
        const auto& ev = detail::section(j, "eval");
        if (ev.contains("pooling")) {
            const auto p = ev.at("pooling").get<std::string>();
            if (p != "concatenated" && p != "per_utterance") {
                throw error(errc::invalid_config, "eval.pooling must be concatenated or per_utterance");
            }
            base.pooling = p == "concatenated" ? metrics::pooling::concatenated : metrics::pooling::per_utterance;
        }
        base.alphas = detail::section(j, "ablation").value("alphas", base.alphas);
        base.lr_grid = detail::section(j, "gridsearch").value("lr_grid", base.lr_grid);
        base.batch_grid = detail::section(j, "gridsearch").value("batch_grid", base.batch_grid);
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::invalid_config, std::string("bad config value: ") + e.what());
    }
    for (double a : base.alphas) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw error(errc::invalid_config, "ablation alphas must lie in [0, 1]");
        }
    }
    return base;
}

inline experiment_config load_config(profile p, const std::optional<fs::path>& file)
{
    auto c = make_profile(p);
    if (file) {
        c = apply_config(corpus::read_json(*file), c);
    }
    return c;
}

} // namespace mtlsi::cli
