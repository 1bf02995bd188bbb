#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/corpus/tensor_io.hpp"
#include "mtlsi/corpus/utterance.hpp"
#include "mtlsi/error.hpp"

namespace mtlsi::corpus {

namespace fs = std::filesystem;

inline constexpr int k_manifest_version = 1;

enum class audio_format { raw_f32, wav_pcm16 };

inline std::string_view to_string(audio_format f) { return f == audio_format::raw_f32 ? "f32" : "pcm16"; }

struct corpus {
    int sample_rate = 0;
    phoneme_inventory inventory = default_inventory();
    std::vector<utterance> utterances;

    [[nodiscard]] const utterance& find(const std::string& id) const
    {
        for (const auto& u : utterances) {
            if (u.id == id) {
                return u;
            }
        }
        throw error(errc::unknown_utterance, "no utterance with id '" + id + "'");
    }
};

inline void write_json(const fs::path& path, const nlohmann::json& j)
{
    const std::string text = j.dump(2) + "\n";
    io::write_file(path, std::span<const char>(text.data(), text.size()));
}

inline nlohmann::json read_json(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw error(errc::missing_tensor, "file '" + path.string() + "' does not exist");
    }
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::schema_mismatch, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

/// Writes `corpus.json` plus one audio, tv and label file per utterance under `dir`.
inline void save_corpus(const corpus& c, const fs::path& dir, audio_format format = audio_format::raw_f32)
{
    fs::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& u : c.utterances) {
        validate(u);
        const std::string audio_rel = "audio/" + u.id + (format == audio_format::raw_f32 ? ".f32" : ".wav");
        const std::string tv_rel = "tv/" + u.id + ".atv";
        const std::string label_rel = "labels/" + u.id + ".atv";
        if (format == audio_format::raw_f32) {
            io::write_raw_f32(dir / audio_rel, u.audio.samples);
        } else {
            io::write_wav_pcm16(dir / audio_rel, u.audio.samples, u.audio.sample_rate);
        }
        io::write_matrix(dir / tv_rel, u.tv_targets);
        io::write_labels(dir / label_rel, u.phoneme_labels);
        entries.push_back({{"id", u.id},
                           {"speaker", u.speaker},
                           {"rate_tag", std::string(to_string(u.rate))},
                           {"audio_file", audio_rel},
                           {"tv_file", tv_rel},
                           {"label_file", label_rel}});
    }
    const nlohmann::json manifest = {{"version", k_manifest_version},
                                     {"sample_rate", c.sample_rate},
                                     {"audio_format", std::string(to_string(format))},
                                     {"phoneme_inventory", c.inventory.symbols()},
                                     {"utterances", entries}};
    write_json(dir / "corpus.json", manifest);
}

/// Loads a corpus from its manifest. `path` may name the manifest or its directory.
inline corpus load_manifest(fs::path path)
{
    if (fs::is_directory(path)) {
        path /= "corpus.json";
    }
    const auto j = read_json(path);
    const fs::path dir = path.parent_path();
    corpus c;
    try {
        const int version = j.at("version").get<int>();
        if (version != k_manifest_version) {
            throw error(errc::schema_mismatch, "unsupported manifest version " + std::to_string(version));
        }
        c.sample_rate = j.at("sample_rate").get<int>();
        c.inventory = phoneme_inventory(j.at("phoneme_inventory").get<std::vector<std::string>>());
        const std::string format = j.value("audio_format", std::string("f32"));
        if (format != "f32" && format != "pcm16") {
            throw error(errc::schema_mismatch, "unknown audio format '" + format + "'");
        }
        for (const auto& e : j.at("utterances")) {
            utterance u;
            u.id = e.at("id").get<std::string>();
            u.speaker = e.at("speaker").get<std::string>();
            u.rate = parse_rate_tag(e.at("rate_tag").get<std::string>());
            const fs::path audio = dir / e.at("audio_file").get<std::string>();
            if (format == "f32") {
                u.audio = {io::read_raw_f32(audio), c.sample_rate};
            } else {
                auto wav = io::read_wav_pcm16(audio);
                if (wav.sample_rate != c.sample_rate) {
                    throw error(errc::schema_mismatch, "utterance '" + u.id + "': WAV sample rate "
                                                           + std::to_string(wav.sample_rate) + " differs from manifest");
                }
                u.audio = {std::move(wav.samples), c.sample_rate};
            }
            u.tv_targets = io::read_matrix(dir / e.at("tv_file").get<std::string>());
            u.phoneme_labels = io::read_labels(dir / e.at("label_file").get<std::string>());
            validate(u);
            c.utterances.push_back(std::move(u));
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::schema_mismatch, "'" + path.string() + "': " + e.what());
    }
    return c;
}

} // namespace mtlsi::corpus
