#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/corpus/utterance.hpp"
#include "mtlsi/error.hpp"
#include "mtlsi/random.hpp"

namespace mtlsi::corpus {

enum class subset { train, dev, test };

inline std::string_view to_string(subset s)
{
    switch (s) {
    case subset::train: return "train";
    case subset::dev: return "dev";
    case subset::test: return "test";
    }
    return "?";
}

inline subset parse_subset(std::string_view s)
{
    if (s == "train") {
        return subset::train;
    }
    if (s == "dev") {
        return subset::dev;
    }
    if (s == "test") {
        return subset::test;
    }
    throw error(errc::invalid_config, "unknown subset '" + std::string(s) + "'");
}

struct corpus_split {
    std::vector<std::string> train;
    std::vector<std::string> dev;
    std::vector<std::string> test;
    std::map<std::string, subset> speakers;

    [[nodiscard]] const std::vector<std::string>& ids(subset s) const
    {
        return s == subset::train ? train : (s == subset::dev ? dev : test);
    }

    bool operator==(const corpus_split&) const = default;
};

/// Speaker-independent split. Speakers are shuffled with `seed`; the first
/// min(n_train_speakers, n - 2) train, the remaining held-out speakers are
/// dealt whole to dev/test so the two utterance counts stay as close as
/// possible. Utterance order within each subset follows corpus order.
inline corpus_split split_speakers(const std::vector<utterance>& utterances, std::size_t n_train_speakers,
                                   std::uint64_t seed)
{
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> speakers;
    for (const auto& u : utterances) {
        if (counts[u.speaker]++ == 0) {
            speakers.push_back(u.speaker);
        }
    }
    if (speakers.size() < 3) {
        throw error(errc::insufficient_speakers,
                    "need at least 3 speakers for a train/dev/test split, got " + std::to_string(speakers.size()));
    }
    std::sort(speakers.begin(), speakers.end());
    rng gen(derive_seed(seed, "split"));
    gen.shuffle(std::span<std::string>(speakers));

    const std::size_t n_train = std::clamp<std::size_t>(n_train_speakers, 1, speakers.size() - 2);
    corpus_split split;
    for (std::size_t i = 0; i < n_train; ++i) {
        split.speakers[speakers[i]] = subset::train;
    }
    std::vector<std::string> held(speakers.begin() + static_cast<std::ptrdiff_t>(n_train), speakers.end());
    // Largest speakers first, each to whichever held-out side is smaller.
    std::stable_sort(held.begin(), held.end(),
                     [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
    std::size_t dev_count = 0;
    std::size_t test_count = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
        const bool to_dev = i == 0 || (i > 1 && dev_count <= test_count);
        if (to_dev) {
            split.speakers[held[i]] = subset::dev;
            dev_count += counts[held[i]];
        } else {
            split.speakers[held[i]] = subset::test;
            test_count += counts[held[i]];
        }
    }
    for (const auto& u : utterances) {
        switch (split.speakers.at(u.speaker)) {
        case subset::train: split.train.push_back(u.id); break;
        case subset::dev: split.dev.push_back(u.id); break;
        case subset::test: split.test.push_back(u.id); break;
        }
    }
    return split;
}

inline nlohmann::json to_json(const corpus_split& split)
{
    nlohmann::json speakers = nlohmann::json::object();
    for (const auto& [name, s] : split.speakers) {
        speakers[name] = std::string(to_string(s));
    }
    return {{"train", split.train}, {"dev", split.dev}, {"test", split.test}, {"speakers", speakers}};
}

inline corpus_split split_from_json(const nlohmann::json& j)
{
    try {
        corpus_split split;
        split.train = j.at("train").get<std::vector<std::string>>();
        split.dev = j.at("dev").get<std::vector<std::string>>();
        split.test = j.at("test").get<std::vector<std::string>>();
        for (const auto& [name, s] : j.at("speakers").items()) {
            split.speakers[name] = parse_subset(s.get<std::string>());
        }
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::schema_mismatch, std::string("bad split file: ") + e.what());
    }
}

} // namespace mtlsi::corpus
