#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtlsi/corpus/manifest.hpp"
#include "mtlsi/corpus/split.hpp"
#include "mtlsi/signal/frontend.hpp"

namespace mtlsi::train {

/// One utterance ready for the network: normalized MFCCs, TV targets, labels.
struct sample {
    std::string id;
    std::string speaker;
    matrix features; ///< L x 13
    matrix tv;       ///< L x 9
    std::vector<std::int32_t> labels;
};

struct dataset {
    std::vector<sample> samples;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
    [[nodiscard]] bool empty() const { return samples.empty(); }
};

using feature_table = std::map<std::string, fmatrix>;

/// MFCC features for every utterance, rounded to float32 exactly as they are
/// stored on disk, so in-memory and file-based pipelines agree bit for bit.
inline feature_table featurize_corpus(const corpus::corpus& c, const signal::frontend_config& cfg = {})
{
    feature_table out;
    for (const auto& u : c.utterances) {
        out.emplace(u.id, signal::featurize(u.audio, cfg).cast<float>());
    }
    return out;
}

inline sample make_sample(const corpus::utterance& u, const fmatrix& features)
{
    if (static_cast<std::size_t>(features.rows()) != k_frames || static_cast<std::size_t>(features.cols()) != k_mfcc) {
        throw error(errc::dimension_mismatch, "features of '" + u.id + "' are " + std::to_string(features.rows()) + "x"
                                                  + std::to_string(features.cols()) + ", expected 200x13");
    }
    return {u.id, u.speaker, features.cast<double>(), u.tv_targets.cast<double>(), u.phoneme_labels};
}

/// Samples for `ids` in the given order.
inline dataset make_dataset(const corpus::corpus& c, const feature_table& features, std::span<const std::string> ids)
{
    dataset d;
    for (const auto& id : ids) {
        const auto& u = c.find(id);
        const auto it = features.find(id);
        if (it == features.end()) {
            throw error(errc::missing_tensor, "no features for utterance '" + id + "'");
        }
        d.samples.push_back(make_sample(u, it->second));
    }
    return d;
}

inline dataset make_dataset(const corpus::corpus& c, const feature_table& features)
{
    std::vector<std::string> ids;
    for (const auto& u : c.utterances) {
        ids.push_back(u.id);
    }
    return make_dataset(c, features, ids);
}

struct split_datasets {
    dataset train;
    dataset dev;
    dataset test;

    [[nodiscard]] const dataset& get(corpus::subset s) const
    {
        return s == corpus::subset::train ? train : (s == corpus::subset::dev ? dev : test);
    }
};

inline split_datasets make_split_datasets(const corpus::corpus& c, const feature_table& features,
                                          const corpus::corpus_split& split)
{
    return {make_dataset(c, features, split.train), make_dataset(c, features, split.dev),
            make_dataset(c, features, split.test)};
}

/// A mini-batch laid out time-major: row t * size + b.
struct batch {
    matrix x;
    matrix tv;
    std::vector<std::int32_t> labels;
    std::size_t size = 0;
};

inline batch make_batch(const dataset& d, std::span<const std::size_t> indices)
{
    if (indices.empty()) {
        throw error(errc::invalid_config, "empty batch");
    }
    const auto b = static_cast<Eigen::Index>(indices.size());
    const auto& first = d.samples.at(indices[0]);
    const Eigen::Index steps = first.features.rows();
    batch out{matrix(steps * b, first.features.cols()), matrix(steps * b, first.tv.cols()),
              std::vector<std::int32_t>(static_cast<std::size_t>(steps * b)), indices.size()};
    for (Eigen::Index j = 0; j < b; ++j) {
        const auto& s = d.samples.at(indices[static_cast<std::size_t>(j)]);
        if (s.features.rows() != steps) {
            throw error(errc::dimension_mismatch, "utterance '" + s.id + "' has a different frame count");
        }
        for (Eigen::Index t = 0; t < steps; ++t) {
            out.x.row(t * b + j) = s.features.row(t);
            out.tv.row(t * b + j) = s.tv.row(t);
            out.labels[static_cast<std::size_t>(t * b + j)] = s.labels[static_cast<std::size_t>(t)];
        }
    }
    return out;
}

/// Consecutive chunks of `order` with at most `batch_size` entries each.
inline std::vector<std::vector<std::size_t>> chunk(std::span<const std::size_t> order, std::size_t batch_size)
{
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

} // namespace mtlsi::train
