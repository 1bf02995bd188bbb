#pragma once

// Checkpoint directory: model.json ({config, seed, epoch, algorithm,
// parameters}) plus params/<name>.atv, one float32 tensor per parameter.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mtlsi/corpus/manifest.hpp"
#include "mtlsi/corpus/tensor_io.hpp"
#include "mtlsi/nn/model.hpp"

namespace mtlsi::nn {

namespace fs = std::filesystem;

inline constexpr int k_checkpoint_version = 1;

struct checkpoint_info {
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string algorithm;
};

inline void save_checkpoint(const model_params& params, const checkpoint_info& info, const fs::path& dir)
{
    fs::create_directories(dir / "params");
    nlohmann::json names = nlohmann::json::array();
    for (const auto* p : params.all()) {
        io::write_matrix(dir / "params" / (p->name + ".atv"), p->value.cast<float>());
        names.push_back(p->name);
    }
    corpus::write_json(dir / "model.json", {{"version", k_checkpoint_version},
                                            {"config", to_json(params.config())},
                                            {"seed", info.seed},
                                            {"epoch", info.epoch},
                                            {"algorithm", info.algorithm},
                                            {"parameters", names}});
}

struct loaded_checkpoint {
    model_params params;
    checkpoint_info info;
};

inline loaded_checkpoint load_checkpoint(const fs::path& dir)
{
    const auto j = corpus::read_json(dir / "model.json");
    try {
        if (j.at("version").get<int>() != k_checkpoint_version) {
            throw error(errc::schema_mismatch, "unsupported checkpoint version in '" + dir.string() + "'");
        }
        loaded_checkpoint out{model_params(model_config_from_json(j.at("config"))),
                              {j.at("seed").get<std::uint64_t>(), j.at("epoch").get<int>(),
                               j.at("algorithm").get<std::string>()}};
        for (auto* p : out.params.all()) {
            const fmatrix m = io::read_matrix(dir / "params" / (p->name + ".atv"));
            if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
                throw error(errc::dimension_mismatch, "checkpoint tensor '" + p->name + "' is " + std::to_string(m.rows())
                                                          + "x" + std::to_string(m.cols()) + ", expected "
                                                          + std::to_string(p->value.rows()) + "x"
                                                          + std::to_string(p->value.cols()));
            }
            p->value = m.cast<double>();
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::schema_mismatch, "'" + (dir / "model.json").string() + "': " + e.what());
    }
}

} // namespace mtlsi::nn
