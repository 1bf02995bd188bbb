#pragma once

// run.json provenance records and atomically published output directories.
// Hashing uses OpenSSL's SHA-256, so targets including this header link
// against libcrypto.

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/corpus/manifest.hpp"
#include "mtlsi/corpus/tensor_io.hpp"
#include "mtlsi/version.hpp"

namespace mtlsi::cli {

namespace fs = std::filesystem;

inline std::string sha256_bytes(std::span<const char> bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw error(errc::io_error, "SHA-256 computation failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

inline std::string sha256_hex(std::string_view text) { return sha256_bytes(std::span<const char>(text.data(), text.size())); }

inline std::string sha256_file(const fs::path& path) { return sha256_bytes(io::read_file(path)); }

/// Regular files under `dir`, as sorted generic relative paths.
inline std::vector<std::string> list_files(const fs::path& dir)
{
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out.push_back(fs::relative(e.path(), dir).generic_string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Digest of a file, or of a directory as the hash of its "<sha>  <path>" listing.
inline std::string sha256_path(const fs::path& path)
{
    if (!fs::is_directory(path)) {
        return sha256_file(path);
    }
    std::string listing;
    for (const auto& rel : list_files(path)) {
        if (rel == "run.json") {
            continue;
        }
        listing += sha256_file(path / rel) + "  " + rel + "\n";
    }
    return sha256_hex(listing);
}

/// Provenance for one command invocation.
struct run_record {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, fs::path>> inputs; ///< (role, path)
    std::set<std::string> volatile_outputs;               ///< relative paths holding wall-clock data
};

/// Writes `dir/run.json`, hashing every input and every file already in `dir`.
inline void write_run_record(const run_record& r, const fs::path& dir)
{
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [role, path] : r.inputs) {
        inputs.push_back({{"role", role}, {"path", path.generic_string()}, {"sha256", sha256_path(path)}});
    }
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& rel : list_files(dir)) {
        if (rel == "run.json") {
            continue;
        }
        if (r.volatile_outputs.count(rel) != 0) {
            outputs.push_back({{"path", rel}, {"volatile", true}});
        } else {
            outputs.push_back({{"path", rel}, {"sha256", sha256_file(dir / rel)}});
        }
    }
    const nlohmann::json record = {{"tool", "mtlsi"},
                                   {"version", k_version},
                                   {"command", r.command},
                                   {"seed", r.seed},
                                   {"config", r.config},
                                   {"config_sha256", sha256_hex(r.config.dump())},
                                   {"inputs", inputs},
                                   {"outputs", outputs}};
    corpus::write_json(dir / "run.json", record);
}

/// An output directory that only appears under its final name once complete.
/// Work happens in a sibling staging directory; commit() swaps it in.
class staged_dir {
public:
    staged_dir(fs::path target, bool overwrite) : target_(std::move(target)), overwrite_(overwrite)
    {
        if (!target_.empty() && !target_.has_filename()) {
            target_ = target_.parent_path(); // "dir/" names "dir"
        }
        if (target_.empty()) {
            throw error(errc::invalid_config, "an output directory (--out) is required");
        }
        if (fs::exists(target_)) {
            if (!fs::is_directory(target_)) {
                throw error(errc::invalid_config, "output path '" + target_.string() + "' is not a directory");
            }
            if (!fs::is_empty(target_) && !overwrite_) {
                throw error(errc::invalid_config,
                            "output directory '" + target_.string() + "' is not empty; pass --overwrite to replace it");
            }
        }
        const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
        fs::create_directories(parent);
        staging_ = parent / (target_.filename().string() + ".partial");
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }

    staged_dir(const staged_dir&) = delete;
    staged_dir& operator=(const staged_dir&) = delete;

    ~staged_dir()
    {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    [[nodiscard]] const fs::path& path() const { return staging_; }
    [[nodiscard]] const fs::path& target() const { return target_; }

    void commit()
    {
        if (fs::exists(target_)) {
            fs::remove_all(target_);
        }
        fs::rename(staging_, target_);
        committed_ = true;
    }

private:
    fs::path target_;
    fs::path staging_;
    bool overwrite_;
    bool committed_ = false;
};

} // namespace mtlsi::cli
