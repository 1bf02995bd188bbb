#pragma once

// Flat tensor container: "ATV1", u32 rank, u32 dims[rank], then a row-major
// little-endian payload of float32 or int32. Plus minimal PCM16 WAV and raw
// float32 audio readers/writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mtlsi/error.hpp"
#include "mtlsi/types.hpp"

namespace mtlsi::io {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

namespace fs = std::filesystem;

inline constexpr char k_tensor_magic[4] = {'A', 'T', 'V', '1'};

template <typename T>
struct tensor {
    std::vector<std::uint32_t> dims;
    std::vector<T> values;

    [[nodiscard]] std::size_t numel() const
    {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t b) { return a * b; });
    }
};

inline std::vector<char> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::missing_tensor, "cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::span<const char> bytes)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw error(errc::io_error, "cannot write '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw error(errc::io_error, "short write to '" + path.string() + "'");
    }
}

template <typename T>
void write_tensor(const fs::path& path, const tensor<T>& t)
{
    static_assert(sizeof(T) == 4);
    if (t.values.size() != t.numel()) {
        throw error(errc::dimension_mismatch, "tensor payload does not match its dims");
    }
    std::vector<char> bytes(8 + 4 * t.dims.size() + 4 * t.values.size());
    std::memcpy(bytes.data(), k_tensor_magic, 4);
    const auto rank = static_cast<std::uint32_t>(t.dims.size());
    std::memcpy(bytes.data() + 4, &rank, 4);
    std::memcpy(bytes.data() + 8, t.dims.data(), 4 * t.dims.size());
    std::memcpy(bytes.data() + 8 + 4 * t.dims.size(), t.values.data(), 4 * t.values.size());
    write_file(path, bytes);
}

template <typename T>
tensor<T> read_tensor(const fs::path& path)
{
    static_assert(sizeof(T) == 4);
    if (!fs::exists(path)) {
        throw error(errc::missing_tensor, "tensor file '" + path.string() + "' does not exist");
    }
    const auto bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), k_tensor_magic, 4) != 0) {
        throw error(errc::schema_mismatch, "'" + path.string() + "' is not an ATV1 tensor file");
    }
    std::uint32_t rank = 0;
    std::memcpy(&rank, bytes.data() + 4, 4);
    if (rank > 8 || bytes.size() < 8 + 4 * static_cast<std::size_t>(rank)) {
        throw error(errc::schema_mismatch, "'" + path.string() + "' has a corrupt header");
    }
    tensor<T> t;
    t.dims.resize(rank);
    std::memcpy(t.dims.data(), bytes.data() + 8, 4 * rank);
    const std::size_t offset = 8 + 4 * static_cast<std::size_t>(rank);
    if (bytes.size() - offset != 4 * t.numel()) {
        throw error(errc::dimension_mismatch, "'" + path.string() + "' payload size does not match its dims");
    }
    t.values.resize(t.numel());
    std::memcpy(t.values.data(), bytes.data() + offset, bytes.size() - offset);
    return t;
}

inline void write_matrix(const fs::path& path, const fmatrix& m)
{
    tensor<float> t{{static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                    std::vector<float>(m.data(), m.data() + m.size())};
    write_tensor(path, t);
}

inline fmatrix read_matrix(const fs::path& path)
{
    auto t = read_tensor<float>(path);
    if (t.dims.size() != 2) {
        throw error(errc::dimension_mismatch, "'" + path.string() + "' is not a rank-2 tensor");
    }
    fmatrix m(t.dims[0], t.dims[1]);
    std::copy(t.values.begin(), t.values.end(), m.data());
    return m;
}

inline void write_labels(const fs::path& path, std::span<const std::int32_t> labels)
{
    write_tensor(path, tensor<std::int32_t>{{static_cast<std::uint32_t>(labels.size())},
                                           std::vector<std::int32_t>(labels.begin(), labels.end())});
}

inline std::vector<std::int32_t> read_labels(const fs::path& path)
{
    auto t = read_tensor<std::int32_t>(path);
    if (t.dims.size() != 1) {
        throw error(errc::dimension_mismatch, "'" + path.string() + "' is not a rank-1 label tensor");
    }
    return std::move(t.values);
}

// ---- audio ----------------------------------------------------------------

inline void write_raw_f32(const fs::path& path, std::span<const float> samples)
{
    write_file(path, std::span<const char>(reinterpret_cast<const char*>(samples.data()), samples.size() * 4));
}

inline std::vector<float> read_raw_f32(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw error(errc::missing_tensor, "audio file '" + path.string() + "' does not exist");
    }
    const auto bytes = read_file(path);
    if (bytes.size() % 4 != 0) {
        throw error(errc::schema_mismatch, "'" + path.string() + "' is not a float32 stream");
    }
    std::vector<float> out(bytes.size() / 4);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

struct wav_audio {
    std::vector<float> samples;
    int sample_rate = 0;
};

inline void write_wav_pcm16(const fs::path& path, std::span<const float> samples, int sample_rate)
{
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<char> bytes(44 + data_bytes);
    const auto put32 = [&](std::size_t at, std::uint32_t v) { std::memcpy(bytes.data() + at, &v, 4); };
    const auto put16 = [&](std::size_t at, std::uint16_t v) { std::memcpy(bytes.data() + at, &v, 2); };
    std::memcpy(bytes.data(), "RIFF", 4);
    put32(4, 36 + data_bytes);
    std::memcpy(bytes.data() + 8, "WAVEfmt ", 8);
    put32(16, 16);
    put16(20, 1); // PCM
    put16(22, 1); // mono
    put32(24, static_cast<std::uint32_t>(sample_rate));
    put32(28, static_cast<std::uint32_t>(sample_rate * 2));
    put16(32, 2);
    put16(34, 16);
    std::memcpy(bytes.data() + 36, "data", 4);
    put32(40, data_bytes);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const float clipped = std::clamp(samples[i], -1.0f, 1.0f);
        const auto v = static_cast<std::int16_t>(std::lround(clipped * 32767.0f));
        std::memcpy(bytes.data() + 44 + 2 * i, &v, 2);
    }
    write_file(path, bytes);
}

inline wav_audio read_wav_pcm16(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw error(errc::missing_tensor, "audio file '" + path.string() + "' does not exist");
    }
    const auto bytes = read_file(path);
    const auto get32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        std::memcpy(&v, bytes.data() + at, 4);
        return v;
    };
    const auto get16 = [&](std::size_t at) {
        std::uint16_t v = 0;
        std::memcpy(&v, bytes.data() + at, 2);
        return v;
    };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw error(errc::schema_mismatch, "'" + path.string() + "' is not a RIFF/WAVE file");
    }
    wav_audio out;
    bool have_fmt = false;
    std::size_t at = 12;
    while (at + 8 <= bytes.size()) {
        const std::uint32_t size = get32(at + 4);
        const std::size_t body = at + 8;
        if (body + size > bytes.size()) {
            break;
        }
        if (std::memcmp(bytes.data() + at, "fmt ", 4) == 0 && size >= 16) {
            if (get16(body) != 1 || get16(body + 2) != 1 || get16(body + 14) != 16) {
                throw error(errc::schema_mismatch, "'" + path.string() + "' must be PCM16 mono");
            }
            out.sample_rate = static_cast<int>(get32(body + 4));
            have_fmt = true;
        } else if (std::memcmp(bytes.data() + at, "data", 4) == 0 && have_fmt) {
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                std::int16_t v = 0;
                std::memcpy(&v, bytes.data() + body + 2 * i, 2);
                out.samples[i] = static_cast<float>(v) / 32767.0f;
            }
            return out;
        }
        at = body + size + (size & 1U);
    }
    throw error(errc::schema_mismatch, "'" + path.string() + "' has no PCM data chunk");
}

} // namespace mtlsi::io
