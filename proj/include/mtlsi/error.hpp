#pragma once

#include <stdexcept>
#include <string>

namespace mtlsi {

enum class errc {
    empty_audio,
    dimension_mismatch,
    too_short,
    bad_alignment,
    bad_label,
    insufficient_speakers,
    bad_spec,
    schema_mismatch,
    missing_tensor,
    io_error,
    numerical_error,
    graph_error,
    undefined_correlation,
    unknown_utterance,
    invalid_config,
};

inline const char* to_string(errc code) noexcept
{
    switch (code) {
    case errc::empty_audio: return "EmptyAudio";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::too_short: return "TooShort";
    case errc::bad_alignment: return "BadAlignment";
    case errc::bad_label: return "BadLabel";
    case errc::insufficient_speakers: return "InsufficientSpeakers";
    case errc::bad_spec: return "BadSpec";
    case errc::schema_mismatch: return "SchemaMismatch";
    case errc::missing_tensor: return "MissingTensor";
    case errc::io_error: return "IoError";
    case errc::numerical_error: return "NumericalError";
    case errc::graph_error: return "GraphError";
    case errc::undefined_correlation: return "UndefinedCorrelation";
    case errc::unknown_utterance: return "UnknownUtterance";
    case errc::invalid_config: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure raised by the toolkit carries one of the codes above.
class error : public std::runtime_error {
public:
    error(errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
    {
    }

    [[nodiscard]] errc code() const noexcept { return code_; }

    /// Runtime failures (numerical blow-ups, graph misuse, I/O) as opposed to
    /// bad user input. The CLI maps these to exit code 2.
    [[nodiscard]] bool is_runtime() const noexcept
    {
        return code_ == errc::numerical_error || code_ == errc::graph_error
            || code_ == errc::io_error;
    }

private:
    errc code_;
};

} // namespace mtlsi
