#pragma once

#include <stdexcept>
#include <string>

namespace vsense {

enum class ErrorCode {
    // signals
    MissingColumn,
    NonUniformSampling,
    NonFiniteValue,
    EmptyInput,
    MissingChannelStats,
    RatioSumInvalid,
    TooFewSamples,
    // synthgen
    MissingParam,
    BadLength,
    InvalidConfig,
    // dsp
    InvalidBand,
    TooShort,
    // dtw
    TooFewWindows,
    // segmentation
    RecordingTooShort,
    MissingFlowChannel,
    MalformedSelectionFile,
    // models
    RankDeficient,
    ChannelMismatch,
    DivergedLoss,
    // epmetrics
    LengthMismatch,
    FlatRamp,
    NoCrossing,
    EmptyList,
    // io
    IoError,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. Every contract violation carries a code plus a
/// message naming the offending column, row, parameter or value.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace vsense
