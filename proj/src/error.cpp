#include "vsense/error.hpp"

namespace vsense {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::NonUniformSampling: return "NonUniformSampling";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MissingChannelStats: return "MissingChannelStats";
        case ErrorCode::RatioSumInvalid: return "RatioSumInvalid";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::MissingParam: return "MissingParam";
        case ErrorCode::BadLength: return "BadLength";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidBand: return "InvalidBand";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::TooFewWindows: return "TooFewWindows";
        case ErrorCode::RecordingTooShort: return "RecordingTooShort";
        case ErrorCode::MissingFlowChannel: return "MissingFlowChannel";
        case ErrorCode::MalformedSelectionFile: return "MalformedSelectionFile";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::ChannelMismatch: return "ChannelMismatch";
        case ErrorCode::DivergedLoss: return "DivergedLoss";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::FlatRamp: return "FlatRamp";
        case ErrorCode::NoCrossing: return "NoCrossing";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

}  // namespace vsense
