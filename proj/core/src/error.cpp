// SPDX-License-Identifier: Apache-2.0
#include "hflab/error.hpp"

namespace hflab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::CrossedBook: return "CrossedBook";
    case ErrorCode::UnsortedLevels: return "UnsortedLevels";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::OutOfOrderTimestamp: return "OutOfOrderTimestamp";
    case ErrorCode::InvalidRegime: return "InvalidRegime";
    case ErrorCode::ZeroQuantities: return "ZeroQuantities";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::StreamTooShort: return "StreamTooShort";
    case ErrorCode::SingularRegression: return "SingularRegression";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndivisibleHeads: return "IndivisibleHeads";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::QuantileOutOfRange: return "QuantileOutOfRange";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::InvalidAblation: return "InvalidAblation";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::DegenerateTargets: return "DegenerateTargets";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ModelHorizonMismatch: return "ModelHorizonMismatch";
    case ErrorCode::MalformedLadder: return "MalformedLadder";
    case ErrorCode::SignalStreamMismatch: return "SignalStreamMismatch";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::TooFewTrades: return "TooFewTrades";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::MalformedRecord:
    case ErrorCode::CrossedBook:
    case ErrorCode::UnsortedLevels:
    case ErrorCode::EmptySide:
    case ErrorCode::OutOfOrderTimestamp:
    case ErrorCode::BadCheckpoint:
      return 2;
    case ErrorCode::ZeroQuantities:
    case ErrorCode::NonPositivePrice:
    case ErrorCode::SingularRegression:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::DivergedTraining:
    case ErrorCode::DegenerateTargets:
    case ErrorCode::EmptyClass:
    case ErrorCode::DegenerateColumn:
    case ErrorCode::TooFewTrades:
      return 3;
    default:
      return 4;
  }
}

}  // namespace hflab
