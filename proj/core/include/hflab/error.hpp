// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hflab {

/// Failure categories raised across the library. CLI exit codes are derived
/// from these (see exit_code_for).
enum class ErrorCode {
  // lob-ingest
  MalformedRecord,
  CrossedBook,
  UnsortedLevels,
  EmptySide,
  OutOfOrderTimestamp,
  InvalidRegime,
  // features
  ZeroQuantities,
  NonPositivePrice,
  StreamTooShort,
  SingularRegression,
  // nn-core
  ShapeMismatch,
  IndivisibleHeads,
  OddDimension,
  QuantileOutOfRange,
  NonFiniteGradient,
  // models
  InvalidAblation,
  // train-eval
  DivergedTraining,
  EmptySplit,
  DegenerateTargets,
  EmptyClass,
  // backtest
  ModelHorizonMismatch,
  MalformedLadder,
  SignalStreamMismatch,
  DegenerateColumn,
  TooFewTrades,
  MissingModel,
  // plumbing
  Io,
  InvalidConfig,
  BadCheckpoint,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

/// Process exit status for a failure: 2 for I/O and unreadable inputs,
/// 3 for numeric failures, 4 for invalid configuration.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace hflab
