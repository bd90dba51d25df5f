// Copyright 2026 The SMART Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smart {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidEmbedding,
  kZeroNormToken,
  kDimensionMismatch,
  kEmptyQueryTokens,
  kEmptyCandidateTokens,
  kEmptyCorpus,
  kZeroNormProjection,
  kNonFiniteLoss,
  kNoDerangementExists,
  kUnknownId,
  kEmptyRelevantSet,
  kMissingQrels,
  kMissingLayer,
  kIoFailure,
  kHeterogeneousDim,
  kBadMagic,
  kUnsupportedVersion,
  kChecksumMismatch,
  kTruncatedFile,
  kParseError,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidEmbedding: return "InvalidEmbedding";
    case ErrorCode::kZeroNormToken: return "ZeroNormToken";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyQueryTokens: return "EmptyQueryTokens";
    case ErrorCode::kEmptyCandidateTokens: return "EmptyCandidateTokens";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kZeroNormProjection: return "ZeroNormProjection";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNoDerangementExists: return "NoDerangementExists";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kEmptyRelevantSet: return "EmptyRelevantSet";
    case ErrorCode::kMissingQrels: return "MissingQrels";
    case ErrorCode::kMissingLayer: return "MissingLayer";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kHeterogeneousDim: return "HeterogeneousDim";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

// Domain error. `index` carries the offending row, record, step or id when
// the failure is localized.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> index = std::nullopt)
      : std::runtime_error(std::string(error_code_name(code)) +
                           (index ? "(" + std::to_string(*index) + ")" : "") +
                           ": " + message),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> index_;
};

}  // namespace smart
