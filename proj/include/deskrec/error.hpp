#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deskrec {

enum class Errc {
  // action model
  UnknownOperation,
  MissingField,
  SchemaError,
  MalformedRegionId,
  // ingest
  MissingMeta,
  GapInIndices,
  DimensionMismatch,
  RateExceedsSource,
  ImageDecode,
  Io,
  // localizer
  RegionOutOfBounds,
  // gateway
  ProviderError,
  ImageLimitExceeded,
  AuthMissing,
  CacheCorrupt,
  NoJsonFound,
  ParseError,
  EmbeddingFailure,
  // pipelines
  InvalidConfig,
  WindowFailed,
  RunFailed,
  // evaluator
  SizeLimit,
  EmptyDataset,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by providers for failures worth retrying (connection drops, 5xx, 429).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message)
      : Error(Errc::ProviderError, message) {}
};

}  // namespace deskrec
