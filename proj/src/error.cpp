#include "deskrec/error.hpp"

namespace deskrec {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::UnknownOperation: return "UnknownOperation";
    case Errc::MissingField: return "MissingField";
    case Errc::SchemaError: return "SchemaError";
    case Errc::MalformedRegionId: return "MalformedRegionId";
    case Errc::MissingMeta: return "MissingMeta";
    case Errc::GapInIndices: return "GapInIndices";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RateExceedsSource: return "RateExceedsSource";
    case Errc::ImageDecode: return "ImageDecode";
    case Errc::Io: return "Io";
    case Errc::RegionOutOfBounds: return "RegionOutOfBounds";
    case Errc::ProviderError: return "ProviderError";
    case Errc::ImageLimitExceeded: return "ImageLimitExceeded";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::CacheCorrupt: return "CacheCorrupt";
    case Errc::NoJsonFound: return "NoJsonFound";
    case Errc::ParseError: return "ParseError";
    case Errc::EmbeddingFailure: return "EmbeddingFailure";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::WindowFailed: return "WindowFailed";
    case Errc::RunFailed: return "RunFailed";
    case Errc::SizeLimit: return "SizeLimit";
    case Errc::EmptyDataset: return "EmptyDataset";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace deskrec
