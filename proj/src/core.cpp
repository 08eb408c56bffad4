#include "lfd/error.hpp"
#include "lfd/landmarks.hpp"

namespace lfd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::CoincidentEyes: return "CoincidentEyes";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::PatchOutOfCanvas: return "PatchOutOfCanvas";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::PatchTooSmall: return "PatchTooSmall";
    case ErrorCode::EmptyConfig: return "EmptyConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoCommonLandmarks: return "NoCommonLandmarks";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::SplitOverlap: return "SplitOverlap";
    case ErrorCode::MissingVariant: return "MissingVariant";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {
constexpr std::array<std::string_view, kLandmarkCount> kNames = {
    "eyeL", "eyeR", "noseC", "mouthL", "mouthC", "mouthR", "chinC"};
}

std::string_view landmark_name(Landmark lm) { return kNames[static_cast<std::size_t>(lm)]; }

Landmark landmark_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Landmark>(i);
  }
  raise(ErrorCode::ParseError, "unknown landmark name '" + std::string(name) + "'");
}

const Point2& LandmarkSet::at(Landmark lm) const {
  const auto& p = points_[index(lm)];
  if (!p) raise(ErrorCode::InvalidArgument, "landmark " + std::string(landmark_name(lm)) + " absent");
  return *p;
}

std::vector<Landmark> LandmarkSet::present() const {
  std::vector<Landmark> out;
  for (Landmark lm : kAllLandmarks) {
    if (has(lm)) out.push_back(lm);
  }
  return out;
}

bool LandmarkSet::operator==(const LandmarkSet& other) const {
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    if (points_[i].has_value() != other.points_[i].has_value()) return false;
    if (points_[i] && *points_[i] != *other.points_[i]) return false;
  }
  return true;
}

}  // namespace lfd
