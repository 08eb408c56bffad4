#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lfd {

using Point2 = Eigen::Vector2d;

/// The seven canonical landmarks. "Left" is image-left.
enum class Landmark { EyeL = 0, EyeR, NoseC, MouthL, MouthC, MouthR, ChinC };

inline constexpr std::size_t kLandmarkCount = 7;

inline constexpr std::array<Landmark, kLandmarkCount> kAllLandmarks = {
    Landmark::EyeL,   Landmark::EyeR,   Landmark::NoseC, Landmark::MouthL,
    Landmark::MouthC, Landmark::MouthR, Landmark::ChinC};

std::string_view landmark_name(Landmark lm);
/// Throws ParseError for unknown names.
Landmark landmark_from_name(std::string_view name);

/// Named landmark coordinates; absent entries model missing annotations.
class LandmarkSet {
 public:
  LandmarkSet() = default;

  bool has(Landmark lm) const { return points_[index(lm)].has_value(); }
  const std::optional<Point2>& get(Landmark lm) const { return points_[index(lm)]; }
  /// Throws InvalidArgument if absent.
  const Point2& at(Landmark lm) const;
  void set(Landmark lm, const Point2& p) { points_[index(lm)] = p; }
  void clear(Landmark lm) { points_[index(lm)].reset(); }

  std::vector<Landmark> present() const;
  std::size_t size() const { return present().size(); }

  bool operator==(const LandmarkSet& other) const;

 private:
  static std::size_t index(Landmark lm) { return static_cast<std::size_t>(lm); }
  std::array<std::optional<Point2>, kLandmarkCount> points_{};
};

}  // namespace lfd
