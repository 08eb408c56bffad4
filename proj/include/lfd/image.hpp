#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Core>

#include "lfd/landmarks.hpp"

namespace lfd {

using PixelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major luminance image, values in [0, 255].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  /// Validates range and finiteness; throws InvalidImage.
  explicit GrayImage(PixelMatrix pixels);

  int width() const { return static_cast<int>(pixels_.cols()); }
  int height() const { return static_cast<int>(pixels_.rows()); }
  bool empty() const { return pixels_.size() == 0; }

  double operator()(int x, int y) const { return pixels_(y, x); }
  /// Writes are clamped to [0, 255].
  void set(int x, int y, double v);

  const PixelMatrix& pixels() const { return pixels_; }

  /// Bilinear sample at (x, y) with pixel centers on integer coordinates.
  /// Points outside [0, w-1] x [0, h-1] return `fill`.
  double sample(double x, double y, double fill = 0.0) const;

  bool operator==(const GrayImage& other) const { return pixels_ == other.pixels_; }

 private:
  PixelMatrix pixels_;
};

/// p -> scale * R(angle) * p + (tx, ty)
struct SimilarityTransform {
  double angle = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  Point2 apply(const Point2& p) const;
  SimilarityTransform inverse() const;
  /// (this ∘ other)(p) = this(other(p))
  SimilarityTransform compose(const SimilarityTransform& other) const;
  Eigen::Matrix2d linear() const;

  /// Exact two-point solve: maps a0 -> b0 and a1 -> b1.
  static SimilarityTransform from_point_pairs(const Point2& a0, const Point2& a1,
                                              const Point2& b0, const Point2& b1);
};

inline constexpr int kFaceSize = 128;
inline constexpr int kFaceBorder = 48;
inline constexpr int kCanvasSize = kFaceSize + 2 * kFaceBorder;
inline const Point2 kCanonicalEyeLeft{kFaceBorder + 0.3 * kFaceSize, kFaceBorder + 0.4 * kFaceSize};
inline const Point2 kCanonicalEyeRight{kFaceBorder + 0.7 * kFaceSize, kFaceBorder + 0.4 * kFaceSize};

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
  bool contains(const Point2& p) const {
    return p.x() >= x0 && p.x() < x1 && p.y() >= y0 && p.y() < y1;
  }
};

inline constexpr PixelRect kFaceRect{kFaceBorder, kFaceBorder, kFaceBorder + kFaceSize,
                                     kFaceBorder + kFaceSize};

/// Normalized 224x224 canvas: 128x128 face centered in a 48 px border.
struct FacePatch {
  GrayImage canvas;
  SimilarityTransform transform;  // source image -> canvas

  static constexpr PixelRect face_rect() { return kFaceRect; }
  static constexpr int face_size() { return kFaceSize; }
  Point2 to_canvas(const Point2& source_point) const { return transform.apply(source_point); }
};

/// Rotates, scales and crops so the eyes land on the canonical positions.
/// Throws CoincidentEyes or OutOfBounds.
FacePatch normalize_face(const GrayImage& img, const Point2& eye_left, const Point2& eye_right);

struct DistortionParams {
  double perspective_ratio_std = 0.05;
  double rotation_std_deg = 10.0;
  double noise_mean = 10.0;
  double noise_std = 5.0;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on negative standard deviations.
  void validate() const;
};

/// Perspective warp, rotation about the center, then clamped additive noise.
GrayImage distort(const GrayImage& img, const DistortionParams& params);

/// Square crop of side round(size * 128) centered at `center` (canvas coords).
/// Throws PatchOutOfCanvas.
GrayImage extract_patch(const FacePatch& face, const Point2& center, double size);

/// Side length of the patch returned by extract_patch.
int patch_side(double size);

/// 8-bit PGM (P5) or PNG; color inputs are converted with BT.601 weights.
GrayImage load_image(const std::filesystem::path& path);
/// Binary PGM, values rounded to 8 bits.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace lfd
