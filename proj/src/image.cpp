#include "lfd/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "lfd/error.hpp"
#include "lfd/random.hpp"

namespace lfd {

GrayImage::GrayImage(int width, int height, double fill) {
  if (width < 0 || height < 0) raise(ErrorCode::InvalidImage, "negative image size");
  if (!(fill >= 0.0 && fill <= 255.0)) raise(ErrorCode::InvalidImage, "fill outside [0,255]");
  pixels_ = PixelMatrix::Constant(height, width, fill);
}

GrayImage::GrayImage(PixelMatrix pixels) : pixels_(std::move(pixels)) {
  if (!pixels_.allFinite()) raise(ErrorCode::InvalidImage, "non-finite pixel");
  if (pixels_.size() > 0 && (pixels_.minCoeff() < 0.0 || pixels_.maxCoeff() > 255.0)) {
    raise(ErrorCode::InvalidImage, "pixel outside [0,255]");
  }
}

void GrayImage::set(int x, int y, double v) { pixels_(y, x) = std::clamp(v, 0.0, 255.0); }

double GrayImage::sample(double x, double y, double fill) const {
  constexpr double kSlack = 1e-9;
  const int w = width();
  const int h = height();
  if (w == 0 || h == 0) return fill;
  if (!(x >= -kSlack && y >= -kSlack && x <= w - 1 + kSlack && y <= h - 1 + kSlack)) return fill;
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  if (fx == 0.0 && fy == 0.0) return pixels_(y0, x0);
  const double top = pixels_(y0, x0) * (1.0 - fx) + pixels_(y0, x1) * fx;
  const double bottom = pixels_(y1, x0) * (1.0 - fx) + pixels_(y1, x1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

Eigen::Matrix2d SimilarityTransform::linear() const {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d m;
  m << scale * c, -scale * s, scale * s, scale * c;
  return m;
}

Point2 SimilarityTransform::apply(const Point2& p) const {
  return linear() * p + Point2(tx, ty);
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.angle = -angle;
  inv.scale = 1.0 / scale;
  const Point2 t = -(inv.linear() * Point2(tx, ty));
  inv.tx = t.x();
  inv.ty = t.y();
  return inv;
}

SimilarityTransform SimilarityTransform::compose(const SimilarityTransform& other) const {
  SimilarityTransform out;
  out.angle = angle + other.angle;
  out.scale = scale * other.scale;
  const Point2 t = linear() * Point2(other.tx, other.ty) + Point2(tx, ty);
  out.tx = t.x();
  out.ty = t.y();
  return out;
}

SimilarityTransform SimilarityTransform::from_point_pairs(const Point2& a0, const Point2& a1,
                                                          const Point2& b0, const Point2& b1) {
  const Point2 da = a1 - a0;
  const Point2 db = b1 - b0;
  if (da.norm() == 0.0) raise(ErrorCode::InvalidArgument, "degenerate source pair");
  SimilarityTransform t;
  t.scale = db.norm() / da.norm();
  t.angle = std::atan2(db.y(), db.x()) - std::atan2(da.y(), da.x());
  const Point2 trans = b0 - t.linear() * a0;
  t.tx = trans.x();
  t.ty = trans.y();
  return t;
}

FacePatch normalize_face(const GrayImage& img, const Point2& eye_left, const Point2& eye_right) {
  const auto inside = [&](const Point2& p) {
    return p.allFinite() && p.x() >= 0.0 && p.y() >= 0.0 && p.x() < img.width() &&
           p.y() < img.height();
  };
  if (!inside(eye_left) || !inside(eye_right)) {
    raise(ErrorCode::OutOfBounds, "eye position outside the source image");
  }
  if ((eye_right - eye_left).norm() < 2.0) {
    raise(ErrorCode::CoincidentEyes, "eye distance below 2 px");
  }
  FacePatch face;
  face.transform = SimilarityTransform::from_point_pairs(eye_left, eye_right, kCanonicalEyeLeft,
                                                         kCanonicalEyeRight);
  const SimilarityTransform back = face.transform.inverse();
  const Eigen::Matrix2d m = back.linear();
  PixelMatrix canvas(kCanvasSize, kCanvasSize);
  for (int y = 0; y < kCanvasSize; ++y) {
    for (int x = 0; x < kCanvasSize; ++x) {
      const double sx = m(0, 0) * x + m(0, 1) * y + back.tx;
      const double sy = m(1, 0) * x + m(1, 1) * y + back.ty;
      canvas(y, x) = img.sample(sx, sy, 0.0);
    }
  }
  face.canvas = GrayImage(std::move(canvas));
  return face;
}

void DistortionParams::validate() const {
  if (!(perspective_ratio_std >= 0.0) || !(rotation_std_deg >= 0.0) || !(noise_std >= 0.0)) {
    raise(ErrorCode::InvalidArgument, "distortion standard deviations must be >= 0");
  }
  if (!std::isfinite(noise_mean)) raise(ErrorCode::InvalidArgument, "noise mean must be finite");
}

namespace {

// Homography mapping src[k] -> dst[k] for four correspondences.
Eigen::Matrix3d solve_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int k = 0; k < 4; ++k) {
    const double x = src[k].x(), y = src[k].y(), u = dst[k].x(), v = dst[k].y();
    a.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * k) = u;
    b(2 * k + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d out;
  out << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return out;
}

GrayImage warp_perspective(const GrayImage& img, double top_ratio, double right_ratio) {
  const double w = img.width() - 1;
  const double h = img.height() - 1;
  const std::array<Point2, 4> src = {Point2(0, 0), Point2(w, 0), Point2(w, h), Point2(0, h)};
  const std::array<Point2, 4> dst = {Point2(0, 0), Point2(top_ratio * w, 0),
                                     Point2(w, right_ratio * h), Point2(0, h)};
  const Eigen::Matrix3d back = solve_homography(dst, src);
  PixelMatrix out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Eigen::Vector3d p = back * Eigen::Vector3d(x, y, 1.0);
      out(y, x) = p.z() == 0.0 ? 0.0 : img.sample(p.x() / p.z(), p.y() / p.z(), 0.0);
    }
  }
  return GrayImage(std::move(out));
}

GrayImage rotate_about_center(const GrayImage& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = 0.5 * (img.width() - 1);
  const double cy = 0.5 * (img.height() - 1);
  PixelMatrix out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      out(y, x) = img.sample(c * dx + s * dy + cx, -s * dx + c * dy + cy, 0.0);
    }
  }
  return GrayImage(std::move(out));
}

}  // namespace

GrayImage distort(const GrayImage& img, const DistortionParams& params) {
  params.validate();
  if (img.empty()) raise(ErrorCode::InvalidImage, "cannot distort an empty image");
  Rng rng(params.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double top_ratio = 1.0 + params.perspective_ratio_std * unit(rng);
  const double right_ratio = 1.0 + params.perspective_ratio_std * unit(rng);
  const double angle = params.rotation_std_deg * unit(rng);

  GrayImage out = img;
  if (top_ratio != 1.0 || right_ratio != 1.0) out = warp_perspective(out, top_ratio, right_ratio);
  if (angle != 0.0) out = rotate_about_center(out, angle);

  PixelMatrix px = out.pixels();
  for (Eigen::Index y = 0; y < px.rows(); ++y) {
    for (Eigen::Index x = 0; x < px.cols(); ++x) {
      const double noise = params.noise_mean + params.noise_std * unit(rng);
      px(y, x) = std::clamp(px(y, x) + noise, 0.0, 255.0);
    }
  }
  return GrayImage(std::move(px));
}

int patch_side(double size) {
  if (!(size > 0.0) || !std::isfinite(size)) raise(ErrorCode::InvalidArgument, "patch size must be > 0");
  return std::max(1, static_cast<int>(std::lround(size * kFaceSize)));
}

GrayImage extract_patch(const FacePatch& face, const Point2& center, double size) {
  const int side = patch_side(size);
  const double eighths = size * 8.0;
  if (std::abs(eighths - std::round(eighths)) > 1e-9 || eighths < 1.0 || eighths > 4.0) {
    spdlog::debug("patch size {} is outside the 1/8..4/8 grid", size);
  }
  if (!center.allFinite()) raise(ErrorCode::PatchOutOfCanvas, "non-finite patch center");
  const long x0 = std::lround(center.x() - side / 2.0);
  const long y0 = std::lround(center.y() - side / 2.0);
  if (x0 < 0 || y0 < 0 || x0 + side > face.canvas.width() || y0 + side > face.canvas.height()) {
    raise(ErrorCode::PatchOutOfCanvas, "patch exceeds the canvas");
  }
  return GrayImage(PixelMatrix(face.canvas.pixels().block(y0, x0, side, side)));
}

}  // namespace lfd
