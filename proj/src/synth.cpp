#include "lfd/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "lfd/error.hpp"
#include "lfd/parallel.hpp"
#include "lfd/random.hpp"

namespace lfd {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Landmark-specific ring wavelengths, in face units.
constexpr double kRingWavelength[kLandmarkCount] = {0.022, 0.026, 0.030, 0.024, 0.034, 0.028, 0.032};
constexpr double kRingSigma = 0.03;
constexpr double kRingAmplitude = 35.0;

double inside(double signed_distance, double width) { return 1.0 / (1.0 + std::exp(signed_distance / width)); }

// Signed distance-like value of an axis-aligned ellipse, scaled to face units.
double ellipse_sd(const Point2& q, const Point2& c, double rx, double ry) {
  const double nx = (q.x() - c.x()) / rx, ny = (q.y() - c.y()) / ry;
  return (std::sqrt(nx * nx + ny * ny) - 1.0) * std::min(rx, ry);
}

double disk_sd(const Point2& q, const Point2& c, double r) { return (q - c).norm() - r; }

double segment_distance(const Point2& q, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double t = std::clamp((q - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (q - (a + t * ab)).norm();
}

struct Layout {
  std::array<Point2, kLandmarkCount> lm;  // face units, face rect = [0, 1]^2
  double skin, background, lip;
  Point2 center;                          // px
  double size, angle;                     // px, rad
  int gender;
  Pose pose;
};

Layout make_layout(const SynthOptions& o, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.01);
  Layout L{};
  const Point2 base[kLandmarkCount] = {{0.30, 0.40}, {0.70, 0.40}, {0.50, 0.60}, {0.35, 0.76},
                                       {0.50, 0.77}, {0.65, 0.76}, {0.50, 0.93}};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) L.lm[i] = base[i] + Point2(jitter(rng), jitter(rng));
  L.skin = 160.0 + 25.0 * u(rng);
  L.background = 65.0 + 25.0 * u(rng);
  L.lip = L.skin - 55.0 + 10.0 * u(rng);
  const double eye_distance = o.image_size * (0.185 + 0.025 * u(rng));
  L.size = eye_distance / 0.4;
  L.center = Point2(0.5 * o.image_size, 0.5 * o.image_size) + 0.06 * o.image_size * Point2(u(rng), u(rng));
  L.angle = o.max_rotation_deg * kDeg * u(rng);
  L.gender = u(rng) >= 0.0 ? 1 : -1;
  L.pose = {12.0 * u(rng), 12.0 * u(rng), L.angle / kDeg};
  return L;
}

double shade(const Layout& L, const SynthOptions& o, const Point2& q) {
  const auto at = [&](Landmark lm) { return L.lm[static_cast<std::size_t>(lm)]; };
  const double px = 1.0 / L.size;  // one pixel in face units
  double v = L.background + 15.0 * (q.y() - 0.5);
  const double face = inside(ellipse_sd(q, {0.5, 0.50}, 0.38, 0.45), px);
  v += face * (L.skin - v);

  for (Landmark eye : {Landmark::EyeL, Landmark::EyeR}) {
    const Point2 c = at(eye);
    v += inside(ellipse_sd(q, c + Point2(0, -0.09), 0.09, 0.018), px) * (L.skin - 70.0 - v);
    v += inside(ellipse_sd(q, c, 0.075, 0.035), px) * (235.0 - v);
    v += inside(disk_sd(q, c, 0.03), px) * (60.0 - v);
    v += inside(disk_sd(q, c, 0.012), px) * (10.0 - v);
    v += inside(disk_sd(q, c + Point2(0.01, -0.01), 0.006), px) * (250.0 - v);
  }

  const Point2 nose = at(Landmark::NoseC);
  const Point2 bridge = 0.5 * (at(Landmark::EyeL) + at(Landmark::EyeR));
  v -= 20.0 * inside(segment_distance(q, bridge + Point2(0.03, 0.05), nose + Point2(0.03, -0.02)) - 0.01, px);
  v += 30.0 * inside(disk_sd(q, nose, 0.02), 2 * px);
  for (double side : {-1.0, 1.0}) v += inside(disk_sd(q, nose + Point2(side * 0.04, 0.025), 0.015), px) * (L.skin - 90.0 - v);

  const Point2 ml = at(Landmark::MouthL), mr = at(Landmark::MouthR), mc = at(Landmark::MouthC);
  v += inside(ellipse_sd(q, mc, 0.5 * (mr - ml).norm(), 0.04), px) * (L.lip - v);
  v += inside(segment_distance(q, ml, mc) - 0.006, px) * (30.0 - v);
  v += inside(segment_distance(q, mc, mr) - 0.006, px) * (30.0 - v);
  for (const Point2& corner : {ml, mr}) v += inside(disk_sd(q, corner, 0.012), px) * (20.0 - v);

  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const double r = (q - L.lm[i]).norm();
    v += kRingAmplitude * std::exp(-r * r / (2.0 * kRingSigma * kRingSigma)) *
         std::cos(2.0 * std::numbers::pi * r / kRingWavelength[i]);
  }

  if (o.gender_cue) {
    const Point2 d = q - at(Landmark::ChinC);
    const double window = inside(d.norm() - 0.08, px);
    const double coord = L.gender > 0 ? d.y() : d.x();
    v += 50.0 * window * std::cos(2.0 * std::numbers::pi * coord / 0.03);
  }
  return v;
}

}  // namespace

void SynthOptions::validate() const {
  if (count < 0) raise(ErrorCode::InvalidArgument, "synthetic count must be >= 0");
  if (image_size < 96) raise(ErrorCode::InvalidArgument, "synthetic image_size must be >= 96");
  if (!(max_rotation_deg >= 0.0) || !(pixel_noise >= 0.0)) raise(ErrorCode::InvalidArgument, "synthetic rotation and noise must be >= 0");
}

nlohmann::json SynthOptions::to_json() const {
  return {{"generator", "lfd-synth"}, {"count", count}, {"image_size", image_size}, {"seed", seed},
          {"planted_noise_chin", planted_noise_chin}, {"gender_cue", gender_cue},
          {"max_rotation_deg", max_rotation_deg}, {"pixel_noise", pixel_noise}};
}

SynthFace render_synthetic_face(const SynthOptions& options, std::size_t index) {
  options.validate();
  Rng rng(derive_seed(options.seed, index));
  const Layout L = make_layout(options, rng);
  const double c = std::cos(L.angle), s = std::sin(L.angle);
  const auto to_image = [&](const Point2& q) -> Point2 {
    const Point2 d = L.size * (q - Point2(0.5, 0.5));
    return L.center + Point2(c * d.x() - s * d.y(), s * d.x() + c * d.y());
  };
  const auto to_face = [&](const Point2& p) -> Point2 {
    const Point2 d = (p - L.center) / L.size;
    return Point2(c * d.x() + s * d.y(), -s * d.x() + c * d.y()) + Point2(0.5, 0.5);
  };

  const int n = options.image_size;
  const Point2 chin = L.lm[static_cast<std::size_t>(Landmark::ChinC)];
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> white(0.0, 255.0);
  PixelMatrix px(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const Point2 q = to_face(Point2(x, y));
      double v = shade(L, options, q);
      if (options.planted_noise_chin && (q - chin).norm() < kChinNoiseRadius) {
        v = white(rng);
      } else {
        v += options.pixel_noise * noise(rng);
      }
      px(y, x) = std::round(std::clamp(v, 0.0, 255.0));
    }
  }

  SynthFace face;
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05zu", index);
  face.face_id = id;
  face.image = GrayImage(std::move(px));
  for (Landmark lm : kAllLandmarks) face.landmarks.set(lm, to_image(L.lm[static_cast<std::size_t>(lm)]));
  face.pose = L.pose;
  face.gender = L.gender;
  face.face_size = L.size;
  return face;
}

Dataset synthetic_dataset(const SynthOptions& options, int threads) {
  options.validate();
  Dataset out(static_cast<std::size_t>(options.count));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    SynthFace f = render_synthetic_face(options, i);
    out[i] = {f.face_id, std::move(f.image), f.landmarks, f.gender};
  });
  return out;
}

AnnotationFile write_synthetic_corpus(const SynthOptions& options, const std::filesystem::path& dir, int threads) {
  options.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) raise(ErrorCode::IoError, "cannot create " + (dir / "images").string() + ": " + ec.message());
  AnnotationFile file;
  file.synthetic = true;
  file.generator = options.to_json();
  file.records.resize(static_cast<std::size_t>(options.count));
  parallel_for(file.records.size(), threads, [&](std::size_t i) {
    const SynthFace f = render_synthetic_face(options, i);
    const std::string rel = "images/" + f.face_id + ".pgm";
    save_pgm(f.image, dir / rel);
    file.records[i] = {f.face_id, rel, f.landmarks, f.pose, "synthetic", f.gender};
  });
  save_annotations(file, dir / "annotations.json");
  return file;
}

}  // namespace lfd
