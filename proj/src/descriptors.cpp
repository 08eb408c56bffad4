#include "lfd/descriptors.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "lfd/error.hpp"

namespace lfd {

namespace {

constexpr double kHogEps = 1e-6;
constexpr int kLbpNeighbors = 8;
constexpr int kLbpBins = kLbpNeighbors + 2;
constexpr int kSiftSpatial = 4;
constexpr int kSiftOrient = 8;
constexpr double kSiftClamp = 0.2;

const char* kind_name(DescriptorKind k) {
  switch (k) {
    case DescriptorKind::HoG: return "hog";
    case DescriptorKind::LBP: return "lbp";
    case DescriptorKind::SIFT: return "sift";
  }
  return "?";
}

void require_kind(const DescriptorConfig& cfg, DescriptorKind kind) {
  if (cfg.kind != kind) {
    raise(ErrorCode::ConfigMismatch,
          std::string("expected ") + kind_name(kind) + " config, got " + kind_name(cfg.kind));
  }
}

void require_cells(const GrayImage& patch, const DescriptorConfig& cfg) {
  if (cfg.cells_per_side < 1) raise(ErrorCode::InvalidArgument, "cells_per_side must be >= 1");
  if (patch.width() != patch.height()) raise(ErrorCode::InvalidArgument, "patch must be square");
  if (patch.width() < cfg.cells_per_side) {
    raise(ErrorCode::PatchTooSmall, "patch side smaller than cells_per_side");
  }
}

struct Gradients {
  PixelMatrix gx, gy;
};

// Central differences; the one-pixel frame keeps zero gradient.
Gradients central_gradients(const GrayImage& patch) {
  const auto& p = patch.pixels();
  const Eigen::Index h = p.rows(), w = p.cols();
  Gradients g{PixelMatrix::Zero(h, w), PixelMatrix::Zero(h, w)};
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 1; x + 1 < w; ++x) g.gx(y, x) = p(y, x + 1) - p(y, x - 1);
  }
  for (Eigen::Index y = 1; y + 1 < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) g.gy(y, x) = p(y + 1, x) - p(y - 1, x);
  }
  return g;
}

int cell_of(int pixel, int side, int cells) { return static_cast<int>((static_cast<long>(pixel) * cells) / side); }

}  // namespace

DescriptorConfig DescriptorConfig::make_hog(double size, int cells, int orientations) {
  return {DescriptorKind::HoG, size, cells, orientations, 1};
}
DescriptorConfig DescriptorConfig::make_lbp(double size, int cells, int radius) {
  return {DescriptorKind::LBP, size, cells, 8, radius};
}
DescriptorConfig DescriptorConfig::make_sift(double size, int cells) {
  return {DescriptorKind::SIFT, size, cells, 8, 1};
}

int DescriptorConfig::dimension() const {
  const int cells = cells_per_side * cells_per_side;
  switch (kind) {
    case DescriptorKind::HoG: return cells * orientations;
    case DescriptorKind::LBP: return cells * kLbpBins;
    case DescriptorKind::SIFT: return cells * kSiftSpatial * kSiftSpatial * kSiftOrient;
  }
  return 0;
}

std::string DescriptorConfig::to_string() const {
  char buf[96];
  switch (kind) {
    case DescriptorKind::HoG:
      std::snprintf(buf, sizeof buf, "hog:size=%.6g:cells=%d:orient=%d", patch_size, cells_per_side, orientations);
      break;
    case DescriptorKind::LBP:
      std::snprintf(buf, sizeof buf, "lbp:size=%.6g:cells=%d:radius=%d", patch_size, cells_per_side, radius);
      break;
    case DescriptorKind::SIFT:
      std::snprintf(buf, sizeof buf, "sift:size=%.6g:cells=%d", patch_size, cells_per_side);
      break;
  }
  return buf;
}

DescriptorConfig DescriptorConfig::parse(const std::string& text) {
  std::stringstream ss(text);
  std::string token;
  std::getline(ss, token, ':');
  DescriptorConfig cfg;
  if (token == "hog") {
    cfg.kind = DescriptorKind::HoG;
  } else if (token == "lbp") {
    cfg.kind = DescriptorKind::LBP;
  } else if (token == "sift") {
    cfg.kind = DescriptorKind::SIFT;
  } else {
    raise(ErrorCode::ParseError, "unknown descriptor kind in '" + text + "'");
  }
  while (std::getline(ss, token, ':')) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) raise(ErrorCode::ParseError, "expected key=value in '" + text + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "size") {
        const auto slash = value.find('/');
        cfg.patch_size = slash == std::string::npos
                             ? std::stod(value)
                             : std::stod(value.substr(0, slash)) / std::stod(value.substr(slash + 1));
      } else if (key == "cells") {
        cfg.cells_per_side = std::stoi(value);
      } else if (key == "orient") {
        cfg.orientations = std::stoi(value);
      } else if (key == "radius") {
        cfg.radius = std::stoi(value);
      } else {
        raise(ErrorCode::ParseError, "unknown descriptor key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      raise(ErrorCode::ParseError, "bad value for '" + key + "' in '" + text + "'");
    }
  }
  if (cfg.cells_per_side < 1 || cfg.orientations < 1 || cfg.radius < 1 || !(cfg.patch_size > 0.0)) {
    raise(ErrorCode::ParseError, "out-of-range descriptor parameter in '" + text + "'");
  }
  return cfg;
}

double table_size_to_fraction(double table_size) {
  static constexpr double kTable[] = {1.2, 2.5, 3.8, 5.0};
  for (int i = 0; i < 4; ++i) {
    if (std::abs(table_size - kTable[i]) < 0.05) return (i + 1) / 8.0;
  }
  raise(ErrorCode::InvalidArgument, "table size must be one of 1.2, 2.5, 3.8, 5.0");
}

std::vector<DescriptorConfig> descriptor_grid(DescriptorKind kind) {
  std::vector<DescriptorConfig> out;
  for (int eighths = 1; eighths <= 4; ++eighths) {
    const double size = eighths / 8.0;
    for (int cells : {1, 2, 4, 8}) {
      switch (kind) {
        case DescriptorKind::HoG:
          for (int o : {4, 8}) out.push_back(DescriptorConfig::make_hog(size, cells, o));
          break;
        case DescriptorKind::LBP:
          for (int r : {1, 2, 3, 4}) out.push_back(DescriptorConfig::make_lbp(size, cells, r));
          break;
        case DescriptorKind::SIFT:
          out.push_back(DescriptorConfig::make_sift(size, cells));
          break;
      }
    }
  }
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return fnv1a(&b, sizeof b, a); }

std::uint64_t fingerprint(std::span<const DescriptorConfig> configs) {
  std::string joined;
  for (const auto& c : configs) joined += c.to_string() + ";";
  return fnv1a(joined.data(), joined.size());
}

FeatureVector hog(const GrayImage& patch, const DescriptorConfig& cfg) {
  require_kind(cfg, DescriptorKind::HoG);
  require_cells(patch, cfg);
  if (cfg.orientations < 1) raise(ErrorCode::InvalidArgument, "orientations must be >= 1");
  const int side = patch.width();
  const int cells = cfg.cells_per_side;
  const int bins = cfg.orientations;
  const Gradients g = central_gradients(patch);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.dimension());
  const double bin_width = std::numbers::pi / bins;
  for (int y = 0; y < side; ++y) {
    const int cy = cell_of(y, side, cells);
    for (int x = 0; x < side; ++x) {
      const double gx = g.gx(y, x), gy = g.gy(y, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      const int bin = std::min(bins - 1, static_cast<int>(theta / bin_width));
      const int cx = cell_of(x, side, cells);
      out((cy * cells + cx) * bins + bin) += mag;
    }
  }
  for (int c = 0; c < cells * cells; ++c) {
    auto h = out.segment(c * bins, bins);
    const double n2 = h.squaredNorm();
    if (n2 > 0.0) h /= std::sqrt(n2 + kHogEps * kHogEps);
  }
  return {std::move(out), fingerprint(std::span(&cfg, 1))};
}

namespace {

// Rotation-invariant uniform mapping for 8 neighbors: popcount for codes with
// at most two circular transitions, 9 for everything else.
std::array<int, 256> make_uniform_table() {
  std::array<int, 256> table{};
  for (int code = 0; code < 256; ++code) {
    const unsigned rotated = ((code >> 1) | ((code & 1) << 7)) & 0xFF;
    const int transitions = std::popcount(static_cast<unsigned>(code) ^ rotated);
    table[code] = transitions <= 2 ? std::popcount(static_cast<unsigned>(code)) : kLbpBins - 1;
  }
  return table;
}

}  // namespace

FeatureVector lbp_hist(const GrayImage& patch, const DescriptorConfig& cfg) {
  require_kind(cfg, DescriptorKind::LBP);
  if (cfg.radius < 1) raise(ErrorCode::InvalidArgument, "LBP radius must be >= 1");
  if (patch.width() != patch.height()) raise(ErrorCode::InvalidArgument, "patch must be square");
  if (patch.width() < 2 * cfg.radius + 1) raise(ErrorCode::PatchTooSmall, "patch side < 2*radius+1");
  require_cells(patch, cfg);
  static const std::array<int, 256> kUniform = make_uniform_table();

  // Neighbors sit on the circle, snapped to the nearest pixel so codes only
  // depend on the intensity order.
  std::array<int, kLbpNeighbors> dx{}, dy{};
  for (int p = 0; p < kLbpNeighbors; ++p) {
    const double a = 2.0 * std::numbers::pi * p / kLbpNeighbors;
    dx[p] = static_cast<int>(std::lround(cfg.radius * std::cos(a)));
    dy[p] = static_cast<int>(std::lround(-cfg.radius * std::sin(a)));
  }
  const auto& px = patch.pixels();
  const int side = patch.width();
  const int cells = cfg.cells_per_side;
  const int r = cfg.radius;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.dimension());
  for (int y = r; y < side - r; ++y) {
    const int cy = cell_of(y, side, cells);
    for (int x = r; x < side - r; ++x) {
      const double center = px(y, x);
      int code = 0;
      for (int p = 0; p < kLbpNeighbors; ++p) {
        if (px(y + dy[p], x + dx[p]) > center) code |= 1 << p;
      }
      const int cx = cell_of(x, side, cells);
      out((cy * cells + cx) * kLbpBins + kUniform[code]) += 1.0;
    }
  }
  for (int c = 0; c < cells * cells; ++c) {
    auto h = out.segment(c * kLbpBins, kLbpBins);
    const double total = h.sum();
    if (total > 0.0) h /= total;
  }
  return {std::move(out), fingerprint(std::span(&cfg, 1))};
}

FeatureVector dense_sift(const GrayImage& patch, const DescriptorConfig& cfg) {
  require_kind(cfg, DescriptorKind::SIFT);
  require_cells(patch, cfg);
  const int side = patch.width();
  const int cells = cfg.cells_per_side;
  const double cell_side = static_cast<double>(side) / cells;
  const double sigma = 0.5 * cell_side;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  constexpr int kDescDim = kSiftSpatial * kSiftSpatial * kSiftOrient;
  const double orient_width = 2.0 * std::numbers::pi / kSiftOrient;

  const Gradients g = central_gradients(patch);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.dimension());
  for (int y = 0; y < side; ++y) {
    const int cy = cell_of(y, side, cells);
    const double v = (y + 0.5 - cy * cell_side) / cell_side;
    const int by = std::clamp(static_cast<int>(v * kSiftSpatial), 0, kSiftSpatial - 1);
    const double dyc = y + 0.5 - (cy + 0.5) * cell_side;
    for (int x = 0; x < side; ++x) {
      const double gx = g.gx(y, x), gy = g.gy(y, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const int cx = cell_of(x, side, cells);
      const double u = (x + 0.5 - cx * cell_side) / cell_side;
      const int bx = std::clamp(static_cast<int>(u * kSiftSpatial), 0, kSiftSpatial - 1);
      const double dxc = x + 0.5 - (cx + 0.5) * cell_side;
      const double weight = mag * std::exp(-(dxc * dxc + dyc * dyc) * inv_two_sigma2);
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      const double o = theta / orient_width;
      const int o0 = static_cast<int>(std::floor(o)) % kSiftOrient;
      const int o1 = (o0 + 1) % kSiftOrient;
      const double frac = o - std::floor(o);
      const Eigen::Index base = (cy * cells + cx) * kDescDim + (by * kSiftSpatial + bx) * kSiftOrient;
      out(base + o0) += weight * (1.0 - frac);
      out(base + o1) += weight * frac;
    }
  }
  for (int c = 0; c < cells * cells; ++c) {
    auto d = out.segment(c * kDescDim, kDescDim);
    const double n = d.norm();
    if (n == 0.0) continue;
    d /= n;
    d = d.cwiseMin(kSiftClamp);
    const double n2 = d.norm();
    if (n2 > 0.0) d /= n2;
  }
  return {std::move(out), fingerprint(std::span(&cfg, 1))};
}

FeatureVector describe(const GrayImage& patch, const DescriptorConfig& cfg) {
  switch (cfg.kind) {
    case DescriptorKind::HoG: return hog(patch, cfg);
    case DescriptorKind::LBP: return lbp_hist(patch, cfg);
    case DescriptorKind::SIFT: return dense_sift(patch, cfg);
  }
  raise(ErrorCode::ConfigMismatch, "unknown descriptor kind");
}

int raw_dimension(std::span<const DescriptorConfig> configs) {
  int total = 0;
  for (const auto& c : configs) total += c.dimension();
  return total;
}

FeatureVector extract_landmark_features(const FacePatch& face, const Point2& landmark,
                                        std::span<const DescriptorConfig> configs,
                                        const PcaModel* pca) {
  if (configs.empty()) raise(ErrorCode::EmptyConfig, "no descriptor configurations");
  if (!FacePatch::face_rect().contains(landmark)) {
    raise(ErrorCode::OutOfBounds, "landmark outside the face rectangle");
  }
  const int raw_dim = raw_dimension(configs);
  Eigen::VectorXd raw(raw_dim);
  Eigen::Index offset = 0;
  for (const auto& cfg : configs) {
    const GrayImage patch = extract_patch(face, landmark, cfg.patch_size);
    const FeatureVector part = describe(patch, cfg);
    raw.segment(offset, part.values.size()) = part.values;
    offset += part.values.size();
  }
  std::uint64_t fp = fingerprint(configs);
  if (raw_dim > kPcaTargetDim && pca != nullptr) {
    if (pca->input_dim() != raw_dim) {
      raise(ErrorCode::DimensionMismatch, "PCA input dimension does not match descriptor output");
    }
    return {pca->project(raw), hash_combine(fp, pca->fingerprint)};
  }
  return {std::move(raw), fp};
}

}  // namespace lfd
