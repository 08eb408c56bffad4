#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfd/image.hpp"

namespace lfd {

enum class DescriptorKind { HoG, LBP, SIFT };

/// One descriptor over a landmark-centered square patch split into a grid of
/// cells_per_side x cells_per_side cells.
struct DescriptorConfig {
  DescriptorKind kind = DescriptorKind::SIFT;
  double patch_size = 0.125;  // fraction of the 128 px face side
  int cells_per_side = 4;
  int orientations = 8;  // HoG only
  int radius = 1;        // LBP only

  static DescriptorConfig make_hog(double size, int cells, int orientations);
  static DescriptorConfig make_lbp(double size, int cells, int radius);
  static DescriptorConfig make_sift(double size, int cells);

  int dimension() const;
  /// Canonical text form, e.g. "hog:size=0.375:cells=4:orient=8".
  std::string to_string() const;
  /// Inverse of to_string; throws ParseError.
  static DescriptorConfig parse(const std::string& text);

  bool operator==(const DescriptorConfig&) const = default;
};

/// Maps the rendered table sizes (1.2, 2.5, 3.8, 5.0) onto the eighths grid.
double table_size_to_fraction(double table_size);

/// Every configuration of the tuning grids (size x cells x orientations/radius).
std::vector<DescriptorConfig> descriptor_grid(DescriptorKind kind);

struct FeatureVector {
  Eigen::VectorXd values;
  std::uint64_t config_fingerprint = 0;
};

std::uint64_t fingerprint(std::span<const DescriptorConfig> configs);
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

/// Central-difference gradients, unsigned orientation bins, per-cell L2 norm.
FeatureVector hog(const GrayImage& patch, const DescriptorConfig& cfg);
/// Rotation-invariant uniform LBP (P = 8, 10 bins) per cell, each cell summing to 1.
FeatureVector lbp_hist(const GrayImage& patch, const DescriptorConfig& cfg);
/// Upright 4x4x8 SIFT descriptor per grid cell, normalized, clamped at 0.2, renormalized.
FeatureVector dense_sift(const GrayImage& patch, const DescriptorConfig& cfg);
/// Dispatches on cfg.kind.
FeatureVector describe(const GrayImage& patch, const DescriptorConfig& cfg);

inline constexpr int kPcaTargetDim = 1500;

/// Principal components as orthonormal rows, variances descending.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x d
  Eigen::VectorXd explained_variance;
  std::uint64_t fingerprint = 0;

  int input_dim() const { return static_cast<int>(mean.size()); }
  int output_dim() const { return static_cast<int>(components.rows()); }

  template <typename Derived>
  Eigen::VectorXd project(const Eigen::MatrixBase<Derived>& x) const {
    return components * (x - mean);
  }
  template <typename Derived>
  Eigen::VectorXd reconstruct(const Eigen::MatrixBase<Derived>& z) const {
    return components.transpose() * z + mean;
  }
  /// Row-wise projection of a sample matrix.
  Eigen::MatrixXd project_rows(const Eigen::MatrixXd& x) const;

  /// Recomputes the identity hash from the stored parameters.
  void update_fingerprint();
};

/// Samples are matrix rows. k = min(target_dim, d, n - 1). Throws DimensionMismatch.
PcaModel pca_fit(const Eigen::MatrixXd& samples, int target_dim = kPcaTargetDim);
PcaModel pca_fit(std::span<const FeatureVector> samples, int target_dim = kPcaTargetDim);

/// Total raw dimension of a config list.
int raw_dimension(std::span<const DescriptorConfig> configs);

/// Concatenates descriptors in config order at `landmark` (canvas coords).
/// PCA is applied when the raw dimension exceeds 1500 and a model is given.
FeatureVector extract_landmark_features(const FacePatch& face, const Point2& landmark,
                                        std::span<const DescriptorConfig> configs,
                                        const PcaModel* pca = nullptr);

}  // namespace lfd
