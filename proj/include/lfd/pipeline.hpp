#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lfd/confidence_models.hpp"

namespace lfd {

inline constexpr double kFastTotalSeconds = 2.92;
inline constexpr double kFastRotationSweepSeconds = 2.67;
inline constexpr double kFastFaceDetectSeconds = 0.147;
inline constexpr double kRobustTotalSeconds = 20.3;
inline constexpr double kRobustSweepSeconds = 20.1;

/// t_fast + f * t_robust
double expected_time(double t_fast, double t_robust, double recompute_fraction);
/// t_robust / expected
double speedup(double t_robust, double expected);

/// Source of landmark estimates for a face.
class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  virtual std::optional<LandmarkSet> landmarks(const FaceSample& face) const = 0;
};

/// Ingested detector outputs keyed by face id.
class DetectionTable : public LandmarkProvider {
 public:
  explicit DetectionTable(std::map<std::string, LandmarkSet> table) : table_(std::move(table)) {}
  std::optional<LandmarkSet> landmarks(const FaceSample& face) const override;

 private:
  std::map<std::string, LandmarkSet> table_;
};

/// Ground truth displaced per landmark by |N(0, sigma * face size)| in a random direction.
class SyntheticProvider : public LandmarkProvider {
 public:
  SyntheticProvider(double sigma_fraction, std::uint64_t seed) : sigma_fraction_(sigma_fraction), seed_(seed) {}
  std::optional<LandmarkSet> landmarks(const FaceSample& face) const override;

 private:
  double sigma_fraction_;
  std::uint64_t seed_;
};

struct MethodProfile {
  std::string name;
  double time_per_image = 0.0;  // seconds
  std::shared_ptr<const LandmarkProvider> provider;

  /// Throws InvalidArgument.
  void validate() const;
  static MethodProfile synthetic_fast(std::uint64_t seed);
  static MethodProfile synthetic_robust(std::uint64_t seed);
};

// ---- gender head ----

struct GenderFeatureSpec {
  std::vector<DescriptorConfig> per_landmark;
  DescriptorConfig whole_face;

  /// SIFT 2/8 cells 4 and LBP 2/8 cells 4 radius 2 per landmark; whole-face SIFT 8x8.
  static GenderFeatureSpec defaults();
  int raw_dimension() const;
};

struct GenderModel {
  GenderFeatureSpec spec;
  std::optional<PcaModel> pca;
  KernelModel classifier;
  std::vector<GridCell> cv_table;

  std::uint64_t fingerprint() const;
};

/// Raw gender features of a face aligned by `landmarks`; absent landmarks contribute zeros.
/// Returns nullopt when the face cannot be normalized.
std::optional<Eigen::VectorXd> gender_features(const GenderFeatureSpec& spec, const GrayImage& image,
                                               const LandmarkSet& landmarks);

/// 5-fold CV over the 16-cell grid, then a refit. Throws SingleClass, InsufficientData.
GenderModel train_gender(const Dataset& faces, const SearchGrid& grid = SearchGrid::gender_svc(),
                         std::uint64_t seed = 0, const SolverOptions& solver = {}, int threads = 1);

/// +1 male, -1 female; nullopt when the face cannot be normalized.
std::optional<int> predict_gender(const GenderModel& model, const GrayImage& image, const LandmarkSet& landmarks);

// ---- fast/robust trade-off ----

struct TradeoffPoint {
  double threshold = 0.0;
  double recompute_fraction = 0.0;
  double time_s = 0.0;
  double mae_px = 0.0;
  std::optional<double> accuracy;
};

struct TradeoffReport {
  std::vector<TradeoffPoint> curve;  // threshold order as given
  double fast_mae = 0.0;
  double robust_mae = 0.0;
  std::optional<double> fast_accuracy;
  std::optional<double> robust_accuracy;
  std::vector<std::string> face_ids;
  std::vector<double> fast_confidence;
};

/// A face falls back to the robust method when its confidence is below the
/// threshold; thresholds >= 1 always fall back. Throws MissingVariant.
TradeoffReport run_tradeoff(const Dataset& samples, const ConfidenceModel& model, const MethodProfile& fast,
                            const MethodProfile& robust, const std::vector<double>& thresholds,
                            const GenderModel* gender = nullptr, int threads = 1);

/// Cost model only: one point per forced recompute fraction.
std::vector<TradeoffPoint> cost_curve(double t_fast, double t_robust, const std::vector<double>& fractions);

/// The TrueCorrect95-tuned prediction threshold of a validation report.
double select_operating_threshold(const EvaluationReport& report);

}  // namespace lfd
