#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lfd/error.hpp"
#include "lfd/landmarks.hpp"

namespace lfd {

inline constexpr double kGtThreshold = 0.65;
inline constexpr double kSigmaFraction = 0.10;
inline constexpr double kTargetRetention = 0.95;
inline constexpr double kTuneFraction = 0.20;

/// Mean Euclidean distance over landmarks present in both sets.
/// Throws NoCommonLandmarks.
double mae(const LandmarkSet& pred, const LandmarkSet& gt);

/// Per-landmark distances over the common landmarks.
std::vector<double> landmark_distances(const LandmarkSet& pred, const LandmarkSet& gt);

/// Gaussian confidence exp(-d^2 / (2 sigma^2)) in (0, 1].
template <typename Scalar>
Scalar confidence(Scalar distance, Scalar sigma) {
  if (!(sigma > Scalar(0))) raise(ErrorCode::NonPositiveSigma, "sigma must be > 0");
  if (!(distance >= Scalar(0))) raise(ErrorCode::InvalidArgument, "distance must be >= 0");
  const Scalar z = distance / sigma;
  return std::exp(-z * z / Scalar(2));
}

/// Inverse of `confidence` for c in (0, 1].
template <typename Scalar>
Scalar confidence_to_distance(Scalar c, Scalar sigma) {
  if (!(sigma > Scalar(0))) raise(ErrorCode::NonPositiveSigma, "sigma must be > 0");
  if (!(c > Scalar(0) && c <= Scalar(1))) raise(ErrorCode::InvalidArgument, "confidence must be in (0,1]");
  return sigma * std::sqrt(Scalar(-2) * std::log(c));
}

/// Coefficient of determination; throws ZeroVariance when y is constant.
double r2(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& y_hat);

struct OperatingPoint {
  double gt_threshold = kGtThreshold;
  double pred_threshold = 0.0;
  double sigma_fraction = kSigmaFraction;

  void validate() const;
};

/// Samples are failures when gt < gt_threshold and flagged when pred < pred_threshold.
struct ThresholdStats {
  double detection_rate = 0.0;  // flagged failures / failures
  double retention_rate = 1.0;  // unflagged correct / correct
  std::size_t failures = 0;
  std::size_t correct = 0;
};

ThresholdStats rates_at(const std::vector<double>& pred, const std::vector<double>& gt,
                        double gt_threshold, double pred_threshold);

struct CurvePoint {
  double x = 0.0;
  double detection_rate = 0.0;
  double retention_rate = 1.0;
};

struct EvaluationReport {
  double true_correct95 = 0.0;
  double tuned_pred_threshold = 0.0;
  double correct_marked_correct_rate = 1.0;  // retention on the tuning split
  double eval_retention_rate = 1.0;
  double gt_threshold = kGtThreshold;
  std::size_t n_tune = 0;
  std::size_t n_eval = 0;
  std::size_t n_eval_failures = 0;
  std::size_t n_eval_correct = 0;
  std::vector<CurvePoint> curve;  // prediction-threshold sweep on the evaluation split
};

/// Candidate thresholds: {0, 1} plus midpoints of consecutive sorted unique predictions.
std::vector<double> candidate_thresholds(const std::vector<double>& pred);

/// Largest candidate keeping at least `target` of the correct samples unflagged.
/// Throws DegenerateLabels when either class is missing.
double tune_threshold(const std::vector<double>& pred, const std::vector<double>& gt,
                      double gt_threshold, double target = kTargetRetention);

/// Indices of the seeded tuning split (first) and the evaluation split (second).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tune_eval_split(
    std::size_t n, double tune_frac, std::uint64_t seed);

EvaluationReport true_correct95(const std::vector<double>& pred, const std::vector<double>& gt,
                                const OperatingPoint& op, double tune_frac = kTuneFraction,
                                std::uint64_t seed = 0);

/// Prediction-threshold sweep at a fixed ground-truth threshold, over all samples.
std::vector<CurvePoint> prediction_threshold_curve(const std::vector<double>& pred,
                                                   const std::vector<double>& gt,
                                                   double gt_threshold,
                                                   const std::vector<double>& threshold_grid);

struct GtSweepPoint {
  double gt_threshold = 0.0;       // confidence units
  double distance_fraction = 0.0;  // same threshold as a fraction of the face size
  double detection_rate = 0.0;
  double retention_rate = 1.0;
  double pred_threshold = 0.0;
};

/// Ground-truth threshold sweep; each point re-tunes the prediction threshold
/// (TrueCorrect95). Points without both classes in the tuning split are skipped.
std::vector<GtSweepPoint> gt_threshold_curve(const std::vector<double>& pred,
                                             const std::vector<double>& gt,
                                             const std::vector<double>& gt_thresholds,
                                             double sigma_fraction = kSigmaFraction,
                                             double tune_frac = kTuneFraction,
                                             std::uint64_t seed = 0);

/// The same sweep with x given as distance fractions of the face size.
std::vector<GtSweepPoint> gt_distance_curve(const std::vector<double>& pred,
                                            const std::vector<double>& gt,
                                            const std::vector<double>& distance_fractions,
                                            double sigma_fraction = kSigmaFraction,
                                            double tune_frac = kTuneFraction,
                                            std::uint64_t seed = 0);

/// Evenly spaced grid [lo, hi] with `steps` intervals.
std::vector<double> linspace(double lo, double hi, int steps);

}  // namespace lfd
