#include "lfd/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "lfd/random.hpp"

namespace lfd {

std::vector<double> landmark_distances(const LandmarkSet& pred, const LandmarkSet& gt) {
  std::vector<double> out;
  for (Landmark lm : kAllLandmarks) {
    if (pred.has(lm) && gt.has(lm)) out.push_back((pred.at(lm) - gt.at(lm)).norm());
  }
  return out;
}

double mae(const LandmarkSet& pred, const LandmarkSet& gt) {
  const auto d = landmark_distances(pred, gt);
  if (d.empty()) raise(ErrorCode::NoCommonLandmarks, "no landmark present in both sets");
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

double r2(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& y_hat) {
  if (y.size() != y_hat.size()) raise(ErrorCode::DimensionMismatch, "r2 length mismatch");
  if (y.size() < 2) raise(ErrorCode::InvalidArgument, "r2 needs n >= 2");
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot == 0.0) raise(ErrorCode::ZeroVariance, "targets have zero variance");
  const double ss_res = (y - y_hat).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

void OperatingPoint::validate() const {
  if (!(gt_threshold > 0.0 && gt_threshold <= 1.0)) raise(ErrorCode::InvalidArgument, "gt_threshold outside (0,1]");
  if (!(pred_threshold >= 0.0 && pred_threshold <= 1.0)) raise(ErrorCode::InvalidArgument, "pred_threshold outside [0,1]");
  if (!(sigma_fraction > 0.0)) raise(ErrorCode::NonPositiveSigma, "sigma must be > 0");
}

namespace {

void check_inputs(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size()) raise(ErrorCode::DimensionMismatch, "prediction/ground-truth length mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(gt[i])) raise(ErrorCode::NonFiniteInput, "non-finite confidence");
  }
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

ThresholdStats rates_at(const std::vector<double>& pred, const std::vector<double>& gt,
                        double gt_threshold, double pred_threshold) {
  check_inputs(pred, gt);
  ThresholdStats s;
  std::size_t flagged_failures = 0, kept_correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool failure = gt[i] < gt_threshold;
    const bool flagged = pred[i] < pred_threshold;
    if (failure) {
      ++s.failures;
      if (flagged) ++flagged_failures;
    } else {
      ++s.correct;
      if (!flagged) ++kept_correct;
    }
  }
  s.detection_rate = s.failures ? static_cast<double>(flagged_failures) / s.failures : 0.0;
  s.retention_rate = s.correct ? static_cast<double>(kept_correct) / s.correct : 1.0;
  return s;
}

std::vector<double> candidate_thresholds(const std::vector<double>& pred) {
  std::vector<double> sorted = pred;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> out{0.0, 1.0};
  for (std::size_t i = 1; i < sorted.size(); ++i) out.push_back(0.5 * (sorted[i - 1] + sorted[i]));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double tune_threshold(const std::vector<double>& pred, const std::vector<double>& gt,
                      double gt_threshold, double target) {
  check_inputs(pred, gt);
  std::vector<double> correct_pred;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] < gt_threshold) {
      ++failures;
    } else {
      correct_pred.push_back(pred[i]);
    }
  }
  if (failures == 0 || correct_pred.empty()) {
    raise(ErrorCode::DegenerateLabels, "tuning split lacks failures or correct samples");
  }
  std::sort(correct_pred.begin(), correct_pred.end());
  const auto candidates = candidate_thresholds(pred);
  const double nc = static_cast<double>(correct_pred.size());
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    const auto first_kept = std::lower_bound(correct_pred.begin(), correct_pred.end(), *it);
    const double kept = static_cast<double>(correct_pred.end() - first_kept);
    if (kept / nc >= target) return *it;
  }
  return 0.0;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tune_eval_split(
    std::size_t n, double tune_frac, std::uint64_t seed) {
  if (!(tune_frac > 0.0 && tune_frac < 1.0)) raise(ErrorCode::InvalidArgument, "tune_frac must be in (0,1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_tune = static_cast<std::size_t>(std::lround(tune_frac * static_cast<double>(n)));
  std::vector<std::size_t> tune(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_tune));
  std::vector<std::size_t> eval(order.begin() + static_cast<std::ptrdiff_t>(n_tune), order.end());
  std::sort(tune.begin(), tune.end());
  std::sort(eval.begin(), eval.end());
  return {std::move(tune), std::move(eval)};
}

std::vector<double> linspace(double lo, double hi, int steps) {
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i) out.push_back(lo + (hi - lo) * i / steps);
  return out;
}

EvaluationReport true_correct95(const std::vector<double>& pred, const std::vector<double>& gt,
                                const OperatingPoint& op, double tune_frac, std::uint64_t seed) {
  check_inputs(pred, gt);
  op.validate();
  if (pred.size() < 10) raise(ErrorCode::InvalidArgument, "true_correct95 needs at least 10 samples");
  const auto [tune_idx, eval_idx] = tune_eval_split(pred.size(), tune_frac, seed);
  const auto tune_pred = gather(pred, tune_idx);
  const auto tune_gt = gather(gt, tune_idx);
  const auto eval_pred = gather(pred, eval_idx);
  const auto eval_gt = gather(gt, eval_idx);

  EvaluationReport report;
  report.gt_threshold = op.gt_threshold;
  report.tuned_pred_threshold = tune_threshold(tune_pred, tune_gt, op.gt_threshold);
  report.correct_marked_correct_rate =
      rates_at(tune_pred, tune_gt, op.gt_threshold, report.tuned_pred_threshold).retention_rate;
  const ThresholdStats held = rates_at(eval_pred, eval_gt, op.gt_threshold, report.tuned_pred_threshold);
  report.true_correct95 = held.detection_rate;
  report.eval_retention_rate = held.retention_rate;
  report.n_tune = tune_idx.size();
  report.n_eval = eval_idx.size();
  report.n_eval_failures = held.failures;
  report.n_eval_correct = held.correct;
  report.curve = prediction_threshold_curve(eval_pred, eval_gt, op.gt_threshold, linspace(0.0, 1.0, 100));
  return report;
}

std::vector<CurvePoint> prediction_threshold_curve(const std::vector<double>& pred,
                                                   const std::vector<double>& gt,
                                                   double gt_threshold,
                                                   const std::vector<double>& threshold_grid) {
  std::vector<CurvePoint> out;
  out.reserve(threshold_grid.size());
  for (double t : threshold_grid) {
    const ThresholdStats s = rates_at(pred, gt, gt_threshold, t);
    out.push_back({t, s.detection_rate, s.retention_rate});
  }
  return out;
}

std::vector<GtSweepPoint> gt_threshold_curve(const std::vector<double>& pred,
                                             const std::vector<double>& gt,
                                             const std::vector<double>& gt_thresholds,
                                             double sigma_fraction, double tune_frac,
                                             std::uint64_t seed) {
  std::vector<GtSweepPoint> out;
  for (double g : gt_thresholds) {
    if (!(g > 0.0 && g <= 1.0)) continue;
    OperatingPoint op;
    op.gt_threshold = g;
    op.sigma_fraction = sigma_fraction;
    try {
      const EvaluationReport r = true_correct95(pred, gt, op, tune_frac, seed);
      if (r.n_eval_failures == 0 || r.n_eval_correct == 0) continue;
      out.push_back({g, confidence_to_distance(g, sigma_fraction), r.true_correct95,
                     r.eval_retention_rate, r.tuned_pred_threshold});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateLabels) throw;
    }
  }
  return out;
}

std::vector<GtSweepPoint> gt_distance_curve(const std::vector<double>& pred,
                                            const std::vector<double>& gt,
                                            const std::vector<double>& distance_fractions,
                                            double sigma_fraction, double tune_frac,
                                            std::uint64_t seed) {
  std::vector<double> thresholds;
  for (double d : distance_fractions) {
    if (d > 0.0) thresholds.push_back(confidence(d, sigma_fraction));
  }
  return gt_threshold_curve(pred, gt, thresholds, sigma_fraction, tune_frac, seed);
}

}  // namespace lfd
