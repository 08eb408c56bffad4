#include "lfd/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "lfd/error.hpp"
#include "lfd/parallel.hpp"
#include "lfd/random.hpp"

namespace lfd {

double expected_time(double t_fast, double t_robust, double recompute_fraction) {
  if (!(t_fast > 0.0) || !(t_robust > 0.0)) raise(ErrorCode::InvalidArgument, "method times must be > 0");
  if (!(recompute_fraction >= 0.0 && recompute_fraction <= 1.0)) {
    raise(ErrorCode::InvalidArgument, "recompute fraction must be in [0, 1]");
  }
  return t_fast + recompute_fraction * t_robust;
}

double speedup(double t_robust, double expected) {
  if (!(expected > 0.0)) raise(ErrorCode::InvalidArgument, "expected time must be > 0");
  return t_robust / expected;
}

std::optional<LandmarkSet> DetectionTable::landmarks(const FaceSample& face) const {
  const auto it = table_.find(face.face_id);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::optional<LandmarkSet> SyntheticProvider::landmarks(const FaceSample& face) const {
  PerturbSpec spec{PerturbMode::Individual, sigma_fraction_, 0.0, 1,
                   derive_seed(seed_, fnv1a(face.face_id.data(), face.face_id.size()))};
  return perturb_individual(face.landmarks, spec, face_size_from_eyes(face.landmarks)).front().landmarks;
}

void MethodProfile::validate() const {
  if (!(time_per_image > 0.0)) raise(ErrorCode::InvalidArgument, "method " + name + " needs time_per_image > 0");
  if (!provider) raise(ErrorCode::InvalidArgument, "method " + name + " has no landmark provider");
}

MethodProfile MethodProfile::synthetic_fast(std::uint64_t seed) {
  return {"fast", kFastTotalSeconds, std::make_shared<SyntheticProvider>(0.12, derive_seed(seed, 1))};
}

MethodProfile MethodProfile::synthetic_robust(std::uint64_t seed) {
  return {"robust", kRobustTotalSeconds, std::make_shared<SyntheticProvider>(0.06, derive_seed(seed, 2))};
}

GenderFeatureSpec GenderFeatureSpec::defaults() {
  return {{DescriptorConfig::make_sift(2.0 / 8.0, 4), DescriptorConfig::make_lbp(2.0 / 8.0, 4, 2)},
          DescriptorConfig::make_sift(1.0, 8)};
}

int GenderFeatureSpec::raw_dimension() const {
  return static_cast<int>(kLandmarkCount) * lfd::raw_dimension(per_landmark) + whole_face.dimension();
}

std::uint64_t GenderModel::fingerprint() const {
  std::uint64_t h = hash_combine(lfd::fingerprint(spec.per_landmark), lfd::fingerprint(std::span(&spec.whole_face, 1)));
  return pca ? hash_combine(h, pca->fingerprint) : h;
}

std::optional<Eigen::VectorXd> gender_features(const GenderFeatureSpec& spec, const GrayImage& image,
                                               const LandmarkSet& landmarks) {
  const auto face = normalize_by(image, landmarks);
  if (!face) return std::nullopt;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(spec.raw_dimension());
  const int block = lfd::raw_dimension(spec.per_landmark);
  Eigen::Index offset = 0;
  for (Landmark lm : kAllLandmarks) {
    if (landmarks.has(lm)) {
      LandmarkFeatures f{lm, spec.per_landmark, std::nullopt};
      x.segment(offset, block) = f.extract(*face, face->to_canvas(landmarks.at(lm))).values;
    }
    offset += block;
  }
  const Point2 center(kFaceBorder + 0.5 * kFaceSize, kFaceBorder + 0.5 * kFaceSize);
  x.segment(offset, spec.whole_face.dimension()) = describe(extract_patch(*face, center, spec.whole_face.patch_size), spec.whole_face).values;
  return x;
}

GenderModel train_gender(const Dataset& faces, const SearchGrid& grid, std::uint64_t seed,
                         const SolverOptions& solver, int threads) {
  GenderModel model;
  model.spec = GenderFeatureSpec::defaults();
  std::vector<std::optional<Eigen::VectorXd>> feats(faces.size());
  parallel_for(faces.size(), threads, [&](std::size_t i) {
    if (faces[i].gender) feats[i] = gender_features(model.spec, faces[i].image, faces[i].landmarks);
  });
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (feats[i]) used.push_back(i);
  }
  if (used.size() < static_cast<std::size_t>(grid.folds)) raise(ErrorCode::InsufficientData, "too few labelled faces for gender training");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(used.size()), model.spec.raw_dimension());
  Eigen::VectorXd y(static_cast<Eigen::Index>(used.size()));
  for (std::size_t r = 0; r < used.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = feats[used[r]]->transpose();
    y(static_cast<Eigen::Index>(r)) = *faces[used[r]].gender > 0 ? 1.0 : -1.0;
  }
  if (!((y.array() > 0).any() && (y.array() < 0).any())) raise(ErrorCode::SingleClass, "gender labels contain one class");
  FoldTransform reduce;
  if (x.cols() > kPcaTargetDim) {
    reduce = [](Eigen::MatrixXd& train, Eigen::MatrixXd& test) {
      const PcaModel fold_pca = pca_fit(train);
      train = fold_pca.project_rows(train);
      test = fold_pca.project_rows(test);
    };
  }
  const GridSearchResult search = grid_search_cv(x, y, {}, grid, Task::Classification, seed, solver, threads, reduce);
  if (reduce) {
    model.pca = pca_fit(x);
    x = model.pca->project_rows(x);
  }
  try {
    model.classifier = refit_best(x, y, search, Task::Classification, solver);
  } catch (const NoConvergenceError& e) {
    spdlog::warn("gender refit hit the SMO budget; keeping the best iterate");
    model.classifier = e.best_iterate();
    model.classifier.meta.cv_score = search.best.score;
  }
  model.cv_table = search.table;
  spdlog::info("gender: {} faces, cv accuracy {:.4f} ({})", used.size(), search.best.score, search.best.kernel.to_string());
  return model;
}

std::optional<int> predict_gender(const GenderModel& model, const GrayImage& image, const LandmarkSet& landmarks) {
  auto x = gender_features(model.spec, image, landmarks);
  if (!x) return std::nullopt;
  const Eigen::VectorXd z = model.pca ? model.pca->project(*x) : *x;
  return model.classifier.decision(z) >= 0.0 ? 1 : -1;
}

TradeoffReport run_tradeoff(const Dataset& samples, const ConfidenceModel& model, const MethodProfile& fast,
                            const MethodProfile& robust, const std::vector<double>& thresholds,
                            const GenderModel* gender, int threads) {
  fast.validate();
  robust.validate();
  if (samples.empty()) raise(ErrorCode::InsufficientData, "trade-off needs at least one sample");
  struct PerFace {
    double conf = 0.0;
    double fast_err = 0.0;
    double robust_err = 0.0;
    std::optional<bool> fast_ok;
    std::optional<bool> robust_ok;
  };
  std::vector<PerFace> per(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const FaceSample& s = samples[i];
    const auto f = fast.provider->landmarks(s);
    const auto r = robust.provider->landmarks(s);
    if (!f || !r) raise(ErrorCode::MissingVariant, "face " + s.face_id + " lacks " + (!f ? fast.name : robust.name) + " landmarks");
    per[i].conf = predict_face(model, s.image, *f);
    per[i].fast_err = mae(*f, s.landmarks);
    per[i].robust_err = mae(*r, s.landmarks);
    if (gender && s.gender) {
      const auto gf = predict_gender(*gender, s.image, *f);
      const auto gr = predict_gender(*gender, s.image, *r);
      per[i].fast_ok = gf && *gf == *s.gender;
      per[i].robust_ok = gr && *gr == *s.gender;
    }
  });

  TradeoffReport report;
  const double n = static_cast<double>(samples.size());
  std::size_t labelled = 0;
  std::size_t fast_hits = 0, robust_hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    report.face_ids.push_back(samples[i].face_id);
    report.fast_confidence.push_back(per[i].conf);
    report.fast_mae += per[i].fast_err / n;
    report.robust_mae += per[i].robust_err / n;
    if (per[i].fast_ok) {
      ++labelled;
      fast_hits += *per[i].fast_ok;
      robust_hits += *per[i].robust_ok;
    }
  }
  if (labelled > 0) {
    report.fast_accuracy = static_cast<double>(fast_hits) / static_cast<double>(labelled);
    report.robust_accuracy = static_cast<double>(robust_hits) / static_cast<double>(labelled);
  }
  for (double t : thresholds) {
    TradeoffPoint p;
    p.threshold = t;
    std::size_t recomputed = 0, hits = 0;
    double err = 0.0;
    for (const auto& f : per) {
      const bool fallback = t >= 1.0 || f.conf < t;
      recomputed += fallback;
      err += fallback ? f.robust_err : f.fast_err;
      if (f.fast_ok) hits += fallback ? *f.robust_ok : *f.fast_ok;
    }
    p.recompute_fraction = static_cast<double>(recomputed) / n;
    p.time_s = expected_time(fast.time_per_image, robust.time_per_image, p.recompute_fraction);
    p.mae_px = err / n;
    if (labelled > 0) p.accuracy = static_cast<double>(hits) / static_cast<double>(labelled);
    report.curve.push_back(p);
  }
  return report;
}

std::vector<TradeoffPoint> cost_curve(double t_fast, double t_robust, const std::vector<double>& fractions) {
  std::vector<TradeoffPoint> out;
  for (double f : fractions) {
    TradeoffPoint p;
    p.threshold = std::nan("");
    p.recompute_fraction = f;
    p.time_s = expected_time(t_fast, t_robust, f);
    p.mae_px = std::nan("");
    out.push_back(p);
  }
  return out;
}

double select_operating_threshold(const EvaluationReport& report) { return report.tuned_pred_threshold; }

}  // namespace lfd
