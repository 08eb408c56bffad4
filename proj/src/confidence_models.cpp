#include "lfd/confidence_models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "lfd/error.hpp"
#include "lfd/parallel.hpp"
#include "lfd/random.hpp"

namespace lfd {

namespace {

Point2 clamp_to_face(const Point2& p) {
  constexpr PixelRect r = FacePatch::face_rect();
  const double hi_x = std::nextafter(static_cast<double>(r.x1), 0.0);
  const double hi_y = std::nextafter(static_cast<double>(r.y1), 0.0);
  const double x = std::isfinite(p.x()) ? std::clamp(p.x(), static_cast<double>(r.x0), hi_x) : r.x0;
  const double y = std::isfinite(p.y()) ? std::clamp(p.y(), static_cast<double>(r.y0), hi_y) : r.y0;
  return {x, y};
}

double clamp_confidence(double c) {
  if (!std::isfinite(c)) return kConfidenceFloor;
  return std::clamp(c, kConfidenceFloor, 1.0);
}

std::uint64_t face_seed(std::uint64_t seed, const std::string& face_id) {
  return derive_seed(seed, fnv1a(face_id.data(), face_id.size()));
}

bool has_all(const LandmarkSet& s, const std::vector<Landmark>& lms) {
  if (!s.has(Landmark::EyeL) || !s.has(Landmark::EyeR)) return false;
  return std::all_of(lms.begin(), lms.end(), [&](Landmark lm) { return s.has(lm); });
}

std::optional<double> face_size_of(const LandmarkSet& gt) {
  try {
    return face_size_from_eyes(gt);
  } catch (const Error&) {
    return std::nullopt;
  }
}

LandmarkSet to_canvas(const FacePatch& face, const LandmarkSet& source) {
  LandmarkSet out;
  for (Landmark lm : source.present()) out.set(lm, face.to_canvas(source.at(lm)));
  return out;
}

// One perturbed replica of a face: landmarks in source coordinates and its label.
struct Replica {
  LandmarkSet landmarks;
  double label = 0.0;
};

using ReplicaGen = std::function<std::vector<Replica>(const FaceSample&)>;

// Raw (pre-PCA) features per landmark for every replica of the selected faces.
struct ReplicaBlock {
  std::vector<Eigen::MatrixXd> raw;  // one per landmark, rows = replicas
  Eigen::VectorXd y;
  std::vector<std::int64_t> groups;
  std::vector<char> normalized;
  std::vector<std::string> face_ids;
};

ReplicaBlock build_block(const Dataset& faces, const std::vector<std::size_t>& selected,
                         const std::vector<LandmarkFeatures>& features, const ReplicaGen& gen, int threads,
                         bool keep_unnormalized) {
  struct FaceRows {
    std::vector<std::vector<Eigen::VectorXd>> per_landmark;
    std::vector<double> labels;
    std::vector<char> normalized;
  };
  std::vector<FaceRows> rows(selected.size());
  parallel_for(selected.size(), threads, [&](std::size_t s) {
    const FaceSample& sample = faces[selected[s]];
    FaceRows& out = rows[s];
    out.per_landmark.resize(features.size());
    for (const Replica& r : gen(sample)) {
      const std::optional<FacePatch> face = normalize_by(sample.image, r.landmarks);
      if (!face && !keep_unnormalized) continue;
      for (std::size_t k = 0; k < features.size(); ++k) {
        if (face) {
          const Point2 pos = face->to_canvas(r.landmarks.at(features[k].landmark));
          out.per_landmark[k].push_back(features[k].extract(*face, pos).values);
        } else {
          out.per_landmark[k].push_back(Eigen::VectorXd::Zero(features[k].dimension()));
        }
      }
      out.labels.push_back(r.label);
      out.normalized.push_back(face ? 1 : 0);
    }
  });

  ReplicaBlock block;
  std::size_t n = 0;
  for (const auto& r : rows) n += r.labels.size();
  block.y.resize(static_cast<Eigen::Index>(n));
  for (const auto& f : features) block.raw.emplace_back(static_cast<Eigen::Index>(n), f.dimension());
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (!rows[s].labels.empty()) block.face_ids.push_back(faces[selected[s]].face_id);
    for (std::size_t j = 0; j < rows[s].labels.size(); ++j, ++row) {
      for (std::size_t k = 0; k < features.size(); ++k) block.raw[k].row(row) = rows[s].per_landmark[k][j].transpose();
      block.y(row) = rows[s].labels[j];
      block.groups.push_back(static_cast<std::int64_t>(selected[s]));
      block.normalized.push_back(rows[s].normalized[j]);
    }
  }
  return block;
}

// Faces carrying the eyes and every landmark in `required`, optionally capped
// to whole faces so that at most `max_samples` replicas are produced.
std::vector<std::size_t> select_faces(const Dataset& faces, const std::vector<Landmark>& required,
                                      const TrainingOptions& options, int replicas) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (has_all(faces[i].landmarks, required) && face_size_of(faces[i].landmarks)) usable.push_back(i);
  }
  if (usable.size() < options.min_faces) {
    raise(ErrorCode::InsufficientData, "only " + std::to_string(usable.size()) + " usable faces, need " +
                                           std::to_string(options.min_faces));
  }
  const std::size_t per_face = static_cast<std::size_t>(std::max(1, replicas));
  if (options.max_samples > 0 && usable.size() * per_face > options.max_samples) {
    Rng rng(derive_seed(options.cv_seed, 0x5eedULL));
    std::shuffle(usable.begin(), usable.end(), rng);
    usable.resize(std::max<std::size_t>(1, options.max_samples / per_face));
    std::sort(usable.begin(), usable.end());
  }
  return usable;
}

ReplicaGen individual_gen(Landmark landmark, const PerturbSpec& spec, double sigma_fraction) {
  return [=](const FaceSample& sample) {
    PerturbSpec s = spec;
    s.seed = face_seed(spec.seed, sample.face_id);
    const double fs = face_size_from_eyes(sample.landmarks);
    std::vector<Replica> out;
    for (const auto& r : perturb_individual(sample.landmarks, s, fs)) {
      const double d = r.distance[static_cast<std::size_t>(landmark)];
      out.push_back({r.landmarks, confidence(d, sigma_fraction * fs)});
    }
    return out;
  };
}

ReplicaGen superposed_gen(const PerturbSpec& spec, double sigma_fraction) {
  return [=](const FaceSample& sample) {
    PerturbSpec s = spec;
    s.seed = face_seed(spec.seed, sample.face_id);
    const double fs = face_size_from_eyes(sample.landmarks);
    std::vector<Replica> out;
    for (const auto& r : perturb_superposed(sample.landmarks, s, fs)) {
      out.push_back({r.landmarks, confidence(r.mae, sigma_fraction * fs)});
    }
    return out;
  };
}

void fit_pca_stages(std::vector<LandmarkFeatures>& features, const ReplicaBlock& block) {
  for (std::size_t k = 0; k < features.size(); ++k) {
    features[k].pca.reset();
    if (raw_dimension(features[k].configs) > kPcaTargetDim) {
      Eigen::MatrixXd rows = block.raw[k];
      features[k].pca = pca_fit(rows);
    }
  }
}

Eigen::MatrixXd design_matrix(const std::vector<LandmarkFeatures>& features, const ReplicaBlock& block) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index cols = 0;
  for (std::size_t k = 0; k < features.size(); ++k) {
    parts.push_back(features[k].pca ? features[k].pca->project_rows(block.raw[k]) : block.raw[k]);
    cols += parts.back().cols();
  }
  Eigen::MatrixXd x(block.y.size(), cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    x.middleCols(offset, p.cols()) = p;
    offset += p.cols();
  }
  return x;
}

void require_label_variance(const Eigen::VectorXd& y) {
  if (y.size() == 0 || (y.array() == y(0)).all()) {
    raise(ErrorCode::DegenerateLabels, "training labels have no variance");
  }
}

KernelModel fit_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::int64_t>& groups,
                          const TrainingOptions& options, GridSearchResult& search) {
  require_label_variance(y);
  search = grid_search_cv(x, y, groups, options.grid, Task::Regression, options.cv_seed, options.solver,
                          options.threads);
  try {
    return refit_best(x, y, search, Task::Regression, options.solver);
  } catch (const NoConvergenceError& e) {
    spdlog::warn("final refit hit the SMO budget; keeping the best iterate (kkt {})",
                 e.best_iterate().meta.kkt_residual);
    KernelModel m = e.best_iterate();
    m.meta.cv_score = search.best.score;
    return m;
  }
}

Eigen::VectorXd concat_features(const std::vector<LandmarkFeatures>& features, const FacePatch& face,
                                const LandmarkSet& canvas_landmarks) {
  std::vector<Eigen::VectorXd> parts;
  Eigen::Index dim = 0;
  for (const auto& f : features) {
    parts.push_back(f.extract(face, canvas_landmarks.at(f.landmark)).values);
    dim += parts.back().size();
  }
  Eigen::VectorXd x(dim);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    x.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return x;
}

ScoredSet flatten(std::vector<ScoredSet>& per_face) {
  ScoredSet out;
  for (auto& s : per_face) {
    out.pred.insert(out.pred.end(), s.pred.begin(), s.pred.end());
    out.gt.insert(out.gt.end(), s.gt.begin(), s.gt.end());
    out.face_ids.insert(out.face_ids.end(), s.face_ids.begin(), s.face_ids.end());
  }
  return out;
}

std::vector<Landmark> model_landmarks(const ConfidenceModel& model) {
  if (const auto* m = std::get_if<IndividualModel>(&model)) return {m->features.landmark};
  if (const auto* m = std::get_if<JointModel>(&model)) return m->landmarks();
  std::vector<Landmark> out;
  for (const auto& s : std::get<CascadedModel>(model).stage1) out.push_back(s.features.landmark);
  return out;
}

}  // namespace

int LandmarkFeatures::dimension() const { return pca ? pca->output_dim() : raw_dimension(configs); }

std::uint64_t LandmarkFeatures::fingerprint() const {
  const std::uint64_t fp = lfd::fingerprint(configs);
  if (pca && raw_dimension(configs) > kPcaTargetDim) return hash_combine(fp, pca->fingerprint);
  return fp;
}

FeatureVector LandmarkFeatures::extract(const FacePatch& face, const Point2& position) const {
  return extract_landmark_features(face, clamp_to_face(position), configs, pca ? &*pca : nullptr);
}

std::vector<Landmark> JointModel::landmarks() const {
  std::vector<Landmark> out;
  for (const auto& f : features) out.push_back(f.landmark);
  return out;
}

std::uint64_t JointModel::fingerprint() const {
  std::uint64_t h = 0x6a6f696e74ULL;
  for (const auto& f : features) h = hash_combine(h, hash_combine(static_cast<std::uint64_t>(f.landmark), f.fingerprint()));
  return h;
}

std::string architecture_name(const ConfidenceModel& model) {
  switch (model.index()) {
    case 0: return "individual";
    case 1: return "joint";
    default: return "cascaded";
  }
}

std::optional<FacePatch> normalize_by(const GrayImage& image, const LandmarkSet& landmarks) {
  if (!landmarks.has(Landmark::EyeL) || !landmarks.has(Landmark::EyeR)) return std::nullopt;
  try {
    return normalize_face(image, landmarks.at(Landmark::EyeL), landmarks.at(Landmark::EyeR));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::OutOfBounds || e.code() == ErrorCode::CoincidentEyes) return std::nullopt;
    throw;
  }
}

TrainingRows individual_rows(const Dataset& train, LandmarkFeatures& features, const PerturbSpec& spec,
                             const TrainingOptions& options) {
  spec.validate();
  if (spec.mode != PerturbMode::Individual) raise(ErrorCode::InvalidArgument, "individual models need an Individual perturbation spec");
  const auto faces = select_faces(train, {features.landmark}, options, spec.replicas_per_face);
  std::vector<LandmarkFeatures> stack{features};
  stack[0].pca.reset();
  const ReplicaBlock block =
      build_block(train, faces, stack, individual_gen(features.landmark, spec, options.sigma_fraction), options.threads, false);
  fit_pca_stages(stack, block);
  features = stack[0];
  return {design_matrix(stack, block), block.y, block.groups, block.face_ids};
}

TrainingRows joint_rows(const Dataset& train, std::vector<LandmarkFeatures>& features, const PerturbSpec& spec,
                        const TrainingOptions& options) {
  spec.validate();
  if (spec.mode != PerturbMode::Superposed) raise(ErrorCode::InvalidArgument, "joint models need a Superposed perturbation spec");
  if (features.empty()) raise(ErrorCode::EmptyConfig, "joint model needs at least one landmark");
  std::vector<Landmark> lms;
  for (auto& f : features) {
    lms.push_back(f.landmark);
    f.pca.reset();
  }
  const auto faces = select_faces(train, lms, options, spec.replicas_per_face);
  const ReplicaBlock block =
      build_block(train, faces, features, superposed_gen(spec, options.sigma_fraction), options.threads, false);
  fit_pca_stages(features, block);
  return {design_matrix(features, block), block.y, block.groups, block.face_ids};
}

IndividualModel train_individual(const Dataset& train, Landmark landmark,
                                 const std::vector<DescriptorConfig>& configs, const PerturbSpec& spec,
                                 const TrainingOptions& options) {
  if (configs.empty()) raise(ErrorCode::EmptyConfig, "no descriptor configurations");
  IndividualModel model;
  model.features = {landmark, configs, std::nullopt};
  const TrainingRows rows = individual_rows(train, model.features, spec, options);
  GridSearchResult search;
  model.regressor = fit_regressor(rows.x, rows.y, rows.groups, options, search);
  model.train_face_ids = rows.face_ids;
  model.cv_table = search.table;
  model.fold_of = search.fold_of;
  spdlog::info("individual {}: {} rows, cv R2 {:.4f}", landmark_name(landmark), rows.y.size(), search.best.score);
  return model;
}

double predict_individual(const IndividualModel& model, const FacePatch& face, const Point2& position) {
  const FeatureVector fv = model.features.extract(face, position);
  if (fv.config_fingerprint != model.features.fingerprint()) {
    raise(ErrorCode::ConfigMismatch, "feature fingerprint does not match the model");
  }
  return clamp_confidence(model.regressor.decision(fv.values));
}

JointModel train_joint(const Dataset& train, const std::vector<Landmark>& subset,
                       const std::map<Landmark, std::vector<DescriptorConfig>>& configs, const PerturbSpec& spec,
                       const TrainingOptions& options) {
  if (subset.empty()) raise(ErrorCode::InvalidArgument, "landmark subset must be non-empty");
  JointModel model;
  for (Landmark lm : subset) {
    const auto it = configs.find(lm);
    if (it == configs.end() || it->second.empty()) {
      raise(ErrorCode::EmptyConfig, "no descriptor configuration for " + std::string(landmark_name(lm)));
    }
    model.features.push_back({lm, it->second, std::nullopt});
  }
  const TrainingRows rows = joint_rows(train, model.features, spec, options);
  GridSearchResult search;
  model.regressor = fit_regressor(rows.x, rows.y, rows.groups, options, search);
  model.train_face_ids = rows.face_ids;
  model.cv_table = search.table;
  model.fold_of = search.fold_of;
  spdlog::info("joint |S|={}: {} rows, cv R2 {:.4f}", subset.size(), rows.y.size(), search.best.score);
  return model;
}

double predict_joint(const JointModel& model, const FacePatch& face, const LandmarkSet& canvas_landmarks) {
  return clamp_confidence(model.regressor.decision(concat_features(model.features, face, canvas_landmarks)));
}

KernelModel fit_stage2(const Eigen::MatrixXd& stage1_confidences, const Eigen::VectorXd& labels,
                       const std::vector<std::int64_t>& groups, const TrainingOptions& options,
                       GridSearchResult* search) {
  GridSearchResult local;
  KernelModel m = fit_regressor(stage1_confidences, labels, groups, options, local);
  if (search) *search = std::move(local);
  return m;
}

CascadedModel train_cascaded(std::vector<IndividualModel> stage1, const Dataset& validation,
                             const PerturbSpec& spec, const TrainingOptions& options) {
  if (stage1.empty()) raise(ErrorCode::InvalidArgument, "cascade needs at least one stage-1 model");
  spec.validate();
  if (spec.mode != PerturbMode::Superposed) raise(ErrorCode::InvalidArgument, "cascaded stage 2 needs a Superposed perturbation spec");
  std::set<std::string> train_ids;
  for (const auto& m : stage1) train_ids.insert(m.train_face_ids.begin(), m.train_face_ids.end());
  for (const auto& f : validation) {
    if (train_ids.count(f.face_id)) raise(ErrorCode::SplitOverlap, "face " + f.face_id + " is in both the stage-1 training and validation sets");
  }
  std::vector<Landmark> lms;
  for (const auto& m : stage1) lms.push_back(m.features.landmark);
  const auto faces = select_faces(validation, lms, options, spec.replicas_per_face);
  const ReplicaGen gen = superposed_gen(spec, options.sigma_fraction);

  struct FaceRows {
    std::vector<Eigen::VectorXd> x;
    std::vector<double> y;
  };
  std::vector<FaceRows> rows(faces.size());
  parallel_for(faces.size(), options.threads, [&](std::size_t s) {
    const FaceSample& sample = validation[faces[s]];
    for (const Replica& r : gen(sample)) {
      const auto face = normalize_by(sample.image, r.landmarks);
      if (!face) continue;
      Eigen::VectorXd c(static_cast<Eigen::Index>(stage1.size()));
      for (std::size_t k = 0; k < stage1.size(); ++k) {
        c(static_cast<Eigen::Index>(k)) = predict_individual(stage1[k], *face, face->to_canvas(r.landmarks.at(lms[k])));
      }
      rows[s].x.push_back(std::move(c));
      rows[s].y.push_back(r.label);
    }
  });
  CascadedModel model;
  std::size_t n = 0;
  for (const auto& r : rows) n += r.y.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(stage1.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<std::int64_t> groups;
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (!rows[s].y.empty()) model.stage2_face_ids.push_back(validation[faces[s]].face_id);
    for (std::size_t j = 0; j < rows[s].y.size(); ++j, ++row) {
      x.row(row) = rows[s].x[j].transpose();
      y(row) = rows[s].y[j];
      groups.push_back(static_cast<std::int64_t>(faces[s]));
    }
  }
  GridSearchResult search;
  model.stage2 = fit_stage2(x, y, groups, options, &search);
  model.cv_table = search.table;
  model.fold_of = search.fold_of;
  model.stage1 = std::move(stage1);
  spdlog::info("cascaded stage 2: {} rows, cv R2 {:.4f}", n, search.best.score);
  return model;
}

double predict_cascaded(const CascadedModel& model, const FacePatch& face, const LandmarkSet& canvas_landmarks) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(model.stage1.size()));
  for (std::size_t k = 0; k < model.stage1.size(); ++k) {
    const auto& m = model.stage1[k];
    c(static_cast<Eigen::Index>(k)) = predict_individual(m, face, canvas_landmarks.at(m.features.landmark));
  }
  return clamp_confidence(model.stage2.decision(c));
}

double predict_face(const ConfidenceModel& model, const GrayImage& image, const LandmarkSet& detected) {
  for (Landmark lm : model_landmarks(model)) {
    if (!detected.has(lm)) raise(ErrorCode::MissingVariant, "detection lacks " + std::string(landmark_name(lm)));
  }
  const std::optional<FacePatch> face = normalize_by(image, detected);
  if (!face) return kConfidenceFloor;
  const LandmarkSet canvas = to_canvas(*face, detected);
  if (const auto* m = std::get_if<IndividualModel>(&model)) {
    return predict_individual(*m, *face, canvas.at(m->features.landmark));
  }
  if (const auto* m = std::get_if<JointModel>(&model)) return predict_joint(*m, *face, canvas);
  return predict_cascaded(std::get<CascadedModel>(model), *face, canvas);
}

ScoredSet score_individual_synthetic(const IndividualModel& model, const Dataset& faces, const PerturbSpec& spec,
                                     double sigma_fraction, int threads) {
  spec.validate();
  const Landmark lm = model.features.landmark;
  const ReplicaGen gen = individual_gen(lm, spec, sigma_fraction);
  const ConfidenceModel wrapped = model;
  std::vector<ScoredSet> per_face(faces.size());
  parallel_for(faces.size(), threads, [&](std::size_t i) {
    const FaceSample& sample = faces[i];
    if (!has_all(sample.landmarks, {lm}) || !face_size_of(sample.landmarks)) return;
    for (const Replica& r : gen(sample)) {
      per_face[i].pred.push_back(predict_face(wrapped, sample.image, r.landmarks));
      per_face[i].gt.push_back(r.label);
      per_face[i].face_ids.push_back(sample.face_id);
    }
  });
  return flatten(per_face);
}

ScoredSet score_face_synthetic(const ConfidenceModel& model, const Dataset& faces, const PerturbSpec& spec,
                               double sigma_fraction, int threads) {
  spec.validate();
  const ReplicaGen gen = superposed_gen(spec, sigma_fraction);
  const std::vector<Landmark> lms = model_landmarks(model);
  std::vector<ScoredSet> per_face(faces.size());
  parallel_for(faces.size(), threads, [&](std::size_t i) {
    const FaceSample& sample = faces[i];
    if (!has_all(sample.landmarks, lms) || !face_size_of(sample.landmarks)) return;
    for (const Replica& r : gen(sample)) {
      per_face[i].pred.push_back(predict_face(model, sample.image, r.landmarks));
      per_face[i].gt.push_back(r.label);
      per_face[i].face_ids.push_back(sample.face_id);
    }
  });
  return flatten(per_face);
}

ScoredSet score_detections(const ConfidenceModel& model, const Dataset& faces,
                           const std::map<std::string, LandmarkSet>& detections, double sigma_fraction,
                           int threads) {
  const auto* individual = std::get_if<IndividualModel>(&model);
  std::vector<ScoredSet> per_face(faces.size());
  parallel_for(faces.size(), threads, [&](std::size_t i) {
    const FaceSample& sample = faces[i];
    const auto it = detections.find(sample.face_id);
    if (it == detections.end()) return;
    const auto fs = face_size_of(sample.landmarks);
    if (!fs) return;
    double error = 0.0;
    if (individual) {
      const Landmark lm = individual->features.landmark;
      if (!sample.landmarks.has(lm) || !it->second.has(lm)) return;
      error = (sample.landmarks.at(lm) - it->second.at(lm)).norm();
    } else {
      error = mae(it->second, sample.landmarks);
    }
    per_face[i].pred.push_back(predict_face(model, sample.image, it->second));
    per_face[i].gt.push_back(confidence(error, sigma_fraction * *fs));
    per_face[i].face_ids.push_back(sample.face_id);
  });
  return flatten(per_face);
}

SubsetSearchResult subset_search(const Dataset& train, const Dataset& validation,
                                 const std::vector<Landmark>& landmarks,
                                 const std::map<Landmark, std::vector<DescriptorConfig>>& configs,
                                 const PerturbSpec& spec, const TrainingOptions& options, const OperatingPoint& op,
                                 std::uint64_t eval_seed) {
  if (landmarks.empty() || landmarks.size() > kLandmarkCount) {
    raise(ErrorCode::InvalidArgument, "subset search needs 1 to 7 landmarks");
  }
  spec.validate();
  std::vector<LandmarkFeatures> all;
  for (Landmark lm : landmarks) {
    const auto it = configs.find(lm);
    if (it == configs.end() || it->second.empty()) {
      raise(ErrorCode::EmptyConfig, "no descriptor configuration for " + std::string(landmark_name(lm)));
    }
    all.push_back({lm, it->second, std::nullopt});
  }
  // Replicas and raw features are shared by every subset; only the columns differ.
  const auto train_faces = select_faces(train, landmarks, options, spec.replicas_per_face);
  const ReplicaBlock train_block =
      build_block(train, train_faces, all, superposed_gen(spec, options.sigma_fraction), options.threads, false);
  TrainingOptions eval_options = options;
  eval_options.min_faces = 1;
  eval_options.max_samples = 0;
  PerturbSpec eval_spec = spec;
  eval_spec.seed = eval_seed;
  const auto val_faces = select_faces(validation, landmarks, eval_options, spec.replicas_per_face);
  const ReplicaBlock val_block =
      build_block(validation, val_faces, all, superposed_gen(eval_spec, options.sigma_fraction), options.threads, true);
  require_label_variance(train_block.y);

  SubsetSearchResult result;
  const std::size_t k = landmarks.size();
  std::map<int, std::vector<double>> by_size;
  for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
    std::vector<LandmarkFeatures> feats;
    ReplicaBlock tb, vb;
    tb.y = train_block.y;
    vb.y = val_block.y;
    SubsetRow row;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      row.subset.push_back(landmarks[j]);
      feats.push_back(all[j]);
      tb.raw.push_back(train_block.raw[j]);
      vb.raw.push_back(val_block.raw[j]);
    }
    fit_pca_stages(feats, tb);
    GridSearchResult search;
    const KernelModel reg = fit_regressor(design_matrix(feats, tb), tb.y, train_block.groups, options, search);
    const Eigen::VectorXd raw_pred = reg.decision(design_matrix(feats, vb));
    std::vector<double> pred(static_cast<std::size_t>(raw_pred.size()));
    for (Eigen::Index i = 0; i < raw_pred.size(); ++i) {
      pred[static_cast<std::size_t>(i)] =
          val_block.normalized[static_cast<std::size_t>(i)] ? clamp_confidence(raw_pred(i)) : kConfidenceFloor;
    }
    const std::vector<double> gt(val_block.y.data(), val_block.y.data() + val_block.y.size());
    row.true_correct95 = true_correct95(pred, gt, op, kTuneFraction, eval_seed).true_correct95;
    spdlog::info("subset mask {:#x}: TrueCorrect95 {:.4f}", mask, row.true_correct95);
    by_size[static_cast<int>(row.subset.size())].push_back(row.true_correct95);
    result.rows.push_back(std::move(row));
  }
  for (const auto& [size, values] : by_size) {
    result.cardinality_means[size] = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  return result;
}

std::vector<FeatureSearchRow> feature_search(const Dataset& train, const Dataset& validation, Landmark landmark,
                                             const std::vector<std::vector<DescriptorConfig>>& candidates,
                                             const PerturbSpec& spec, const TrainingOptions& options,
                                             const OperatingPoint& op, std::uint64_t eval_seed) {
  std::vector<FeatureSearchRow> rows;
  PerturbSpec eval_spec = spec;
  eval_spec.seed = eval_seed;
  for (const auto& stack : candidates) {
    const IndividualModel m = train_individual(train, landmark, stack, spec, options);
    const ScoredSet s = score_individual_synthetic(m, validation, eval_spec, options.sigma_fraction, options.threads);
    rows.push_back({stack, m.regressor.meta.cv_score, true_correct95(s.pred, s.gt, op, kTuneFraction, eval_seed).true_correct95});
  }
  return rows;
}

namespace {

struct TableEntry {
  Landmark landmark;
  double sift_size;
  int sift_cells;
  int hog_orient;
  double hog_size;
  int hog_cells;
  int lbp_radius;
  double lbp_size;
  int lbp_cells;
};

const std::vector<TableEntry>& table_rows(const std::string& name) {
  static const std::vector<TableEntry> aflw = {
      {Landmark::ChinC, 2.5, 4, 4, 3.8, 8, 3, 3.8, 8},  {Landmark::EyeL, 1.2, 4, 8, 2.5, 4, 2, 2.5, 8},
      {Landmark::EyeR, 1.2, 4, 4, 3.8, 8, 3, 2.5, 8},   {Landmark::MouthC, 1.2, 4, 8, 3.8, 4, 3, 2.5, 8},
      {Landmark::MouthL, 3.8, 4, 4, 5.0, 8, 4, 3.8, 2}, {Landmark::MouthR, 2.5, 4, 8, 1.2, 2, 4, 2.5, 8},
      {Landmark::NoseC, 1.2, 2, 8, 2.5, 1, 3, 2.5, 4},
  };
  static const std::vector<TableEntry> helen = {
      {Landmark::ChinC, 2.5, 4, 4, 5.0, 8, 3, 2.5, 8},  {Landmark::EyeL, 3.8, 4, 4, 5.0, 4, 2, 2.5, 4},
      {Landmark::EyeR, 1.2, 4, 4, 5.0, 8, 4, 3.8, 4},   {Landmark::MouthC, 2.5, 4, 8, 5.0, 8, 4, 5.0, 8},
      {Landmark::MouthL, 1.2, 4, 4, 3.8, 8, 4, 2.5, 8}, {Landmark::MouthR, 3.8, 4, 8, 3.8, 4, 3, 2.5, 8},
      {Landmark::NoseC, 2.5, 4, 8, 5.0, 4, 3, 5.0, 4},
  };
  if (name == "aflw") return aflw;
  if (name == "helen") return helen;
  raise(ErrorCode::InvalidArgument, "unknown preset " + name + " (expected aflw or helen)");
}

}  // namespace

std::map<Landmark, std::map<DescriptorKind, DescriptorConfig>> preset_table(const std::string& name) {
  std::map<Landmark, std::map<DescriptorKind, DescriptorConfig>> out;
  for (const auto& e : table_rows(name)) {
    out[e.landmark][DescriptorKind::SIFT] = DescriptorConfig::make_sift(table_size_to_fraction(e.sift_size), e.sift_cells);
    out[e.landmark][DescriptorKind::HoG] =
        DescriptorConfig::make_hog(table_size_to_fraction(e.hog_size), e.hog_cells, e.hog_orient);
    out[e.landmark][DescriptorKind::LBP] =
        DescriptorConfig::make_lbp(table_size_to_fraction(e.lbp_size), e.lbp_cells, e.lbp_radius);
  }
  return out;
}

std::map<Landmark, std::vector<DescriptorConfig>> preset_configs(const std::string& name) {
  using K = DescriptorKind;
  static const std::map<Landmark, std::vector<K>> aflw = {
      {Landmark::ChinC, {K::HoG, K::SIFT}},         {Landmark::EyeL, {K::SIFT}},
      {Landmark::EyeR, {K::HoG, K::SIFT}},          {Landmark::MouthC, {K::SIFT}},
      {Landmark::MouthL, {K::HoG, K::SIFT, K::LBP}}, {Landmark::MouthR, {K::SIFT}},
      {Landmark::NoseC, {K::SIFT, K::LBP}},
  };
  static const std::map<Landmark, std::vector<K>> helen = {
      {Landmark::ChinC, {K::SIFT}},         {Landmark::EyeL, {K::HoG, K::LBP}},
      {Landmark::EyeR, {K::HoG, K::LBP}},   {Landmark::MouthC, {K::SIFT, K::LBP}},
      {Landmark::MouthL, {K::HoG, K::SIFT}}, {Landmark::MouthR, {K::SIFT}},
      {Landmark::NoseC, {K::HoG, K::SIFT, K::LBP}},
  };
  const auto table = preset_table(name);
  const auto& combos = name == "aflw" ? aflw : helen;
  std::map<Landmark, std::vector<DescriptorConfig>> out;
  for (const auto& [lm, kinds] : combos) {
    for (K k : kinds) out[lm].push_back(table.at(lm).at(k));
  }
  return out;
}

}  // namespace lfd
