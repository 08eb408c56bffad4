#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "lfd/annotations.hpp"
#include "lfd/confidence_models.hpp"
#include "lfd/container.hpp"
#include "lfd/error.hpp"
#include "lfd/log.hpp"
#include "lfd/metrics.hpp"
#include "lfd/model_io.hpp"
#include "lfd/parallel.hpp"
#include "lfd/pipeline.hpp"
#include "lfd/random.hpp"
#include "lfd/run_config.hpp"
#include "lfd/synth.hpp"

namespace lfd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  RunConfig cfg;
  fs::path out;
  int threads = 1;

  std::uint64_t seed() { return static_cast<std::uint64_t>(cfg.get_int("run.seed", 0)); }
};

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(1) + "\n"); }

// ---- config readers ----

std::vector<Landmark> landmarks_from(Context& c, const std::string& key, const std::vector<std::string>& fallback) {
  std::vector<Landmark> out;
  for (const auto& name : c.cfg.get_strings(key, fallback)) out.push_back(landmark_from_name(name));
  return out;
}

std::vector<DescriptorConfig> configs_from(Context& c, const std::string& key, const std::vector<std::string>& fallback) {
  std::vector<DescriptorConfig> out;
  for (const auto& s : c.cfg.get_strings(key, fallback)) out.push_back(DescriptorConfig::parse(s));
  return out;
}

const std::vector<std::string> kDefaultStack = {"sift:size=0.125:cells=2"};

std::map<Landmark, std::vector<DescriptorConfig>> feature_map(Context& c, const std::vector<Landmark>& lms) {
  const std::string preset = c.cfg.get_string("features.preset", "");
  std::map<Landmark, std::vector<DescriptorConfig>> out;
  if (!preset.empty()) {
    const auto p = preset_configs(preset);
    for (Landmark lm : lms) out[lm] = p.at(lm);
    return out;
  }
  for (Landmark lm : lms) out[lm] = configs_from(c, "features." + std::string(landmark_name(lm)), kDefaultStack);
  return out;
}

SearchGrid grid_from(Context& c, Task task) {
  SearchGrid g = task == Task::Regression ? SearchGrid::confidence_svr() : SearchGrid::gender_svc();
  const std::string p = task == Task::Regression ? "grid." : "gender_grid.";
  std::vector<std::string> kernels;
  for (const auto& k : g.kernels) kernels.push_back(k.to_string());
  g.C_values = c.cfg.get_doubles(p + "C", g.C_values);
  if (task == Task::Regression) g.epsilon_values = c.cfg.get_doubles(p + "epsilon", g.epsilon_values);
  g.kernels.clear();
  for (const auto& k : c.cfg.get_strings(p + "kernels", kernels)) g.kernels.push_back(KernelSpec::parse(k));
  g.folds = static_cast<int>(c.cfg.get_int(p + "folds", g.folds));
  g.validate();
  return g;
}

TrainingOptions training_from(Context& c, const std::string& architecture, std::size_t default_cap) {
  TrainingOptions o;
  o.grid = grid_from(c, Task::Regression);
  o.max_samples = static_cast<std::size_t>(c.cfg.get_int(architecture + ".max_samples", static_cast<long long>(default_cap)));
  o.cv_seed = static_cast<std::uint64_t>(c.cfg.get_int("train.cv_seed", static_cast<long long>(c.seed())));
  o.min_faces = static_cast<std::size_t>(c.cfg.get_int("train.min_faces", 50));
  o.sigma_fraction = c.cfg.get_double("metrics.sigma_fraction", kSigmaFraction);
  o.solver.tolerance = c.cfg.get_double("train.kkt_tolerance", 1e-3);
  o.threads = c.threads;
  return o;
}

PerturbSpec perturb_from(Context& c, PerturbMode mode) {
  PerturbSpec s = mode == PerturbMode::Individual ? PerturbSpec::individual() : PerturbSpec::superposed();
  const std::string p = mode == PerturbMode::Individual ? "perturb_individual." : "perturb_superposed.";
  s.sigma_landmark = c.cfg.get_double(p + "sigma_landmark", s.sigma_landmark);
  if (mode == PerturbMode::Superposed) s.sigma_face = c.cfg.get_double(p + "sigma_face", s.sigma_face);
  s.replicas_per_face = static_cast<int>(c.cfg.get_int(p + "replicas_per_face", s.replicas_per_face));
  s.seed = static_cast<std::uint64_t>(c.cfg.get_int(p + "seed", static_cast<long long>(derive_seed(c.seed(), mode == PerturbMode::Individual ? 11 : 12) >> 1)));
  s.validate();
  return s;
}

OperatingPoint operating_point_from(Context& c) {
  OperatingPoint op;
  op.gt_threshold = c.cfg.get_double("metrics.gt_threshold", kGtThreshold);
  op.sigma_fraction = c.cfg.get_double("metrics.sigma_fraction", kSigmaFraction);
  op.validate();
  return op;
}

// ---- data ----

struct Data {
  std::vector<AnnotationRecord> records;
  fs::path root;
  SplitManifest splits;
  bool has_splits = false;
};

Data data_from(Context& c, bool need_splits) {
  Data d;
  const fs::path ann = c.cfg.get_string("data.annotations", "");
  if (ann.empty()) raise(ErrorCode::InvalidArgument, "data.annotations is not set");
  const std::string format = c.cfg.get_string("data.format", "canonical_json");
  if (format == "canonical_json") {
    d.records = load_annotations(ann).records;
  } else if (format == "points_csv") {
    const std::string groups = c.cfg.get_string("data.group_spec", "helen194");
    const GroupSpec spec = groups == "helen194" ? GroupSpec::helen194() : GroupSpec::load(groups);
    d.records = load_points_csv(ann, spec);
  } else {
    raise(ErrorCode::InvalidArgument, "data.format must be canonical_json or points_csv");
  }
  const std::string root = c.cfg.get_string("data.root", "");
  d.root = root.empty() ? ann.parent_path() : fs::path(root);
  const std::string splits = c.cfg.get_string("data.splits", "");
  if (!splits.empty()) {
    d.splits = SplitManifest::load(splits);
    d.has_splits = true;
  } else if (need_splits) {
    raise(ErrorCode::InvalidArgument, "data.splits is not set");
  }
  return d;
}

const std::vector<std::string>& split_ids(const Data& d, const std::string& name) {
  if (name == "train") return d.splits.train_ids;
  if (name == "val") return d.splits.val_ids;
  if (name == "test") return d.splits.test_ids;
  raise(ErrorCode::InvalidArgument, "split must be train, val or test");
}

Dataset load_split(const Data& d, const std::string& name) { return load_dataset(d.records, d.root, split_ids(d, name)); }

// ---- reports ----

json report_json(const EvaluationReport& r) {
  return {{"true_correct95", r.true_correct95},
          {"tuned_pred_threshold", r.tuned_pred_threshold},
          {"correct_marked_correct_rate", r.correct_marked_correct_rate},
          {"eval_retention_rate", r.eval_retention_rate},
          {"gt_threshold", r.gt_threshold},
          {"n_tune", r.n_tune},
          {"n_eval", r.n_eval},
          {"n_eval_failures", r.n_eval_failures},
          {"n_eval_correct", r.n_eval_correct}};
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string s = "x,detection_rate,retention_rate\n";
  for (const auto& p : curve) s += num(p.x) + "," + num(p.detection_rate) + "," + num(p.retention_rate) + "\n";
  return s;
}

std::string sweep_csv(const std::vector<GtSweepPoint>& sweep, bool distance) {
  std::string s = "x,detection_rate,retention_rate,pred_threshold\n";
  for (const auto& p : sweep) {
    s += num(distance ? p.distance_fraction : p.gt_threshold) + "," + num(p.detection_rate) + "," +
         num(p.retention_rate) + "," + num(p.pred_threshold) + "\n";
  }
  return s;
}

void write_scored(Context& c, const ScoredSet& s, std::uint64_t eval_seed) {
  const OperatingPoint op = operating_point_from(c);
  const double tune = c.cfg.get_double("metrics.tune_fraction", kTuneFraction);
  const EvaluationReport r = true_correct95(s.pred, s.gt, op, tune, eval_seed);
  json j = report_json(r);
  j["n_samples"] = s.pred.size();
  write_json(c.out / "report.json", j);
  write_file(c.out / "threshold_sweep.csv", curve_csv(prediction_threshold_curve(s.pred, s.gt, op.gt_threshold, linspace(0.0, 1.0, 100))));
  const auto gts = c.cfg.get_doubles("eval.gt_thresholds", linspace(0.05, 0.95, 18));
  const auto dists = c.cfg.get_doubles("eval.distance_fractions", linspace(0.02, 0.2, 18));
  write_file(c.out / "confidence_sweep.csv", sweep_csv(gt_threshold_curve(s.pred, s.gt, gts, op.sigma_fraction, tune, eval_seed), false));
  write_file(c.out / "distance_sweep.csv", sweep_csv(gt_distance_curve(s.pred, s.gt, dists, op.sigma_fraction, tune, eval_seed), true));
  std::string scores = "face_id,pred,gt\n";
  for (std::size_t i = 0; i < s.pred.size(); ++i) scores += s.face_ids[i] + "," + num(s.pred[i]) + "," + num(s.gt[i]) + "\n";
  write_file(c.out / "scores.csv", scores);
}

json cv_summary(const std::vector<GridCell>& table, const KernelModel& m) {
  return {{"cv_table", grid_table_json(table)},
          {"best", {{"C", m.meta.C}, {"epsilon", m.meta.epsilon}, {"kernel", m.kernel.to_string()}, {"cv_score", m.meta.cv_score}}},
          {"n_train", m.meta.n_train},
          {"kkt_residual", m.meta.kkt_residual},
          {"converged", m.meta.converged}};
}

// ---- commands ----

void cmd_synth(Context& c) {
  SynthOptions o;
  o.count = static_cast<int>(c.cfg.get_int("synth.count", o.count));
  o.image_size = static_cast<int>(c.cfg.get_int("synth.image_size", o.image_size));
  o.seed = static_cast<std::uint64_t>(c.cfg.get_int("synth.seed", static_cast<long long>(c.seed())));
  o.planted_noise_chin = c.cfg.get_bool("synth.planted_noise_chin", o.planted_noise_chin);
  o.gender_cue = c.cfg.get_bool("synth.gender_cue", o.gender_cue);
  o.max_rotation_deg = c.cfg.get_double("synth.max_rotation_deg", o.max_rotation_deg);
  o.pixel_noise = c.cfg.get_double("synth.pixel_noise", o.pixel_noise);
  const AnnotationFile file = write_synthetic_corpus(o, c.out, c.threads);
  write_json(c.out / "synth_report.json", {{"count", file.records.size()}, {"generator", o.to_json()}});
}

void cmd_split(Context& c) {
  const Data d = data_from(c, false);
  const std::string filter = c.cfg.get_string("split.pose_filter", "frontal");
  std::optional<PoseFilter> pf;
  if (filter == "frontal") {
    pf = PoseFilter::frontal();
  } else if (filter == "application") {
    pf = PoseFilter::application();
  } else if (filter != "none") {
    raise(ErrorCode::InvalidArgument, "split.pose_filter must be frontal, application or none");
  }
  const SplitManifest m = make_splits(d.records, static_cast<std::uint64_t>(c.cfg.get_int("split.seed", static_cast<long long>(c.seed()))), pf);
  m.save(c.out / "splits.json");
}

void cmd_extract(Context& c) {
  const Data d = data_from(c, false);
  const Landmark lm = landmark_from_name(c.cfg.get_string("extract.landmark", "eyeL"));
  const auto configs = configs_from(c, "extract.configs", kDefaultStack);
  const std::string split = c.cfg.get_string("extract.split", "all");
  const Dataset faces = split == "all" ? load_dataset(d.records, d.root) : load_split(d, split);
  LandmarkFeatures f{lm, configs, std::nullopt};
  std::vector<Eigen::VectorXd> rows(faces.size());
  std::vector<char> ok(faces.size(), 0);
  parallel_for(faces.size(), c.threads, [&](std::size_t i) {
    if (!faces[i].landmarks.has(lm)) return;
    const auto face = normalize_by(faces[i].image, faces[i].landmarks);
    if (!face) return;
    rows[i] = f.extract(*face, face->to_canvas(faces[i].landmarks.at(lm))).values;
    ok[i] = 1;
  });
  std::vector<std::string> ids;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(std::count(ok.begin(), ok.end(), 1)), raw_dimension(configs));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (!ok[i]) continue;
    x.row(r++) = rows[i].transpose();
    ids.push_back(faces[i].face_id);
  }
  json side = {{"landmark", landmark_name(lm)}, {"face_ids", ids}, {"configs", json::array()}, {"config_fingerprint", fingerprint(configs)}};
  for (const auto& cfg : configs) side["configs"].push_back(cfg.to_string());
  if (x.cols() > kPcaTargetDim && x.rows() > 1) {
    f.pca = pca_fit(x);
    ModelContainer pc;
    pc.header["architecture"] = "pca";
    write_pca(pc, "", *f.pca);
    pc.save(c.out / "pca.lfdm");
    x = f.pca->project_rows(x);
    side["pca"] = "pca.lfdm";
    side["config_fingerprint"] = f.fingerprint();
  }
  save_feature_matrix(c.out / "features.f64", x, side);
}

void cmd_train_individual(Context& c) {
  const Data d = data_from(c, true);
  const Landmark lm = landmark_from_name(c.cfg.get_string("individual.landmark", "eyeL"));
  const auto configs = feature_map(c, {lm}).at(lm);
  const PerturbSpec spec = perturb_from(c, PerturbMode::Individual);
  const TrainingOptions opts = training_from(c, "individual", kIndividualSampleCap);
  const IndividualModel m = train_individual(load_split(d, "train"), lm, configs, spec, opts);
  save_model(m, c.out / "model.lfdm");
  write_json(c.out / "train_report.json", cv_summary(m.cv_table, m.regressor));
}

void cmd_train_joint(Context& c) {
  const Data d = data_from(c, true);
  const auto lms = landmarks_from(c, "joint.landmarks", {"noseC", "mouthL", "eyeL"});
  const auto configs = feature_map(c, lms);
  const PerturbSpec spec = perturb_from(c, PerturbMode::Superposed);
  const JointModel m = train_joint(load_split(d, "train"), lms, configs, spec, training_from(c, "joint", kJointSampleCap));
  save_model(m, c.out / "model.lfdm");
  write_json(c.out / "train_report.json", cv_summary(m.cv_table, m.regressor));
}

void cmd_train_cascaded(Context& c) {
  const Data d = data_from(c, true);
  std::vector<std::string> all;
  for (Landmark lm : kAllLandmarks) all.emplace_back(landmark_name(lm));
  const auto lms = landmarks_from(c, "cascaded.landmarks", all);
  const auto configs = feature_map(c, lms);
  const PerturbSpec ind = perturb_from(c, PerturbMode::Individual);
  const PerturbSpec sup = perturb_from(c, PerturbMode::Superposed);
  const Dataset train = load_split(d, "train");
  const TrainingOptions stage1_opts = training_from(c, "individual", kIndividualSampleCap);
  std::vector<IndividualModel> stage1;
  for (Landmark lm : lms) stage1.push_back(train_individual(train, lm, configs.at(lm), ind, stage1_opts));
  const CascadedModel m = train_cascaded(std::move(stage1), load_split(d, "val"), sup, training_from(c, "cascaded", kCascadedSampleCap));
  save_model(m, c.out / "model.lfdm");
  write_json(c.out / "train_report.json", cv_summary(m.cv_table, m.stage2));
}

void cmd_eval(Context& c) {
  const Data d = data_from(c, true);
  const ConfidenceModel model = load_model(c.cfg.get_string("eval.model", "model.lfdm"));
  const Dataset faces = load_split(d, c.cfg.get_string("eval.split", "test"));
  const auto eval_seed = static_cast<std::uint64_t>(c.cfg.get_int("eval.seed", static_cast<long long>(derive_seed(c.seed(), 21) >> 1)));
  const double sigma = c.cfg.get_double("metrics.sigma_fraction", kSigmaFraction);
  const std::string detections = c.cfg.get_string("eval.detections", "");
  ScoredSet s;
  if (!detections.empty()) {
    s = score_detections(model, faces, landmarks_by_id(load_annotations(detections).records), sigma, c.threads);
  } else if (const auto* m = std::get_if<IndividualModel>(&model)) {
    PerturbSpec spec = perturb_from(c, PerturbMode::Individual);
    spec.seed = eval_seed;
    s = score_individual_synthetic(*m, faces, spec, sigma, c.threads);
  } else {
    PerturbSpec spec = perturb_from(c, PerturbMode::Superposed);
    spec.seed = eval_seed;
    s = score_face_synthetic(model, faces, spec, sigma, c.threads);
  }
  write_scored(c, s, eval_seed);
}

void cmd_subset_search(Context& c) {
  const Data d = data_from(c, true);
  std::vector<std::string> all;
  for (Landmark lm : kAllLandmarks) all.emplace_back(landmark_name(lm));
  const auto lms = landmarks_from(c, "subset.landmarks", all);
  const auto configs = feature_map(c, lms);
  const PerturbSpec spec = perturb_from(c, PerturbMode::Superposed);
  const auto eval_seed = static_cast<std::uint64_t>(c.cfg.get_int("eval.seed", static_cast<long long>(derive_seed(c.seed(), 21) >> 1)));
  const auto result = subset_search(load_split(d, "train"), load_split(d, "val"), lms, configs, spec,
                                    training_from(c, "joint", kJointSampleCap), operating_point_from(c), eval_seed);
  std::string csv = "subset,cardinality,true_correct95,cardinality_mean\n";
  json rows = json::array();
  for (const auto& r : result.rows) {
    std::string name;
    for (Landmark lm : r.subset) name += (name.empty() ? "" : "+") + std::string(landmark_name(lm));
    const int k = static_cast<int>(r.subset.size());
    csv += name + "," + std::to_string(k) + "," + num(r.true_correct95) + "," + num(result.cardinality_means.at(k)) + "\n";
    rows.push_back({{"subset", name}, {"cardinality", k}, {"true_correct95", r.true_correct95}});
  }
  write_file(c.out / "subset_scores.csv", csv);
  json means = json::object();
  for (const auto& [k, v] : result.cardinality_means) means[std::to_string(k)] = v;
  write_json(c.out / "report.json", {{"rows", rows}, {"cardinality_means", means}});
}

void cmd_train_gender(Context& c) {
  const Data d = data_from(c, true);
  const SearchGrid grid = grid_from(c, Task::Classification);
  const auto seed = static_cast<std::uint64_t>(c.cfg.get_int("gender.cv_seed", static_cast<long long>(c.seed())));
  SolverOptions solver;
  solver.tolerance = c.cfg.get_double("train.kkt_tolerance", 1e-3);
  const GenderModel m = train_gender(load_split(d, "train"), grid, seed, solver, c.threads);
  save_gender_model(m, c.out / "gender.lfdm");
  const Dataset test = load_split(d, "test");
  std::size_t n = 0, hits = 0;
  for (const auto& f : test) {
    if (!f.gender) continue;
    ++n;
    const auto g = predict_gender(m, f.image, f.landmarks);
    hits += g && *g == *f.gender;
  }
  json j = cv_summary(m.cv_table, m.classifier);
  j["test_accuracy"] = n ? static_cast<double>(hits) / static_cast<double>(n) : std::nan("");
  j["n_test"] = n;
  write_json(c.out / "report.json", j);
}

std::string tradeoff_csv(const std::vector<TradeoffPoint>& curve) {
  std::string s = "threshold,recompute_fraction,time_s,mae_px,accuracy\n";
  for (const auto& p : curve) {
    s += num(p.threshold) + "," + num(p.recompute_fraction) + "," + num(p.time_s) + "," + num(p.mae_px) + "," +
         (p.accuracy ? num(*p.accuracy) : "nan") + "\n";
  }
  return s;
}

MethodProfile profile_from(Context& c, const std::string& name, double time, double sigma, std::uint64_t salt) {
  MethodProfile p;
  p.name = name;
  p.time_per_image = c.cfg.get_double("tradeoff." + name + "_time", time);
  const std::string det = c.cfg.get_string("tradeoff." + name + "_detections", "");
  if (det.empty()) {
    p.provider = std::make_shared<SyntheticProvider>(c.cfg.get_double("tradeoff." + name + "_sigma", sigma), derive_seed(c.seed(), salt));
  } else {
    p.provider = std::make_shared<DetectionTable>(landmarks_by_id(load_annotations(det).records));
  }
  p.validate();
  return p;
}

void cmd_tradeoff(Context& c) {
  const double t_fast = c.cfg.get_double("tradeoff.fast_time", kFastTotalSeconds);
  const double t_robust = c.cfg.get_double("tradeoff.robust_time", kRobustTotalSeconds);
  const auto fractions = c.cfg.get_doubles("tradeoff.fractions", {});
  if (!fractions.empty()) {
    const auto curve = cost_curve(t_fast, t_robust, fractions);
    write_file(c.out / "tradeoff_curve.csv", tradeoff_csv(curve));
    json pts = json::array();
    for (const auto& p : curve) {
      pts.push_back({{"recompute_fraction", p.recompute_fraction}, {"time_s", p.time_s}, {"speedup", speedup(t_robust, p.time_s)}});
    }
    write_json(c.out / "report.json", {{"mode", "cost_only"}, {"points", pts}});
    return;
  }
  const Data d = data_from(c, true);
  const ConfidenceModel model = load_model(c.cfg.get_string("tradeoff.model", "model.lfdm"));
  const std::string gender_path = c.cfg.get_string("tradeoff.gender_model", "");
  std::optional<GenderModel> gender;
  if (!gender_path.empty()) gender = load_gender_model(gender_path);
  const MethodProfile fast = profile_from(c, "fast", t_fast, 0.12, 31);
  const MethodProfile robust = profile_from(c, "robust", t_robust, 0.06, 32);
  const auto thresholds = c.cfg.get_doubles("tradeoff.thresholds", linspace(0.0, 1.0, 20));

  // Operating threshold tuned on the validation split with the fast method's detections.
  const Dataset val = load_split(d, c.cfg.get_string("tradeoff.tune_split", "val"));
  std::map<std::string, LandmarkSet> val_det;
  for (const auto& f : val) {
    if (auto lm = fast.provider->landmarks(f)) val_det[f.face_id] = *lm;
  }
  const double sigma = c.cfg.get_double("metrics.sigma_fraction", kSigmaFraction);
  const ScoredSet tune = score_detections(model, val, val_det, sigma, c.threads);
  const auto tune_seed = static_cast<std::uint64_t>(c.cfg.get_int("eval.seed", static_cast<long long>(derive_seed(c.seed(), 21) >> 1)));
  std::optional<double> operating;
  try {
    operating = select_operating_threshold(true_correct95(tune.pred, tune.gt, operating_point_from(c), kTuneFraction, tune_seed));
  } catch (const Error& e) {
    spdlog::warn("no operating threshold: {}", e.what());
  }
  std::vector<double> all_thresholds = thresholds;
  if (operating) all_thresholds.push_back(*operating);
  const TradeoffReport r = run_tradeoff(load_split(d, c.cfg.get_string("tradeoff.split", "test")), model, fast, robust,
                                        all_thresholds, gender ? &*gender : nullptr, c.threads);
  std::vector<TradeoffPoint> curve(r.curve.begin(), r.curve.begin() + static_cast<std::ptrdiff_t>(thresholds.size()));
  write_file(c.out / "tradeoff_curve.csv", tradeoff_csv(curve));
  json j = {{"mode", "full"}, {"fast_mae", r.fast_mae}, {"robust_mae", r.robust_mae}, {"n_samples", r.face_ids.size()}};
  j["fast_accuracy"] = r.fast_accuracy ? json(*r.fast_accuracy) : json(nullptr);
  j["robust_accuracy"] = r.robust_accuracy ? json(*r.robust_accuracy) : json(nullptr);
  if (operating) {
    const TradeoffPoint& p = r.curve.back();
    j["operating_point"] = {{"threshold", p.threshold}, {"recompute_fraction", p.recompute_fraction}, {"time_s", p.time_s},
                            {"speedup", speedup(robust.time_per_image, p.time_s)}, {"mae_px", p.mae_px},
                            {"accuracy", p.accuracy ? json(*p.accuracy) : json(nullptr)}};
  }
  write_json(c.out / "report.json", j);
}

json error_json(const std::string& code, const std::string& message) { return {{"error", code}, {"message", message}}; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"Landmark failure detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir = "out";
  std::optional<long long> seed;
  int threads = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Run configuration file");
  app.add_option("--seed", seed, "Master seed (run.seed)");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a config key: section.key=value");

  using Command = void (*)(Context&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"synth", cmd_synth},
      {"split", cmd_split},
      {"extract", cmd_extract},
      {"train-individual", cmd_train_individual},
      {"train-joint", cmd_train_joint},
      {"train-cascaded", cmd_train_cascaded},
      {"eval", cmd_eval},
      {"subset-search", cmd_subset_search},
      {"train-gender", cmd_train_gender},
      {"tradeoff", cmd_tradeoff},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name, name);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << error_json("UsageError", e.what()).dump() << "\n";
    return 64;
  }

  try {
    Context c;
    if (!config_path.empty()) c.cfg = RunConfig::load(config_path);
    for (const auto& o : overrides) c.cfg.apply_override(o);
    if (seed) c.cfg.set("run.seed", *seed);
    c.out = out_dir;
    c.threads = threads;
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) raise(ErrorCode::IoError, "cannot create " + c.out.string() + ": " + ec.message());
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) {
        c.cfg.set("run.command", name);
        fn(c);
        c.seed();
        c.cfg.save(c.out / "run_config.toml");
        spdlog::info("{} finished; outputs in {}", name, c.out.string());
      }
    }
  } catch (const Error& e) {
    err << error_json(std::string(to_string(e.code())), e.what()).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << error_json("InternalError", e.what()).dump() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace lfd::cli
