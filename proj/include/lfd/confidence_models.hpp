#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "lfd/annotations.hpp"
#include "lfd/descriptors.hpp"
#include "lfd/metrics.hpp"
#include "lfd/perturb.hpp"
#include "lfd/svm.hpp"

namespace lfd {

inline constexpr std::size_t kIndividualSampleCap = 2300;
inline constexpr std::size_t kJointSampleCap = 10000;
inline constexpr std::size_t kCascadedSampleCap = 3200;
inline constexpr double kConfidenceFloor = 1e-6;

struct TrainingOptions {
  SearchGrid grid = SearchGrid::confidence_svr();
  std::size_t max_samples = 0;  // 0 keeps every row
  SolverOptions solver;
  std::uint64_t cv_seed = 0;
  int threads = 1;
  std::size_t min_faces = 50;
  double sigma_fraction = kSigmaFraction;
};

/// Descriptor stack at one landmark, with an optional PCA stage that is used
/// when the raw dimension exceeds kPcaTargetDim.
struct LandmarkFeatures {
  Landmark landmark = Landmark::EyeL;
  std::vector<DescriptorConfig> configs;
  std::optional<PcaModel> pca;

  int dimension() const;
  std::uint64_t fingerprint() const;
  /// `position` is in canvas coordinates and is clamped into the face rect.
  FeatureVector extract(const FacePatch& face, const Point2& position) const;
};

struct IndividualModel {
  LandmarkFeatures features;
  KernelModel regressor;
  std::vector<std::string> train_face_ids;
  std::vector<GridCell> cv_table;
  std::vector<int> fold_of;
};

struct JointModel {
  std::vector<LandmarkFeatures> features;  // concatenation order
  KernelModel regressor;
  std::vector<std::string> train_face_ids;
  std::vector<GridCell> cv_table;
  std::vector<int> fold_of;

  std::vector<Landmark> landmarks() const;
  std::uint64_t fingerprint() const;
};

struct CascadedModel {
  std::vector<IndividualModel> stage1;
  KernelModel stage2;  // input: stage-1 confidences in stage1 order
  std::vector<std::string> stage2_face_ids;
  std::vector<GridCell> cv_table;
  std::vector<int> fold_of;
};

using ConfidenceModel = std::variant<IndividualModel, JointModel, CascadedModel>;

std::string architecture_name(const ConfidenceModel& model);

/// Design matrix with one row per perturbed replica; rows of the same face share a group.
struct TrainingRows {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::int64_t> groups;
  std::vector<std::string> face_ids;  // faces that contributed rows
};

/// Canvas of a face normalized by the (possibly wrong) eye positions in `landmarks`.
/// Returns nullopt when the eyes are missing, coincident or outside the image.
std::optional<FacePatch> normalize_by(const GrayImage& image, const LandmarkSet& landmarks);

/// Rows for an individual model: features at the perturbed landmark, label
/// confidence(distance, sigma_fraction * face size). PCA is fitted here when needed.
TrainingRows individual_rows(const Dataset& train, LandmarkFeatures& features, const PerturbSpec& spec,
                             const TrainingOptions& options);

/// Rows for a joint model: concatenated features, label from the replica MAE.
TrainingRows joint_rows(const Dataset& train, std::vector<LandmarkFeatures>& features, const PerturbSpec& spec,
                        const TrainingOptions& options);

/// Throws InsufficientData, DegenerateLabels.
IndividualModel train_individual(const Dataset& train, Landmark landmark,
                                 const std::vector<DescriptorConfig>& configs, const PerturbSpec& spec,
                                 const TrainingOptions& options = {});

/// Confidence in [kConfidenceFloor, 1] at `position` (canvas coordinates).
double predict_individual(const IndividualModel& model, const FacePatch& face, const Point2& position);

JointModel train_joint(const Dataset& train, const std::vector<Landmark>& subset,
                       const std::map<Landmark, std::vector<DescriptorConfig>>& configs, const PerturbSpec& spec,
                       const TrainingOptions& options = {});

double predict_joint(const JointModel& model, const FacePatch& face, const LandmarkSet& canvas_landmarks);

/// Stage-2 fit on the validation faces. Throws SplitOverlap when a validation
/// face was used to train any stage-1 model.
CascadedModel train_cascaded(std::vector<IndividualModel> stage1, const Dataset& validation,
                             const PerturbSpec& spec, const TrainingOptions& options = {});

/// Stage-2 regressor on precomputed stage-1 confidences.
KernelModel fit_stage2(const Eigen::MatrixXd& stage1_confidences, const Eigen::VectorXd& labels,
                       const std::vector<std::int64_t>& groups, const TrainingOptions& options,
                       GridSearchResult* search = nullptr);

double predict_cascaded(const CascadedModel& model, const FacePatch& face, const LandmarkSet& canvas_landmarks);

/// Confidence for a detection of `image`. Individual models score their own
/// landmark. Unnormalizable detections score kConfidenceFloor.
double predict_face(const ConfidenceModel& model, const GrayImage& image, const LandmarkSet& detected);

/// Predicted and ground-truth confidences over a set of scored detections.
struct ScoredSet {
  std::vector<double> pred;
  std::vector<double> gt;
  std::vector<std::string> face_ids;
};

/// Individual-mode detector simulation on `faces`, scored per landmark.
ScoredSet score_individual_synthetic(const IndividualModel& model, const Dataset& faces, const PerturbSpec& spec,
                                     double sigma_fraction = kSigmaFraction, int threads = 1);
/// Superposed detector simulation on `faces`, scored by face MAE.
ScoredSet score_face_synthetic(const ConfidenceModel& model, const Dataset& faces, const PerturbSpec& spec,
                               double sigma_fraction = kSigmaFraction, int threads = 1);
/// Scores real detector outputs keyed by face id.
ScoredSet score_detections(const ConfidenceModel& model, const Dataset& faces,
                           const std::map<std::string, LandmarkSet>& detections,
                           double sigma_fraction = kSigmaFraction, int threads = 1);

struct SubsetRow {
  std::vector<Landmark> subset;
  double true_correct95 = 0.0;
};

struct SubsetSearchResult {
  std::vector<SubsetRow> rows;                 // bitmask order over `landmarks`
  std::map<int, double> cardinality_means;     // |subset| -> mean TrueCorrect95
};

/// Trains a joint model per non-empty subset and evaluates TrueCorrect95 on `validation`.
SubsetSearchResult subset_search(const Dataset& train, const Dataset& validation,
                                 const std::vector<Landmark>& landmarks,
                                 const std::map<Landmark, std::vector<DescriptorConfig>>& configs,
                                 const PerturbSpec& spec, const TrainingOptions& options = {},
                                 const OperatingPoint& op = {}, std::uint64_t eval_seed = 0);

struct FeatureSearchRow {
  std::vector<DescriptorConfig> configs;
  double cv_r2 = 0.0;
  double true_correct95 = 0.0;
};

/// Trains an individual model per candidate stack and scores it on `validation`;
/// rows keep candidate order.
std::vector<FeatureSearchRow> feature_search(const Dataset& train, const Dataset& validation, Landmark landmark,
                                             const std::vector<std::vector<DescriptorConfig>>& candidates,
                                             const PerturbSpec& spec, const TrainingOptions& options = {},
                                             const OperatingPoint& op = {}, std::uint64_t eval_seed = 0);

/// Per-landmark descriptor stacks named "aflw" or "helen". Throws InvalidArgument.
std::map<Landmark, std::vector<DescriptorConfig>> preset_configs(const std::string& name);

/// Best single-descriptor configurations per landmark and descriptor kind for a preset.
std::map<Landmark, std::map<DescriptorKind, DescriptorConfig>> preset_table(const std::string& name);

}  // namespace lfd
