#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfd/image.hpp"
#include "lfd/landmarks.hpp"

namespace lfd {

struct Pose {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

struct AnnotationRecord {
  std::string face_id;
  std::string image_path;
  LandmarkSet landmarks;
  std::optional<Pose> pose;
  std::string source = "ground_truth";  // ground_truth | detector:<name> | synthetic
  std::optional<int> gender;            // +1 male, -1 female
};

/// Which eye the file calls "left". Files written by this library are image-left.
enum class EyeConvention { ImageLeft, SubjectLeft };

struct AnnotationFile {
  std::vector<AnnotationRecord> records;
  bool synthetic = false;
  EyeConvention eye_convention = EyeConvention::ImageLeft;
  nlohmann::json generator;  // e.g. the perturbation spec of a generated set
};

/// Canonical JSON annotations. Subject-left files are converted to image-left
/// on load. Throws ParseError (with byte offset) or IoError.
AnnotationFile load_annotations(const std::filesystem::path& path);
AnnotationFile parse_annotations(const std::string& text);
void save_annotations(const AnnotationFile& file, const std::filesystem::path& path);
std::string dump_annotations(const AnnotationFile& file);

/// Canonical landmark -> indices of the raw points averaged into it.
struct GroupSpec {
  int source_points = 0;
  std::map<Landmark, std::vector<int>> groups;

  /// Throws IndexOutOfRange or InvalidArgument.
  void validate() const;
  static GroupSpec load(const std::filesystem::path& path);
  static GroupSpec parse(const std::string& text);
  std::string dump() const;
  /// Artifact-defined grouping for the 194-point HELEN layout.
  static GroupSpec helen194();
};

/// Mean of each group's points; a landmark with any missing group point is omitted.
LandmarkSet average_groups(const std::vector<std::optional<Point2>>& points, const GroupSpec& spec);

/// `face_id,image_path,x0,y0,...`; empty fields mark missing points. An
/// optional header line starting with "face_id" is skipped.
std::vector<AnnotationRecord> load_points_csv(const std::filesystem::path& path, const GroupSpec& spec);
std::vector<AnnotationRecord> parse_points_csv(const std::string& text, const GroupSpec& spec);

struct PoseFilter {
  double max_abs_yaw = 15.0;
  double max_abs_pitch = 15.0;
  std::optional<double> max_abs_roll;

  static PoseFilter frontal() { return {}; }
  /// Frontal plus |roll| < 60 degrees.
  static PoseFilter application() { return {15.0, 15.0, 60.0}; }
  /// Records without pose information pass.
  bool accepts(const AnnotationRecord& r) const;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  /// Pairwise disjoint and free of duplicates; throws SplitOverlap.
  void validate() const;
  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SplitManifest load(const std::filesystem::path& path);
};

/// Pose filter, seeded shuffle, contiguous 80/10/10 cut. Throws TooFewRecords.
SplitManifest make_splits(const std::vector<AnnotationRecord>& records, std::uint64_t seed,
                          const std::optional<PoseFilter>& pose_filter = std::nullopt);

/// In-memory face used by training and evaluation.
struct FaceSample {
  std::string face_id;
  GrayImage image;
  LandmarkSet landmarks;
  std::optional<int> gender;
};

using Dataset = std::vector<FaceSample>;

/// Loads the images of the records whose ids are listed (all when `ids` is
/// empty), in `ids` order. Relative image paths resolve against `root`.
Dataset load_dataset(const std::vector<AnnotationRecord>& records, const std::filesystem::path& root,
                     const std::vector<std::string>& ids = {});

std::map<std::string, LandmarkSet> landmarks_by_id(const std::vector<AnnotationRecord>& records);

}  // namespace lfd
