#include "lfd/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lfd/error.hpp"
#include "lfd/random.hpp"

namespace lfd {

using nlohmann::json;

namespace {

constexpr const char* kAnnotationFormat = "lfd-annotations";
constexpr int kAnnotationVersion = 1;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) raise(ErrorCode::IoError, "write failed for " + path.string());
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, "JSON syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

Point2 parse_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    raise(ErrorCode::ParseError, where + ": expected [x, y]");
  }
  Point2 p(j[0].get<double>(), j[1].get<double>());
  if (!p.allFinite()) raise(ErrorCode::ParseError, where + ": non-finite coordinate");
  return p;
}

void swap_sides(LandmarkSet& s) {
  const auto swap = [&](Landmark a, Landmark b) {
    const auto pa = s.get(a);
    const auto pb = s.get(b);
    if (pb) s.set(a, *pb); else s.clear(a);
    if (pa) s.set(b, *pa); else s.clear(b);
  };
  swap(Landmark::EyeL, Landmark::EyeR);
  swap(Landmark::MouthL, Landmark::MouthR);
}

}  // namespace

AnnotationFile parse_annotations(const std::string& text) {
  const json j = parse_json(text);
  AnnotationFile file;
  try {
    if (j.value("format", std::string()) != kAnnotationFormat) raise(ErrorCode::ParseError, "not an lfd-annotations document");
    if (j.value("format_version", 0) != kAnnotationVersion) raise(ErrorCode::VersionMismatch, "unsupported annotation format_version");
    file.synthetic = j.value("synthetic", false);
    const std::string convention = j.value("eye_convention", std::string("image-left"));
    if (convention == "subject-left") {
      file.eye_convention = EyeConvention::SubjectLeft;
    } else if (convention != "image-left") {
      raise(ErrorCode::ParseError, "eye_convention must be image-left or subject-left");
    }
    if (j.contains("generator")) file.generator = j.at("generator");
    std::set<std::string> seen;
    const json& records = j.at("records");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const json& r = records[i];
      const std::string where = "records[" + std::to_string(i) + "]";
      AnnotationRecord rec;
      rec.face_id = r.at("face_id").get<std::string>();
      if (!seen.insert(rec.face_id).second) raise(ErrorCode::ParseError, where + ": duplicate face_id " + rec.face_id);
      rec.image_path = r.value("image_path", std::string());
      rec.source = r.value("source", std::string("ground_truth"));
      for (const auto& [name, pt] : r.at("landmarks").items()) {
        if (pt.is_null()) continue;
        rec.landmarks.set(landmark_from_name(name), parse_point(pt, where + "." + name));
      }
      if (file.eye_convention == EyeConvention::SubjectLeft) swap_sides(rec.landmarks);
      if (r.contains("pose") && !r.at("pose").is_null()) {
        const json& p = r.at("pose");
        rec.pose = Pose{p.at("yaw").get<double>(), p.at("pitch").get<double>(), p.value("roll", 0.0)};
      }
      if (r.contains("attributes") && r.at("attributes").contains("gender")) {
        const std::string g = r.at("attributes").at("gender").get<std::string>();
        if (g == "male") {
          rec.gender = 1;
        } else if (g == "female") {
          rec.gender = -1;
        } else {
          raise(ErrorCode::ParseError, where + ": gender must be male or female");
        }
      }
      file.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("annotation schema: ") + e.what());
  }
  return file;
}

AnnotationFile load_annotations(const std::filesystem::path& path) { return parse_annotations(read_text(path)); }

std::string dump_annotations(const AnnotationFile& file) {
  json j;
  j["format"] = kAnnotationFormat;
  j["format_version"] = kAnnotationVersion;
  j["eye_convention"] = "image-left";
  j["synthetic"] = file.synthetic;
  if (!file.generator.is_null()) j["generator"] = file.generator;
  json records = json::array();
  for (const auto& rec : file.records) {
    json r;
    r["face_id"] = rec.face_id;
    r["image_path"] = rec.image_path;
    r["source"] = rec.source;
    json lms = json::object();
    for (Landmark lm : kAllLandmarks) {
      if (rec.landmarks.has(lm)) {
        const Point2& p = rec.landmarks.at(lm);
        lms[std::string(landmark_name(lm))] = {p.x(), p.y()};
      }
    }
    r["landmarks"] = lms;
    if (rec.pose) r["pose"] = {{"yaw", rec.pose->yaw}, {"pitch", rec.pose->pitch}, {"roll", rec.pose->roll}};
    if (rec.gender) r["attributes"] = {{"gender", *rec.gender > 0 ? "male" : "female"}};
    records.push_back(std::move(r));
  }
  j["records"] = std::move(records);
  return j.dump(1);
}

void save_annotations(const AnnotationFile& file, const std::filesystem::path& path) {
  write_text(path, dump_annotations(file));
}

void GroupSpec::validate() const {
  if (source_points < 1) raise(ErrorCode::InvalidArgument, "group spec needs source_points >= 1");
  for (const auto& [lm, idx] : groups) {
    if (idx.empty()) raise(ErrorCode::InvalidArgument, "empty group for " + std::string(landmark_name(lm)));
    for (int i : idx) {
      if (i < 0 || i >= source_points) {
        raise(ErrorCode::IndexOutOfRange, "group index " + std::to_string(i) + " outside [0," +
                                              std::to_string(source_points) + ")");
      }
    }
  }
}

GroupSpec GroupSpec::parse(const std::string& text) {
  const json j = parse_json(text);
  GroupSpec spec;
  try {
    spec.source_points = j.at("source_points").get<int>();
    for (const auto& [name, idx] : j.at("groups").items()) {
      spec.groups[landmark_from_name(name)] = idx.get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("group spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

GroupSpec GroupSpec::load(const std::filesystem::path& path) { return parse(read_text(path)); }

std::string GroupSpec::dump() const {
  json j;
  j["source_points"] = source_points;
  json g = json::object();
  for (const auto& [lm, idx] : groups) g[std::string(landmark_name(lm))] = idx;
  j["groups"] = g;
  return j.dump(1);
}

GroupSpec GroupSpec::helen194() {
  // 0-40 jaw, 41-57 nose, 58-85 outer lip, 86-113 inner lip, 114-133 and
  // 134-153 eyes, 154-193 brows.
  GroupSpec spec;
  spec.source_points = 194;
  std::vector<int> eye_a(20), eye_b(20);
  std::iota(eye_a.begin(), eye_a.end(), 114);
  std::iota(eye_b.begin(), eye_b.end(), 134);
  spec.groups[Landmark::EyeL] = eye_a;
  spec.groups[Landmark::EyeR] = eye_b;
  spec.groups[Landmark::NoseC] = {48, 49, 50};
  spec.groups[Landmark::MouthL] = {58, 59, 85};
  spec.groups[Landmark::MouthR] = {70, 71, 72};
  spec.groups[Landmark::MouthC] = {64, 65, 78, 79};
  spec.groups[Landmark::ChinC] = {19, 20, 21};
  return spec;
}

LandmarkSet average_groups(const std::vector<std::optional<Point2>>& points, const GroupSpec& spec) {
  LandmarkSet out;
  for (const auto& [lm, idx] : spec.groups) {
    std::vector<int> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    Point2 sum = Point2::Zero();
    bool complete = true;
    for (int i : sorted) {
      if (i < 0 || static_cast<std::size_t>(i) >= points.size()) {
        raise(ErrorCode::IndexOutOfRange, "group index " + std::to_string(i) + " beyond available points");
      }
      if (!points[static_cast<std::size_t>(i)]) {
        complete = false;
        break;
      }
      sum += *points[static_cast<std::size_t>(i)];
    }
    if (complete) out.set(lm, sum / static_cast<double>(sorted.size()));
  }
  return out;
}

std::vector<AnnotationRecord> parse_points_csv(const std::string& text, const GroupSpec& spec) {
  spec.validate();
  std::vector<AnnotationRecord> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (line_no == 1 && !fields.empty() && fields[0] == "face_id") continue;
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() < 2 || (fields.size() - 2) % 2 != 0) raise(ErrorCode::ParseError, where + ": expected face_id,image_path,x0,y0,...");
    const std::size_t n_points = (fields.size() - 2) / 2;
    if (n_points < static_cast<std::size_t>(spec.source_points)) {
      raise(ErrorCode::IndexOutOfRange, where + ": fewer points than the group spec expects");
    }
    std::vector<std::optional<Point2>> points(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
      const std::string& xs = fields[2 + 2 * k];
      const std::string& ys = fields[3 + 2 * k];
      if (xs.empty() || ys.empty()) continue;
      try {
        std::size_t px = 0, py = 0;
        const double x = std::stod(xs, &px);
        const double y = std::stod(ys, &py);
        if (px != xs.size() || py != ys.size() || !std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("");
        points[k] = Point2(x, y);
      } catch (const std::logic_error&) {
        raise(ErrorCode::ParseError, where + ": bad coordinate for point " + std::to_string(k));
      }
    }
    AnnotationRecord rec;
    rec.face_id = fields[0];
    if (!seen.insert(rec.face_id).second) raise(ErrorCode::ParseError, where + ": duplicate face_id");
    rec.image_path = fields[1];
    rec.landmarks = average_groups(points, spec);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<AnnotationRecord> load_points_csv(const std::filesystem::path& path, const GroupSpec& spec) {
  return parse_points_csv(read_text(path), spec);
}

bool PoseFilter::accepts(const AnnotationRecord& r) const {
  if (!r.pose) return true;
  if (std::abs(r.pose->yaw) >= max_abs_yaw || std::abs(r.pose->pitch) >= max_abs_pitch) return false;
  if (max_abs_roll && std::abs(r.pose->roll) >= *max_abs_roll) return false;
  return true;
}

void SplitManifest::validate() const {
  std::set<std::string> all;
  for (const auto* ids : {&train_ids, &val_ids, &test_ids}) {
    for (const auto& id : *ids) {
      if (!all.insert(id).second) raise(ErrorCode::SplitOverlap, "face id " + id + " appears twice in the manifest");
    }
  }
}

json SplitManifest::to_json() const {
  return {{"seed", seed}, {"train_ids", train_ids}, {"val_ids", val_ids}, {"test_ids", test_ids}};
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.val_ids = j.at("val_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("split manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void SplitManifest::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(1)); }

SplitManifest SplitManifest::load(const std::filesystem::path& path) {
  return from_json(parse_json(read_text(path)));
}

SplitManifest make_splits(const std::vector<AnnotationRecord>& records, std::uint64_t seed,
                          const std::optional<PoseFilter>& pose_filter) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (!pose_filter || pose_filter->accepts(r)) ids.push_back(r.face_id);
  }
  if (ids.size() < 10) raise(ErrorCode::TooFewRecords, "need at least 10 records after filtering");
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n = ids.size();
  const auto tenth = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
  const std::size_t n_train = n - 2 * tenth;
  SplitManifest m;
  m.seed = seed;
  m.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_train + tenth));
  m.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + tenth), ids.end());
  m.validate();
  return m;
}

Dataset load_dataset(const std::vector<AnnotationRecord>& records, const std::filesystem::path& root,
                     const std::vector<std::string>& ids) {
  std::map<std::string, const AnnotationRecord*> by_id;
  for (const auto& r : records) by_id[r.face_id] = &r;
  std::vector<const AnnotationRecord*> chosen;
  if (ids.empty()) {
    for (const auto& r : records) chosen.push_back(&r);
  } else {
    for (const auto& id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) raise(ErrorCode::InvalidArgument, "face id " + id + " not in annotations");
      chosen.push_back(it->second);
    }
  }
  Dataset out;
  out.reserve(chosen.size());
  for (const auto* r : chosen) {
    std::filesystem::path p = r->image_path;
    if (p.is_relative()) p = root / p;
    out.push_back({r->face_id, load_image(p), r->landmarks, r->gender});
  }
  return out;
}

std::map<std::string, LandmarkSet> landmarks_by_id(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, LandmarkSet> out;
  for (const auto& r : records) out[r.face_id] = r.landmarks;
  return out;
}

}  // namespace lfd
