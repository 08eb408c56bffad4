#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <set>

#include "generators.hpp"
#include "lfd/annotations.hpp"
#include "lfd/container.hpp"
#include "lfd/error.hpp"
#include "lfd/model_io.hpp"
#include "lfd/pipeline.hpp"
#include "lfd/run_config.hpp"
#include "lfd/synth.hpp"

using namespace lfd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lfd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

std::vector<AnnotationRecord> records_with_yaw(Rng& rng, int n) {
  std::vector<AnnotationRecord> out;
  for (int i = 0; i < n; ++i) {
    AnnotationRecord r;
    r.face_id = "f" + std::to_string(i);
    r.image_path = r.face_id + ".pgm";
    r.landmarks = gen::random_landmarks(rng, 10.0, 90.0, 1.0);
    if (i % 7 != 0) r.pose = Pose{gen::uniform(rng, -30, 30), gen::uniform(rng, -10, 10), gen::uniform(rng, -70, 70)};
    out.push_back(r);
  }
  return out;
}

KernelModel random_regressor(Rng& rng, int dim, const KernelSpec& kernel) {
  Eigen::MatrixXd x(30, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gen::normal(rng);
  Eigen::VectorXd y(30);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = gen::uniform(rng, 0.0, 1.0);
  return svr_fit(x, y, 0.5, 0.05, kernel);
}

}  // namespace

TEST_CASE("annotation JSON round trip") {
  Rng rng(1);
  AnnotationFile file;
  file.synthetic = true;
  file.generator = {{"seed", 4}};
  for (auto r : records_with_yaw(rng, 12)) {
    if (r.face_id == "f3") r.landmarks.clear(Landmark::ChinC);
    if (r.face_id == "f5") r.gender = -1;
    if (r.face_id == "f6") r.gender = 1;
    file.records.push_back(r);
  }
  const AnnotationFile back = parse_annotations(dump_annotations(file));
  REQUIRE(back.records.size() == file.records.size());
  CHECK(back.synthetic);
  CHECK(back.generator == file.generator);
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK(back.records[i].face_id == file.records[i].face_id);
    CHECK(back.records[i].landmarks == file.records[i].landmarks);
    CHECK(back.records[i].gender == file.records[i].gender);
    CHECK(back.records[i].pose.has_value() == file.records[i].pose.has_value());
  }
  CHECK_FALSE(back.records[3].landmarks.has(Landmark::ChinC));

  const fs::path dir = scratch("annotations");
  save_annotations(file, dir / "a.json");
  CHECK(load_annotations(dir / "a.json").records.size() == 12);
  CHECK(code_of([&] { load_annotations(dir / "missing.json"); }) == ErrorCode::IoError);
}

TEST_CASE("subject-left files are converted to image-left") {
  const std::string text = R"({"format": "lfd-annotations", "format_version": 1, "eye_convention": "subject-left",
    "records": [{"face_id": "a", "image_path": "a.pgm",
                 "landmarks": {"eyeL": [70, 40], "eyeR": [30, 40], "mouthL": [60, 80], "mouthR": [40, 80], "noseC": [50, 60]}}]})";
  const AnnotationFile f = parse_annotations(text);
  const LandmarkSet& s = f.records[0].landmarks;
  CHECK(s.at(Landmark::EyeL) == Point2(30, 40));
  CHECK(s.at(Landmark::EyeR) == Point2(70, 40));
  CHECK(s.at(Landmark::MouthL) == Point2(40, 80));
  CHECK(s.at(Landmark::NoseC) == Point2(50, 60));
  CHECK(f.eye_convention == EyeConvention::SubjectLeft);
  CHECK(parse_annotations(dump_annotations(f)).records[0].landmarks == s);
}

TEST_CASE("malformed annotations are typed errors") {
  try {
    parse_annotations("{\"format\": \"lfd-annotations\", ");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  CHECK(code_of([] { parse_annotations(R"({"format": "other"})"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_annotations(R"({"format": "lfd-annotations", "format_version": 2, "records": []})"); }) ==
        ErrorCode::VersionMismatch);
  CHECK(code_of([] {
          parse_annotations(R"({"format": "lfd-annotations", "format_version": 1,
            "records": [{"face_id": "a", "landmarks": {"ear": [1, 2]}}]})");
        }) == ErrorCode::ParseError);
  CHECK(code_of([] {
          parse_annotations(R"({"format": "lfd-annotations", "format_version": 1,
            "records": [{"face_id": "a", "landmarks": {}}, {"face_id": "a", "landmarks": {}}]})");
        }) == ErrorCode::ParseError);
  CHECK(code_of([] {
          parse_annotations(R"({"format": "lfd-annotations", "format_version": 1,
            "records": [{"face_id": "a", "landmarks": {"eyeL": [1]}}]})");
        }) == ErrorCode::ParseError);

  Rng rng(2);
  AnnotationFile base;
  base.records = records_with_yaw(rng, 3);
  const std::string good = dump_annotations(base);
  for (int trial = 0; trial < 200; ++trial) {
    std::string bad = good.substr(0, static_cast<std::size_t>(gen::uniform_int(rng, 0, static_cast<int>(good.size()) - 1)));
    if (trial % 2 && !bad.empty()) bad[static_cast<std::size_t>(gen::uniform_int(rng, 0, static_cast<int>(bad.size()) - 1))] = '#';
    try {
      parse_annotations(bad);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("group averaging") {
  GroupSpec spec;
  spec.source_points = 4;
  spec.groups[Landmark::NoseC] = {0, 1, 2, 3};
  spec.groups[Landmark::ChinC] = {3};
  std::vector<std::optional<Point2>> pts = {Point2(0, 0), Point2(2, 0), Point2(2, 2), Point2(0, 2)};
  LandmarkSet s = average_groups(pts, spec);
  CHECK(s.at(Landmark::NoseC) == Point2(1, 1));
  CHECK(s.at(Landmark::ChinC) == Point2(0, 2));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::optional<Point2>> p(6);
    for (auto& q : p) q = Point2(gen::uniform(rng, 0, 100), gen::uniform(rng, 0, 100));
    GroupSpec a;
    a.source_points = 6;
    a.groups[Landmark::EyeL] = {0, 1, 2, 3, 4, 5};
    GroupSpec b = a;
    std::shuffle(b.groups[Landmark::EyeL].begin(), b.groups[Landmark::EyeL].end(), rng);
    CHECK(average_groups(p, a).at(Landmark::EyeL) == average_groups(p, b).at(Landmark::EyeL));
  }

  pts[2].reset();
  s = average_groups(pts, spec);
  CHECK_FALSE(s.has(Landmark::NoseC));
  CHECK(s.has(Landmark::ChinC));

  GroupSpec bad = spec;
  bad.groups[Landmark::EyeL] = {4};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::IndexOutOfRange);
  CHECK(code_of([&] { average_groups(pts, bad); }) == ErrorCode::IndexOutOfRange);
  CHECK(GroupSpec::parse(spec.dump()).groups == spec.groups);
}

TEST_CASE("194-point CSV ingestion") {
  const GroupSpec helen = GroupSpec::helen194();
  CHECK_NOTHROW(helen.validate());
  CHECK(helen.groups.size() == kLandmarkCount);

  Rng rng(4);
  std::vector<Point2> pts(194);
  std::string csv = "face_id,image_path";
  for (int k = 0; k < 194; ++k) csv += ",x" + std::to_string(k) + ",y" + std::to_string(k);
  csv += "\nh1,img/h1.jpg";
  for (auto& p : pts) {
    p = Point2(gen::uniform_int(rng, 0, 500), gen::uniform_int(rng, 0, 500));
    csv += "," + std::to_string(static_cast<int>(p.x())) + "," + std::to_string(static_cast<int>(p.y()));
  }
  csv += "\n";
  const auto recs = parse_points_csv(csv, helen);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].image_path == "img/h1.jpg");
  for (const auto& [lm, idx] : helen.groups) {
    Point2 sum = Point2::Zero();
    for (int i : idx) sum += pts[static_cast<std::size_t>(i)];
    CHECK((recs[0].landmarks.at(lm) - sum / static_cast<double>(idx.size())).norm() < 1e-12);
  }

  AnnotationFile file;
  file.records = recs;
  const AnnotationFile back = parse_annotations(dump_annotations(file));
  CHECK(back.records[0].landmarks == recs[0].landmarks);

  CHECK(code_of([&] { parse_points_csv("a,b,1,2\n", helen); }) == ErrorCode::IndexOutOfRange);
  GroupSpec tiny;
  tiny.source_points = 2;
  tiny.groups[Landmark::NoseC] = {0, 1};
  CHECK(code_of([&] { parse_points_csv("a,b,1,x,3,4\n", tiny); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { parse_points_csv("a,b,1,2,3\n", tiny); }) == ErrorCode::ParseError);
  CHECK_FALSE(parse_points_csv("a,b,1,2,,\n", tiny)[0].landmarks.has(Landmark::NoseC));
}

TEST_CASE("splits are exact, seeded and disjoint") {
  Rng rng(5);
  const auto recs = records_with_yaw(rng, 100);
  const SplitManifest m = make_splits(recs, 42);
  CHECK(m.train_ids.size() == 80);
  CHECK(m.val_ids.size() == 10);
  CHECK(m.test_ids.size() == 10);
  std::set<std::string> all(m.train_ids.begin(), m.train_ids.end());
  all.insert(m.val_ids.begin(), m.val_ids.end());
  all.insert(m.test_ids.begin(), m.test_ids.end());
  CHECK(all.size() == 100);
  const SplitManifest again = make_splits(recs, 42);
  CHECK(again.train_ids == m.train_ids);
  CHECK(again.test_ids == m.test_ids);
  CHECK(make_splits(recs, 43).train_ids != m.train_ids);

  std::size_t frontal = 0;
  for (const auto& r : recs) frontal += !r.pose || (std::abs(r.pose->yaw) < 15.0 && std::abs(r.pose->pitch) < 15.0);
  const SplitManifest f = make_splits(recs, 42, PoseFilter::frontal());
  CHECK(f.train_ids.size() + f.val_ids.size() + f.test_ids.size() == frontal);
  std::size_t app = 0;
  for (const auto& r : recs) {
    app += !r.pose || (std::abs(r.pose->yaw) < 15.0 && std::abs(r.pose->pitch) < 15.0 && std::abs(r.pose->roll) < 60.0);
  }
  const SplitManifest g = make_splits(recs, 42, PoseFilter::application());
  CHECK(g.train_ids.size() + g.val_ids.size() + g.test_ids.size() == app);

  for (int n = 10; n < 40; ++n) {
    const SplitManifest s = make_splits(std::vector<AnnotationRecord>(recs.begin(), recs.begin() + n), 1);
    CHECK(s.val_ids.size() == s.test_ids.size());
    CHECK(s.train_ids.size() + 2 * s.val_ids.size() == static_cast<std::size_t>(n));
  }
  CHECK(code_of([&] { make_splits(std::vector<AnnotationRecord>(recs.begin(), recs.begin() + 9), 1); }) ==
        ErrorCode::TooFewRecords);

  const fs::path dir = scratch("splits");
  m.save(dir / "m.json");
  const SplitManifest loaded = SplitManifest::load(dir / "m.json");
  CHECK(loaded.val_ids == m.val_ids);
  SplitManifest overlap = m;
  overlap.test_ids.push_back(m.train_ids[0]);
  CHECK(code_of([&] { overlap.validate(); }) == ErrorCode::SplitOverlap);
}

TEST_CASE("synthetic corpus round trips through disk") {
  const fs::path dir = scratch("corpus");
  SynthOptions o;
  o.count = 4;
  o.seed = 3;
  const AnnotationFile file = write_synthetic_corpus(o, dir);
  const AnnotationFile loaded = load_annotations(dir / "annotations.json");
  CHECK(loaded.synthetic);
  const Dataset d = load_dataset(loaded.records, dir);
  const Dataset mem = synthetic_dataset(o);
  REQUIRE(d.size() == 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i].image == mem[i].image);
    CHECK(d[i].landmarks == mem[i].landmarks);
  }
  const Dataset picked = load_dataset(loaded.records, dir, {mem[2].face_id});
  CHECK(picked[0].face_id == mem[2].face_id);
  CHECK(code_of([&] { load_dataset(loaded.records, dir, {"nope"}); }) == ErrorCode::InvalidArgument);
  CHECK(landmarks_by_id(loaded.records).at(mem[1].face_id) == mem[1].landmarks);
}

TEST_CASE("container round trip and corruption") {
  Rng rng(6);
  ModelContainer c;
  c.header["architecture"] = "test";
  Eigen::MatrixXd m(5, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gen::normal(rng) * 1e10;
  m(0, 0) = -0.0;
  m(1, 1) = std::numeric_limits<double>::denorm_min();
  Eigen::VectorXd v(4);
  v << 1, 2, 3, 4;
  c.add_section("m", m);
  c.add_section("v", v);
  c.add_section("empty", Eigen::MatrixXd(0, 7));
  const auto bytes = c.serialize();
  const ModelContainer back = ModelContainer::deserialize(bytes);
  CHECK(back.section("m") == m);
  CHECK(std::signbit(back.section("m")(0, 0)));
  CHECK(back.vector_section("v") == v);
  CHECK(back.section("empty").cols() == 7);
  CHECK(back.header["architecture"] == "test");
  CHECK(code_of([&] { back.section("nope"); }) == ErrorCode::ParseError);

  auto flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  CHECK(code_of([&] { ModelContainer::deserialize(flipped); }) == ErrorCode::ChecksumMismatch);

  std::string text(bytes.begin(), bytes.end());
  const auto at = text.find("\"1.0\"");
  REQUIRE(at != std::string::npos);
  auto future = bytes;
  future[at + 1] = '7';
  CHECK(code_of([&] { ModelContainer::deserialize(future); }) == ErrorCode::VersionMismatch);
  auto minor = bytes;
  minor[at + 3] = '9';
  CHECK_NOTHROW(ModelContainer::deserialize(minor));

  CHECK(code_of([&] { ModelContainer::deserialize({1, 2, 3}); }) == ErrorCode::ParseError);
  for (int trial = 0; trial < 300; ++trial) {
    auto b = bytes;
    if (trial % 3 == 0) {
      b.resize(static_cast<std::size_t>(gen::uniform_int(rng, 0, static_cast<int>(b.size()) - 1)));
    } else {
      b[static_cast<std::size_t>(gen::uniform_int(rng, 0, static_cast<int>(b.size()) - 1))] ^= static_cast<unsigned char>(1 + trial % 255);
    }
    try {
      ModelContainer::deserialize(b);
    } catch (const Error&) {
    }
  }
  CHECK(crc32_of(reinterpret_cast<const unsigned char*>("123456789"), 9) == 0xCBF43926u);
}

TEST_CASE("feature matrices round trip") {
  Rng rng(7);
  Eigen::MatrixXd x(6, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gen::normal(rng);
  const fs::path dir = scratch("features");
  save_feature_matrix(dir / "x.f64", x, {{"landmark", "eyeL"}});
  nlohmann::json side;
  CHECK(load_feature_matrix(dir / "x.f64", &side) == x);
  CHECK(side["landmark"] == "eyeL");
  std::ofstream(dir / "bad.f64") << "garbage";
  CHECK(code_of([&] { load_feature_matrix(dir / "bad.f64"); }) == ErrorCode::ParseError);
}

TEST_CASE("saved models predict bitwise identically") {
  Rng rng(8);
  SynthOptions so;
  so.count = 10;
  so.seed = 8;
  const Dataset faces = synthetic_dataset(so);

  IndividualModel ind;
  ind.features = {Landmark::MouthC, {DescriptorConfig::make_hog(2.0 / 8.0, 2, 8)}, std::nullopt};
  ind.regressor = random_regressor(rng, 32, KernelSpec::rbf());
  ind.train_face_ids = {"a", "b"};

  JointModel joint;
  Eigen::MatrixXd wide(40, 2048);
  for (Eigen::Index i = 0; i < wide.size(); ++i) wide.data()[i] = gen::normal(rng);
  joint.features.push_back({Landmark::EyeL, {DescriptorConfig::make_sift(2.0 / 8.0, 4)}, pca_fit(wide)});
  joint.features.push_back({Landmark::NoseC, {DescriptorConfig::make_lbp(2.0 / 8.0, 1, 2)}, std::nullopt});
  joint.regressor = random_regressor(rng, joint.features[0].dimension() + 10, KernelSpec::linear());

  CascadedModel cas;
  cas.stage1 = {ind};
  IndividualModel second = ind;
  second.features.landmark = Landmark::EyeR;
  cas.stage1.push_back(second);
  cas.stage2 = random_regressor(rng, 2, KernelSpec::poly(3, std::nullopt, 1.0));

  const fs::path dir = scratch("models");
  for (const ConfidenceModel& model : {ConfidenceModel(ind), ConfidenceModel(joint), ConfidenceModel(cas)}) {
    const fs::path path = dir / (architecture_name(model) + ".lfdm");
    save_model(model, path);
    const ConfidenceModel back = load_model(path);
    CHECK(back.index() == model.index());
    for (int i = 0; i < 100; ++i) {
      const FaceSample& f = faces[static_cast<std::size_t>(i % 10)];
      LandmarkSet moved;
      for (Landmark lm : kAllLandmarks) {
        moved.set(lm, f.landmarks.at(lm) + Point2(gen::normal(rng), gen::normal(rng)) * 3.0);
      }
      CHECK(predict_face(back, f.image, moved) == predict_face(model, f.image, moved));
    }
  }
  const JointModel jb = std::get<JointModel>(load_model(dir / "joint.lfdm"));
  CHECK(jb.fingerprint() == joint.fingerprint());
  CHECK(std::get<IndividualModel>(load_model(dir / "individual.lfdm")).train_face_ids == ind.train_face_ids);

  Eigen::MatrixXd queries(100, 2);
  for (Eigen::Index i = 0; i < queries.size(); ++i) queries.data()[i] = gen::uniform(rng, 0, 1);
  const CascadedModel cb = std::get<CascadedModel>(load_model(dir / "cascaded.lfdm"));
  CHECK(cb.stage2.decision(queries) == cas.stage2.decision(queries));
  CHECK(cb.stage2.kernel.to_string() == cas.stage2.kernel.to_string());

  auto bytes = to_container(ind).serialize();
  bytes.back() ^= 1;
  CHECK(code_of([&] { from_container(ModelContainer::deserialize(bytes)); }) == ErrorCode::ChecksumMismatch);
  ModelContainer wrong = to_container(ind);
  wrong.header["architecture"] = "forest";
  CHECK(code_of([&] { from_container(wrong); }) == ErrorCode::ParseError);
}

TEST_CASE("gender models round trip") {
  Rng rng(9);
  GenderModel g;
  g.spec = GenderFeatureSpec::defaults();
  Eigen::MatrixXd raw(12, g.spec.raw_dimension());
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = gen::normal(rng);
  g.pca = pca_fit(raw);
  Eigen::MatrixXd z = g.pca->project_rows(raw);
  Eigen::VectorXd y(12);
  for (Eigen::Index i = 0; i < 12; ++i) y(i) = i % 2 ? 1.0 : -1.0;
  g.classifier = svc_fit(z, y, 0.5, KernelSpec::rbf());
  const fs::path dir = scratch("gender");
  save_gender_model(g, dir / "g.lfdm");
  const GenderModel back = load_gender_model(dir / "g.lfdm");
  CHECK(back.fingerprint() == g.fingerprint());
  CHECK(back.classifier.decision(z) == g.classifier.decision(z));
}

TEST_CASE("run config parsing") {
  RunConfig c = RunConfig::parse(R"(# comment
seed = 7
[perturb]
sigma = 0.1
mode = "individual"
[grid]
C = [0.3, 0.5]
enabled = true
)");
  CHECK(c.get_int("seed", 0) == 7);
  CHECK(c.get_double("perturb.sigma", 0) == 0.1);
  CHECK(c.get_string("perturb.mode", "") == "individual");
  CHECK(c.get_doubles("grid.C", {}) == std::vector<double>{0.3, 0.5});
  CHECK(c.get_bool("grid.enabled", false));
  CHECK(c.get_double("metrics.gt_threshold", 0.65) == 0.65);
  CHECK(c.has("metrics.gt_threshold"));

  c.apply_override("perturb.sigma=0.2");
  c.apply_override("name=run one");
  CHECK(c.get_double("perturb.sigma", 0) == 0.2);
  CHECK(c.get_string("name", "") == "run one");

  const RunConfig back = RunConfig::parse(c.dump());
  CHECK(back.entries() == c.entries());

  try {
    RunConfig::parse("a = 1\nthis is not valid\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(code_of([&] { c.get_int("perturb.mode", 0); }) == ErrorCode::ParseError);
  CHECK(code_of([] { RunConfig::load("/nonexistent/run.toml"); }) == ErrorCode::IoError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("synthetic faces carry distinct landmarks at face scale") {
  SynthOptions o;
  o.count = 20;
  o.seed = 12;
  for (std::size_t i = 0; i < 20; ++i) {
    const SynthFace f = render_synthetic_face(o, i);
    for (std::size_t a = 0; a < kLandmarkCount; ++a) {
      for (std::size_t b = a + 1; b < kLandmarkCount; ++b) {
        CHECK((f.landmarks.at(kAllLandmarks[a]) - f.landmarks.at(kAllLandmarks[b])).norm() > 0.05 * f.face_size);
      }
    }
    CHECK(face_size_from_eyes(f.landmarks) == doctest::Approx(f.face_size).epsilon(0.1));
    CHECK(f.face_size > 0.2 * o.image_size);
    CHECK(f.face_size < o.image_size);
    CHECK(f.landmarks.at(Landmark::ChinC).y() > f.landmarks.at(Landmark::NoseC).y() - 0.2 * f.face_size);
  }
}
