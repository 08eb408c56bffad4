#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "generators.hpp"
#include "lfd/error.hpp"
#include "lfd/pipeline.hpp"
#include "lfd/random.hpp"
#include "lfd/synth.hpp"

using namespace lfd;

namespace {

Dataset faces(int count, std::uint64_t seed, bool gender_cue) {
  SynthOptions o;
  o.count = count;
  o.seed = seed;
  o.gender_cue = gender_cue;
  Dataset d = synthetic_dataset(o);
  if (!gender_cue) {
    for (auto& s : d) s.gender.reset();
  }
  return d;
}

IndividualModel constant_model(double c) {
  IndividualModel m;
  m.features = {Landmark::NoseC, {DescriptorConfig::make_hog(2.0 / 8.0, 2, 8)}, std::nullopt};
  const int d = m.features.dimension();
  m.regressor.standardizer.mean = Eigen::VectorXd::Zero(d);
  m.regressor.standardizer.scale = Eigen::VectorXd::Ones(d);
  m.regressor.support_vectors.resize(0, d);
  m.regressor.bias = c;
  return m;
}

}  // namespace

TEST_CASE("cost model arithmetic") {
  const double t = expected_time(kFastTotalSeconds, kRobustTotalSeconds, 0.154);
  CHECK(t == doctest::Approx(6.0462).epsilon(1e-12));
  CHECK(std::abs(t - 6.05) <= 0.01);
  CHECK(std::abs(speedup(kRobustTotalSeconds, t) - 3.36) <= 0.01);
  CHECK(expected_time(2.0, 10.0, 0.0) == 2.0);
  CHECK(expected_time(2.0, 10.0, 1.0) == 12.0);
  CHECK_THROWS_AS(expected_time(0.0, 10.0, 0.5), Error);
  CHECK_THROWS_AS(expected_time(2.0, 10.0, 1.5), Error);
  CHECK_THROWS_AS(speedup(10.0, 0.0), Error);
  CHECK(kFastRotationSweepSeconds < kFastTotalSeconds);

  const auto curve = cost_curve(kFastTotalSeconds, kRobustTotalSeconds, linspace(0.0, 1.0, 10));
  REQUIRE(curve.size() == 11);
  CHECK(curve.front().time_s == kFastTotalSeconds);
  CHECK(curve.back().time_s == kFastTotalSeconds + kRobustTotalSeconds);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].time_s > curve[i - 1].time_s);
}

TEST_CASE("method profiles validate") {
  MethodProfile p = MethodProfile::synthetic_fast(1);
  CHECK_NOTHROW(p.validate());
  CHECK(p.time_per_image == kFastTotalSeconds);
  CHECK(MethodProfile::synthetic_robust(1).time_per_image == kRobustTotalSeconds);
  p.time_per_image = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  MethodProfile q{"fast", 1.0, nullptr};
  CHECK_THROWS_AS(q.validate(), Error);
}

TEST_CASE("synthetic providers are deterministic with the configured error level") {
  const Dataset d = faces(40, 3, false);
  const auto fast = MethodProfile::synthetic_fast(9);
  const auto robust = MethodProfile::synthetic_robust(9);
  double fast_err = 0.0, robust_err = 0.0, size = 0.0;
  for (const auto& s : d) {
    const auto a = fast.provider->landmarks(s);
    const auto b = fast.provider->landmarks(s);
    REQUIRE(a);
    CHECK(*a == *b);
    fast_err += mae(*a, s.landmarks);
    robust_err += mae(*robust.provider->landmarks(s), s.landmarks);
    size += face_size_from_eyes(s.landmarks);
  }
  // Mean radial error of |N(0, s)| is s * sqrt(2 / pi).
  const double k = std::sqrt(2.0 / M_PI);
  CHECK(fast_err / size == doctest::Approx(0.12 * k).epsilon(0.15));
  CHECK(robust_err / size == doctest::Approx(0.06 * k).epsilon(0.15));
}

TEST_CASE("trade-off endpoints and accounting") {
  const Dataset d = faces(30, 4, false);
  const auto fast = MethodProfile::synthetic_fast(2);
  const auto robust = MethodProfile::synthetic_robust(2);
  const ConfidenceModel m = constant_model(0.5);
  const TradeoffReport r = run_tradeoff(d, m, fast, robust, {0.0, 0.5, 0.6, 1.0});
  REQUIRE(r.curve.size() == 4);
  CHECK(r.curve[0].recompute_fraction == 0.0);
  CHECK(r.curve[0].time_s == kFastTotalSeconds);
  CHECK(r.curve[0].mae_px == doctest::Approx(r.fast_mae).epsilon(1e-12));
  CHECK(r.curve[1].recompute_fraction == 0.0);
  CHECK(r.curve[2].recompute_fraction == 1.0);
  CHECK(r.curve[3].recompute_fraction == 1.0);
  CHECK(r.curve[3].time_s == kFastTotalSeconds + kRobustTotalSeconds);
  CHECK(r.curve[3].mae_px == doctest::Approx(r.robust_mae).epsilon(1e-12));
  CHECK(r.robust_mae < r.fast_mae);
  CHECK_FALSE(r.curve[0].accuracy);
  CHECK(r.face_ids.size() == d.size());
  for (double c : r.fast_confidence) CHECK(c == 0.5);
}

TEST_CASE("recompute fraction is monotone and the time identity is exact") {
  const Dataset d = faces(30, 5, false);
  const Dataset train = faces(40, 6, false);
  TrainingOptions o;
  o.grid.C_values = {0.5};
  o.grid.epsilon_values = {0.05};
  o.grid.kernels = {KernelSpec::rbf()};
  o.grid.folds = 3;
  o.min_faces = 20;
  const ConfidenceModel m = train_individual(train, Landmark::EyeL, {DescriptorConfig::make_hog(2.0 / 8.0, 2, 8)},
                                             PerturbSpec::individual(1), o);
  const auto fast = MethodProfile::synthetic_fast(3);
  const auto robust = MethodProfile::synthetic_robust(3);
  const auto grid = linspace(0.0, 1.0, 20);
  const TradeoffReport r = run_tradeoff(d, m, fast, robust, grid);
  const TradeoffReport again = run_tradeoff(d, m, fast, robust, grid, nullptr, 4);
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    const auto& p = r.curve[i];
    CHECK(p.time_s == kFastTotalSeconds + p.recompute_fraction * kRobustTotalSeconds);
    std::size_t below = 0;
    for (double c : r.fast_confidence) below += (grid[i] >= 1.0 || c < grid[i]);
    CHECK(p.recompute_fraction == static_cast<double>(below) / static_cast<double>(d.size()));
    if (i > 0) CHECK(p.recompute_fraction >= r.curve[i - 1].recompute_fraction);
    CHECK(p.mae_px == again.curve[i].mae_px);
  }
  CHECK(r.fast_confidence == again.fast_confidence);
}

TEST_CASE("missing detections are typed errors") {
  const Dataset d = faces(4, 7, false);
  std::map<std::string, LandmarkSet> table;
  for (std::size_t i = 0; i < 3; ++i) table[d[i].face_id] = d[i].landmarks;
  const MethodProfile fast{"fast", kFastTotalSeconds, std::make_shared<DetectionTable>(table)};
  const auto robust = MethodProfile::synthetic_robust(1);
  CHECK(fast.provider->landmarks(d[1]) == d[1].landmarks);
  CHECK_FALSE(fast.provider->landmarks(d[3]));
  try {
    run_tradeoff(d, constant_model(0.5), fast, robust, {0.5});
    FAIL("expected MissingVariant");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingVariant);
  }
  CHECK_THROWS_AS(run_tradeoff({}, constant_model(0.5), robust, robust, {0.5}), Error);
}

TEST_CASE("operating threshold equals the TrueCorrect95 tuning") {
  Rng rng(12);
  const auto s = gen::mixed_gaussians(rng, 300);
  const EvaluationReport report = true_correct95(s.pred, s.gt, {}, kTuneFraction, 4);
  CHECK(select_operating_threshold(report) == report.tuned_pred_threshold);

  std::vector<double> gt, pred;
  for (int i = 0; i < 200; ++i) {
    gt.push_back(i % 2 ? 0.9 : 0.3);
    pred.push_back(gt.back());
  }
  const double t = select_operating_threshold(true_correct95(pred, gt, {}));
  CHECK(t > 0.3);
  CHECK(t < 0.9);
  const std::vector<double> flat(gt.size(), 0.7);
  const EvaluationReport constant = true_correct95(flat, gt, {});
  CHECK(select_operating_threshold(constant) <= 0.7);
  CHECK(constant.true_correct95 == 0.0);
}

TEST_CASE("gender features zero absent landmarks") {
  const Dataset d = faces(2, 8, true);
  const GenderFeatureSpec spec = GenderFeatureSpec::defaults();
  CHECK(spec.raw_dimension() == 7 * (2048 + 160) + 8192);
  LandmarkSet partial = d[0].landmarks;
  partial.clear(Landmark::MouthR);
  const auto full = gender_features(spec, d[0].image, d[0].landmarks);
  const auto part = gender_features(spec, d[0].image, partial);
  REQUIRE(full);
  REQUIRE(part);
  const Eigen::Index block = 2048 + 160;
  CHECK(part->segment(5 * block, block).isZero());
  CHECK(part->head(5 * block) == full->head(5 * block));
  LandmarkSet no_eyes = d[0].landmarks;
  no_eyes.clear(Landmark::EyeL);
  CHECK_FALSE(gender_features(spec, d[0].image, no_eyes));
}

TEST_CASE("gender head learns a planted cue and not shuffled labels") {
  const Dataset all = faces(120, 21, true);
  const Dataset train(all.begin(), all.begin() + 90);
  const Dataset held(all.begin() + 90, all.end());
  const GenderModel model = train_gender(train, SearchGrid::gender_svc(), 3);
  CHECK(model.cv_table.size() == 16);
  CHECK(model.pca);
  int hits = 0;
  for (const auto& s : held) {
    const auto g = predict_gender(model, s.image, s.landmarks);
    REQUIRE(g);
    hits += *g == *s.gender;
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(held.size()) >= 0.9);

  Dataset shuffled = train;
  Rng rng(5);
  std::vector<int> labels;
  for (const auto& s : shuffled) labels.push_back(*s.gender);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].gender = labels[i];
  const GenderModel noise = train_gender(shuffled, SearchGrid::gender_svc(), 3);
  const double cv = std::max_element(noise.cv_table.begin(), noise.cv_table.end(), [](const auto& a, const auto& b) {
                      return a.score < b.score;
                    })->score;
  CHECK(cv >= 0.35);
  CHECK(cv <= 0.65);

  Dataset one_class = train;
  for (auto& s : one_class) s.gender = 1;
  CHECK_THROWS_AS(train_gender(one_class), Error);

  const auto fast = MethodProfile::synthetic_fast(4);
  const auto robust = MethodProfile::synthetic_robust(4);
  const TradeoffReport r = run_tradeoff(held, constant_model(0.5), fast, robust, {0.0, 1.0}, &model);
  REQUIRE(r.fast_accuracy);
  CHECK(*r.curve[0].accuracy == *r.fast_accuracy);
  CHECK(*r.curve[1].accuracy == *r.robust_accuracy);
}
