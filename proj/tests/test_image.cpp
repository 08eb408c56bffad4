#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "generators.hpp"
#include "lfd/error.hpp"
#include "lfd/image.hpp"

using namespace lfd;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an lfd::Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("GrayImage validates its pixels") {
  PixelMatrix px = PixelMatrix::Constant(3, 4, 10.0);
  px(1, 2) = 256.0;
  CHECK(code_of([&] { GrayImage img(px); }) == ErrorCode::InvalidImage);
  px(1, 2) = std::nan("");
  CHECK(code_of([&] { GrayImage img(px); }) == ErrorCode::InvalidImage);

  GrayImage img(4, 3, 7.0);
  CHECK(img.width() == 4);
  CHECK(img.height() == 3);
  CHECK(img.pixels().size() == 12);
  img.set(0, 0, 400.0);
  img.set(1, 0, -3.0);
  CHECK(img(0, 0) == 255.0);
  CHECK(img(1, 0) == 0.0);
}

TEST_CASE("bilinear sampling") {
  PixelMatrix px(2, 2);
  px << 0, 100, 200, 40;
  const GrayImage img(px);
  CHECK(img.sample(0, 0) == 0.0);
  CHECK(img.sample(1, 1) == 40.0);
  CHECK(img.sample(0.5, 0.0) == doctest::Approx(50.0));
  CHECK(img.sample(0.5, 0.5) == doctest::Approx(85.0));
  CHECK(img.sample(-0.5, 0.0, 9.0) == 9.0);
  CHECK(img.sample(1.5, 0.0, 9.0) == 9.0);
}

TEST_CASE("similarity transform composes with its inverse to identity") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    SimilarityTransform t{gen::uniform(rng, -4, 4), gen::uniform(rng, 0.1, 5), gen::uniform(rng, -100, 100),
                          gen::uniform(rng, -100, 100)};
    const SimilarityTransform id = t.compose(t.inverse());
    const Point2 p(gen::uniform(rng, -300, 300), gen::uniform(rng, -300, 300));
    const Point2 q = id.apply(p);
    CHECK(std::abs(q.x() - p.x()) < 1e-9);
    CHECK(std::abs(q.y() - p.y()) < 1e-9);
    const Point2 r = t.inverse().apply(t.apply(p));
    CHECK((r - p).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("normalize_face maps the eyes onto the canonical positions") {
  CHECK(kCanonicalEyeLeft.x() == doctest::Approx(86.4));
  CHECK(kCanonicalEyeLeft.y() == doctest::Approx(99.2));
  CHECK(kCanonicalEyeRight.x() == doctest::Approx(137.6));
  CHECK(kCanonicalEyeRight.y() == doctest::Approx(99.2));

  Rng rng(5);
  const GrayImage img(320, 240, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Point2 a(gen::uniform(rng, 0, 319.9), gen::uniform(rng, 0, 239.9));
    Point2 b(gen::uniform(rng, 0, 319.9), gen::uniform(rng, 0, 239.9));
    if ((b - a).norm() < 2.0) continue;
    const SimilarityTransform t =
        SimilarityTransform::from_point_pairs(a, b, kCanonicalEyeLeft, kCanonicalEyeRight);
    CHECK((t.apply(a) - kCanonicalEyeLeft).norm() < 0.5);
    CHECK((t.apply(b) - kCanonicalEyeRight).norm() < 0.5);
    CHECK(t.scale > 0.0);
  }
  // Spot-check the full canvas path on a few pairs.
  for (int trial = 0; trial < 5; ++trial) {
    const Point2 a(gen::uniform(rng, 60, 120), gen::uniform(rng, 80, 160));
    const Point2 b = a + Point2(gen::uniform(rng, 30, 90), gen::uniform(rng, -20, 20));
    const FacePatch f = normalize_face(img, a, b);
    CHECK(f.canvas.width() == 224);
    CHECK(f.canvas.height() == 224);
    CHECK((f.to_canvas(a) - kCanonicalEyeLeft).norm() < 0.5);
    CHECK((f.to_canvas(b) - kCanonicalEyeRight).norm() < 0.5);
  }
}

TEST_CASE("normalize_face at canonical eyes is the identity") {
  Rng rng(3);
  const GrayImage src = gen::random_image(rng, 224, 224, 0, 255, true);
  const FacePatch f = normalize_face(src, kCanonicalEyeLeft, kCanonicalEyeRight);
  CHECK(f.transform.scale == doctest::Approx(1.0));
  CHECK(std::abs(f.transform.angle) < 1e-12);
  CHECK(std::abs(f.transform.tx) < 1e-9);
  CHECK(std::abs(f.transform.ty) < 1e-9);
  CHECK((f.canvas.pixels() - src.pixels()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("normalize_face with swapped eyes rotates by pi") {
  const GrayImage src(224, 224, 50.0);
  const FacePatch f = normalize_face(src, kCanonicalEyeRight, kCanonicalEyeLeft);
  CHECK(std::abs(std::abs(f.transform.angle) - std::numbers::pi) < 1e-9);
  const Point2 above(112.0, 80.0);  // above the eye line in the source
  CHECK(f.to_canvas(above).y() > kCanonicalEyeLeft.y());
}

TEST_CASE("normalize_face scale against an analytic two-point solve") {
  const GrayImage src(400, 300, 80.0);
  const Point2 a(100.0, 150.0), b(202.4, 150.0);
  const FacePatch f = normalize_face(src, a, b);
  CHECK(f.transform.scale == doctest::Approx(0.5).epsilon(1e-12));
  // Reference: horizontal eyes need no rotation; translation is c0 - s * a.
  const Point2 t = kCanonicalEyeLeft - 0.5 * a;
  CHECK(f.transform.tx == doctest::Approx(t.x()));
  CHECK(f.transform.ty == doctest::Approx(t.y()));
  CHECK((f.to_canvas(b) - kCanonicalEyeRight).norm() < 1e-9);
}

TEST_CASE("normalize_face errors") {
  const GrayImage src(100, 100, 0.0);
  CHECK(code_of([&] { normalize_face(src, Point2(10, 10), Point2(11, 10.5)); }) == ErrorCode::CoincidentEyes);
  CHECK(code_of([&] { normalize_face(src, Point2(-1, 10), Point2(40, 10)); }) == ErrorCode::OutOfBounds);
  CHECK(code_of([&] { normalize_face(src, Point2(10, 10), Point2(100, 10)); }) == ErrorCode::OutOfBounds);
}

TEST_CASE("distort") {
  Rng rng(8);
  const GrayImage img = gen::random_image(rng, 40, 30);
  SUBCASE("zero parameters are the identity") {
    for (int trial = 0; trial < 5; ++trial) {
      const GrayImage any = gen::random_image(rng, 17 + trial, 9 + trial);
      CHECK(distort(any, {0.0, 0.0, 0.0, 0.0, 123}) == any);
    }
  }
  SUBCASE("constant shift") {
    const GrayImage out = distort(img, {0.0, 0.0, 10.0, 0.0, 1});
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) CHECK(out(x, y) == std::min(img(x, y) + 10.0, 255.0));
  }
  SUBCASE("seeded determinism") {
    const DistortionParams p{0.05, 10.0, 10.0, 5.0, 42};
    CHECK(distort(img, p) == distort(img, p));
    DistortionParams q = p;
    q.seed = 43;
    CHECK_FALSE(distort(img, p) == distort(img, q));
    const GrayImage out = distort(img, p);
    CHECK(out.pixels().minCoeff() >= 0.0);
    CHECK(out.pixels().maxCoeff() <= 255.0);
  }
  SUBCASE("negative std is rejected") {
    CHECK(code_of([&] { distort(img, {-0.1, 0.0, 0.0, 0.0, 0}); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("extract_patch") {
  Rng rng(2);
  const GrayImage canvas = gen::random_image(rng, 224, 224);
  const FacePatch f{canvas, {}};
  const GrayImage big = extract_patch(f, Point2(112, 112), 4.0 / 8.0);
  CHECK(big.width() == 64);
  CHECK(big.height() == 64);
  CHECK(big(0, 0) == canvas(80, 80));
  CHECK(big(63, 63) == canvas(143, 143));

  const GrayImage small = extract_patch(f, Point2(48, 48), 1.0 / 8.0);
  CHECK(small.width() == 16);
  CHECK(code_of([&] { extract_patch(f, Point2(20, 20), 4.0 / 8.0); }) == ErrorCode::PatchOutOfCanvas);

  // Patch dimensions depend on size alone.
  for (int e = 1; e <= 4; ++e) {
    const double size = e / 8.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Point2 c(gen::uniform(rng, 48, 175.99), gen::uniform(rng, 48, 175.99));
      const GrayImage p = extract_patch(f, c, size);
      CHECK(p.width() == 16 * e);
      CHECK(p.height() == 16 * e);
    }
  }
}

TEST_CASE("PGM round trip") {
  Rng rng(4);
  const GrayImage img = gen::random_image(rng, 13, 7, 0, 255, true);
  const auto path = std::filesystem::temp_directory_path() / "lfd_test_roundtrip.pgm";
  save_pgm(img, path);
  CHECK(load_image(path) == img);
  std::filesystem::remove(path);
  CHECK(code_of([&] { load_image(path); }) == ErrorCode::IoError);
}
