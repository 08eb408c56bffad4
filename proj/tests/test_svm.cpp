#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Eigenvalues>

#include "generators.hpp"
#include "lfd/error.hpp"
#include "lfd/metrics.hpp"
#include "lfd/svm.hpp"
#include "oracles.hpp"

using namespace lfd;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gen::normal(rng);
  return m;
}

Eigen::VectorXd smooth_target(Rng& rng, const Eigen::MatrixXd& x) {
  Eigen::VectorXd w(x.cols());
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = gen::normal(rng);
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::sin(x.row(i).dot(w)) + 0.1 * gen::normal(rng);
  return y;
}

Eigen::VectorXd labels_of(Rng& rng, const Eigen::MatrixXd& x) {
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = x(i, 0) + 0.5 * gen::normal(rng) > 0 ? 1.0 : -1.0;
  if ((y.array() > 0).all()) y(0) = -1.0;
  if ((y.array() < 0).all()) y(0) = 1.0;
  return y;
}

}  // namespace

TEST_CASE("kernel spec text round trip") {
  for (const KernelSpec& k : {KernelSpec::linear(), KernelSpec::rbf(), KernelSpec::rbf(0.25), KernelSpec::poly(3, 0.5, 1.0),
                              KernelSpec::sigmoid(std::nullopt, -0.5)}) {
    CHECK(KernelSpec::parse(k.to_string()) == k);
  }
  CHECK_THROWS_AS(KernelSpec::parse("cosine"), Error);
  CHECK_THROWS_AS(KernelSpec::parse("rbf:gamma=-1"), Error);
}

TEST_CASE("Gram matrices") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd x = random_matrix(rng, gen::uniform_int(rng, 2, 50), gen::uniform_int(rng, 1, 6));
    for (const KernelSpec& k : {KernelSpec::linear(), KernelSpec::rbf(0.3), KernelSpec::poly(3, 0.2, 1.0),
                                KernelSpec::sigmoid(0.1, 0.0)}) {
      const Eigen::MatrixXd g = gram_matrix(x, k);
      CHECK(g == g.transpose());
      const Eigen::MatrixXd full = gram_matrix(x, x, k);
      CHECK((g - full).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, full.cwiseAbs().maxCoeff()));
      CHECK(g(0, 1) == doctest::Approx(k(x.row(0), x.row(1))));
      if (k.type == KernelType::RBF) CHECK((g.diagonal().array() == 1.0).all());
      if (k.type != KernelType::Sigmoid) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, eig.eigenvalues().maxCoeff()));
      }
    }
  }
}

TEST_CASE("standardizer") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = Standardizer::fit(x);
  CHECK(s.mean(0) == 2.5);
  CHECK(s.scale(0) == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.scale(1) == 1.0);
  CHECK(s.apply(x).col(1).isZero(0.0));
}

TEST_CASE("SVR on a constant target is flat") {
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(rng, 12, 3);
  const KernelModel m = svr_fit(x, Eigen::VectorXd::Constant(12, 0.7), 1.0, 0.1, KernelSpec::rbf());
  CHECK(m.support_vectors.rows() == 0);
  CHECK(m.bias == doctest::Approx(0.7));
  const Eigen::VectorXd f = m.predict(random_matrix(rng, 5, 3));
  for (Eigen::Index i = 0; i < f.size(); ++i) CHECK(f(i) == doctest::Approx(0.7));
}

TEST_CASE("SVR fits a realizable linear function") {
  Eigen::MatrixXd x(20, 1);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = -1.0 + 0.1 * i;
    y(i) = 2.0 * x(i, 0);
  }
  const KernelModel m = svr_fit(x, y, 100.0, 0.01, KernelSpec::linear());
  CHECK(m.meta.kkt_residual <= 1e-3);
  CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() <= 0.01 + 1e-3);
}

TEST_CASE("SVR and SVC agree with the projected-gradient oracle") {
  Rng rng(3);
  const std::vector<KernelSpec> kernels = {KernelSpec::rbf(), KernelSpec::linear(), KernelSpec::poly(2, std::nullopt, 1.0)};
  for (int trial = 0; trial < 12; ++trial) {
    const KernelSpec& k = kernels[static_cast<std::size_t>(trial) % kernels.size()];
    const Eigen::MatrixXd x = random_matrix(rng, 15, 3);
    const Eigen::MatrixXd q = random_matrix(rng, 8, 3);
    const double C = gen::uniform(rng, 0.5, 5.0);
    if (trial % 2 == 0) {
      const Eigen::VectorXd y = smooth_target(rng, x);
      const double eps = gen::uniform(rng, 0.01, 0.2);
      const KernelModel m = svr_fit(x, y, C, eps, k);
      const oracle::SvmReference ref = oracle::svr_reference(x, y, C, eps, k, q);
      CHECK(m.meta.kkt_residual <= 1e-3);
      CHECK(std::abs(m.meta.dual_objective - ref.objective) <= 1e-4);
      CHECK((m.decision(q) - ref.predictions).cwiseAbs().maxCoeff() <= 1e-3);
      CHECK(m.dual_coefs.cwiseAbs().maxCoeff() <= C + 1e-12);
    } else {
      const Eigen::VectorXd y = labels_of(rng, x);
      const KernelModel m = svc_fit(x, y, C, k);
      const oracle::SvmReference ref = oracle::svc_reference(x, y, C, k, q);
      CHECK(m.meta.kkt_residual <= 1e-3);
      CHECK(std::abs(m.meta.dual_objective - ref.objective) <= 1e-4);
      CHECK((m.decision(q) - ref.predictions).cwiseAbs().maxCoeff() <= 1e-3);
    }
  }
}

TEST_CASE("SVC separable cases") {
  Rng rng(4);
  Eigen::MatrixXd x(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    const double side = i < 10 ? -3.0 : 3.0;
    x.row(i) << side + gen::normal(rng, 0, 0.5), gen::normal(rng);
    y(i) = i < 10 ? -1.0 : 1.0;
  }
  CHECK(svc_fit(x, y, 1.0, KernelSpec::linear()).predict(x) == y);

  Eigen::MatrixXd xor_x(4, 2);
  xor_x << 0, 0, 1, 1, 0, 1, 1, 0;
  const Eigen::Vector4d xor_y(1, 1, -1, -1);
  const KernelModel m = svc_fit(xor_x, xor_y, 10.0, KernelSpec::rbf(1.0));
  CHECK(Eigen::VectorXd(m.predict(xor_x)) == Eigen::VectorXd(xor_y));

  CHECK_THROWS_AS(svc_fit(x, Eigen::VectorXd::Ones(20), 1.0, KernelSpec::linear()), Error);
  Eigen::MatrixXd bad = x;
  bad(3, 1) = std::nan("");
  try {
    svc_fit(bad, y, 1.0, KernelSpec::linear());
    FAIL("expected NonFiniteInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteInput);
  }
}

TEST_CASE("SVR is invariant to row order") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd x = random_matrix(rng, 18, 2);
    const Eigen::VectorXd y = smooth_target(rng, x);
    std::vector<Eigen::Index> perm(18);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd xp(18, 2);
    Eigen::VectorXd yp(18);
    for (int i = 0; i < 18; ++i) {
      xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
      yp(i) = y(perm[static_cast<std::size_t>(i)]);
    }
    const Eigen::MatrixXd q = random_matrix(rng, 10, 2);
    const KernelModel a = svr_fit(x, y, 1.0, 0.05, KernelSpec::rbf());
    const KernelModel b = svr_fit(xp, yp, 1.0, 0.05, KernelSpec::rbf());
    CHECK(a.predict(q) == b.predict(q));
  }
}

TEST_CASE("SVR scales with the target") {
  Rng rng(6);
  SolverOptions tight;
  tight.tolerance = 1e-10;
  tight.max_iterations = 200000;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd x = random_matrix(rng, 16, 3);
    const Eigen::VectorXd y = smooth_target(rng, x);
    const double a = gen::uniform(rng, 0.5, 4.0);
    const Eigen::MatrixXd q = random_matrix(rng, 10, 3);
    const KernelModel m = svr_fit(x, y, 0.8, 0.05, KernelSpec::rbf(), tight);
    const KernelModel s = svr_fit(x, a * y, a * 0.8, a * 0.05, KernelSpec::rbf(), tight);
    CHECK((s.predict(q) - a * m.predict(q)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("solver budget raises NoConvergence with the best iterate") {
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(rng, 15, 3);
  const Eigen::VectorXd y = smooth_target(rng, x);
  SolverOptions opts;
  opts.max_iterations = 1;
  try {
    svr_fit(x, y, 1.0, 0.01, KernelSpec::rbf(), opts);
    FAIL("expected NoConvergenceError");
  } catch (const NoConvergenceError& e) {
    CHECK(e.code() == ErrorCode::NoConvergence);
    CHECK_FALSE(e.best_iterate().meta.converged);
    CHECK(e.best_iterate().meta.iterations == 1);
  }
}

TEST_CASE("dual problem helpers") {
  Rng rng(8);
  const Eigen::MatrixXd x = random_matrix(rng, 10, 2);
  const Eigen::MatrixXd k = gram_matrix(x, KernelSpec::rbf(0.5));
  const Eigen::VectorXd y = smooth_target(rng, x);
  const DualProblem p = make_svr_problem(k, y, 1.0, 0.1);
  CHECK(p.size() == 20);
  CHECK(p.q(3, 13) == doctest::Approx(-k(3, 3)));
  const DualSolution s = solve_dual(p);
  CHECK(s.converged);
  CHECK(std::abs(p.y.dot(s.alpha)) < 1e-9);
  CHECK(s.alpha.minCoeff() >= 0.0);
  CHECK(s.alpha.maxCoeff() <= 1.0);
  CHECK(kkt_violation(p, s.alpha) == doctest::Approx(s.kkt_gap).epsilon(1e-6));
  CHECK(kkt_violation(p, s.alpha) <= 1e-3);
}

TEST_CASE("fold assignment keeps groups together") {
  Rng rng(9);
  std::vector<std::int64_t> groups;
  for (int g = 0; g < 37; ++g)
    for (int r = 0; r < gen::uniform_int(rng, 1, 6); ++r) groups.push_back(g * 7 + 3);
  const auto folds = assign_folds(groups, 5, 11);
  CHECK(folds == assign_folds(groups, 5, 11));
  std::set<int> used(folds.begin(), folds.end());
  CHECK(used.size() == 5);
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = 0; j < groups.size(); ++j)
      if (groups[i] == groups[j]) CHECK(folds[i] == folds[j]);
}

TEST_CASE("grid search") {
  Rng rng(10);
  Eigen::MatrixXd x = random_matrix(rng, 60, 3);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) y(i) = 0.5 * x(i, 0) - 0.3 * x(i, 1) + 0.2 * x(i, 2) + 0.05 * gen::normal(rng);

  SUBCASE("default confidence grid has 18 cells") {
    const GridSearchResult r = grid_search_cv(x, y, {}, SearchGrid::confidence_svr(), Task::Regression, 3);
    CHECK(r.table.size() == 18);
    CHECK(SearchGrid::gender_svc().C_values.size() * SearchGrid::gender_svc().kernels.size() == 16);
    double best = -1e300;
    for (const auto& c : r.table) best = std::max(best, c.score);
    CHECK(r.best.score == best);
    // First maximum in enumeration order.
    const auto first = std::find_if(r.table.begin(), r.table.end(), [&](const GridCell& c) { return c.score == best; });
    CHECK(first->C == r.best.C);
    CHECK(first->epsilon == r.best.epsilon);
    CHECK(first->kernel == r.best.kernel);
    for (std::size_t i = 1; i < r.table.size(); ++i) CHECK(r.table[i - 1].C <= r.table[i].C);

    const GridCell again = evaluate_cell(x, y, r.fold_of, 5, r.best.C, r.best.epsilon, r.best.kernel, Task::Regression);
    CHECK(again.score == r.best.score);

    const KernelModel m = refit_best(x, y, r, Task::Regression);
    CHECK(m.meta.cv_score == r.best.score);

    // Linear data: the linear kernel is not beaten by much.
    double lin = -1e300, rbf = -1e300;
    for (const auto& c : r.table) {
      double& slot = c.kernel.type == KernelType::Linear ? lin : rbf;
      slot = std::max(slot, c.score);
    }
    CHECK(lin >= rbf - 0.05);
  }
  SUBCASE("single cell equals direct k-fold evaluation") {
    SearchGrid g{{0.5}, {0.05}, {KernelSpec::linear()}, 4};
    const GridSearchResult r = grid_search_cv(x, y, {}, g, Task::Regression, 9);
    REQUIRE(r.table.size() == 1);
    double total = 0.0;
    for (int f = 0; f < 4; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (int i = 0; i < 60; ++i) (r.fold_of[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
      Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), 3), xte(static_cast<Eigen::Index>(te.size()), 3);
      Eigen::VectorXd ytr(xtr.rows()), yte(xte.rows());
      for (std::size_t i = 0; i < tr.size(); ++i) {
        xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
        ytr(static_cast<Eigen::Index>(i)) = y(tr[i]);
      }
      for (std::size_t i = 0; i < te.size(); ++i) {
        xte.row(static_cast<Eigen::Index>(i)) = x.row(te[i]);
        yte(static_cast<Eigen::Index>(i)) = y(te[i]);
      }
      total += r2(yte, svr_fit(xtr, ytr, 0.5, 0.05, KernelSpec::linear()).predict(xte));
    }
    CHECK(r.best.score == doctest::Approx(total / 4).epsilon(1e-12));
  }
  SUBCASE("thread count does not change the table") {
    const GridSearchResult a = grid_search_cv(x, y, {}, SearchGrid::confidence_svr(), Task::Regression, 3, {}, 1);
    const GridSearchResult b = grid_search_cv(x, y, {}, SearchGrid::confidence_svr(), Task::Regression, 3, {}, 4);
    for (std::size_t i = 0; i < a.table.size(); ++i) CHECK(a.table[i].fold_scores == b.table[i].fold_scores);
  }
  SUBCASE("classification accuracy") {
    const Eigen::VectorXd labels = labels_of(rng, x);
    const GridSearchResult r = grid_search_cv(x, labels, {}, SearchGrid::gender_svc(), Task::Classification, 5);
    CHECK(r.table.size() == 16);
    for (const auto& c : r.table) {
      CHECK(c.score >= 0.0);
      CHECK(c.score <= 1.0);
    }
    CHECK(r.best.score > 0.6);
  }
}
