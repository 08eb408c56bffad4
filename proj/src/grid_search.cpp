#include <algorithm>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "lfd/metrics.hpp"
#include "lfd/parallel.hpp"
#include "lfd/random.hpp"
#include "lfd/svm.hpp"

namespace lfd {

SearchGrid SearchGrid::confidence_svr() {
  return {{0.3, 0.5, 0.7}, {0.01, 0.05, 0.1}, {KernelSpec::rbf(), KernelSpec::linear()}, 5};
}

SearchGrid SearchGrid::gender_svc() {
  return {{0.1, 0.3, 0.5, 0.7},
          {0.0},
          {KernelSpec::linear(), KernelSpec::poly(3), KernelSpec::rbf(), KernelSpec::sigmoid()},
          5};
}

void SearchGrid::validate() const {
  if (C_values.empty() || epsilon_values.empty() || kernels.empty()) {
    raise(ErrorCode::InvalidArgument, "search grid axes must be non-empty");
  }
  if (folds < 2) raise(ErrorCode::InvalidArgument, "folds must be >= 2");
  for (const auto& k : kernels) k.validate();
}

std::vector<int> assign_folds(const std::vector<std::int64_t>& groups, int folds, std::uint64_t seed) {
  std::vector<std::int64_t> distinct;
  std::map<std::int64_t, std::size_t> position;
  for (auto g : groups) {
    if (position.emplace(g, distinct.size()).second) distinct.push_back(g);
  }
  if (distinct.size() < static_cast<std::size_t>(folds)) {
    raise(ErrorCode::InsufficientData, "fewer groups than folds");
  }
  Rng rng(seed);
  std::shuffle(distinct.begin(), distinct.end(), rng);
  std::map<std::int64_t, int> fold_of_group;
  for (std::size_t p = 0; p < distinct.size(); ++p) {
    fold_of_group[distinct[p]] = static_cast<int>((p * static_cast<std::size_t>(folds)) / distinct.size());
  }
  std::vector<int> out;
  out.reserve(groups.size());
  for (auto g : groups) out.push_back(fold_of_group[g]);
  return out;
}

namespace {

struct FoldData {
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train, y_test;
};

FoldData split_fold(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& fold_of, int fold) {
  std::vector<Eigen::Index> train, test;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    (fold_of[i] == fold ? test : train).push_back(static_cast<Eigen::Index>(i));
  }
  FoldData f;
  f.x_train = x(train, Eigen::all);
  f.y_train = y(train);
  f.x_test = x(test, Eigen::all);
  f.y_test = y(test);
  return f;
}

double score_fold(const KernelModel& model, const FoldData& f, Task task) {
  const Eigen::VectorXd pred = model.predict(f.x_test);
  if (task == Task::Classification) {
    return static_cast<double>((pred.array() == f.y_test.array()).count()) / static_cast<double>(f.y_test.size());
  }
  const double mean = f.y_test.mean();
  if ((f.y_test.array() == mean).all()) {
    // R^2 is undefined on a constant fold: exact fit counts as 1, anything else as 0.
    return (pred - f.y_test).squaredNorm() == 0.0 ? 1.0 : 0.0;
  }
  return r2(f.y_test, pred);
}

MachineKind machine_for(Task task) {
  return task == Task::Regression ? MachineKind::Regressor : MachineKind::Classifier;
}

bool has_both_classes(const Eigen::VectorXd& y) {
  return (y.array() > 0).any() && (y.array() < 0).any();
}

KernelModel fit_fold(const detail::PreparedData& data, Task task, double C, double eps, const SolverOptions& options) {
  SolverOptions relaxed = options;
  relaxed.throw_on_no_convergence = false;
  KernelModel m = detail::fit_prepared(data, machine_for(task), C, eps, relaxed);
  if (!m.meta.converged) spdlog::warn("SMO hit the iteration budget (C={}, eps={}); using best iterate", C, eps);
  return m;
}

// Scores every (C, eps) pair for one fold and kernel; classification folds
// with a single training class predict that class.
std::vector<double> score_fold_cells(const FoldData& f, const KernelSpec& kernel, const std::vector<double>& cs,
                                     const std::vector<double>& eps, Task task, const SolverOptions& options) {
  std::vector<double> out;
  out.reserve(cs.size() * eps.size());
  if (task == Task::Classification && !has_both_classes(f.y_train)) {
    const double label = f.y_train(0);
    const double acc = static_cast<double>((f.y_test.array() == label).count()) / static_cast<double>(f.y_test.size());
    out.assign(cs.size() * eps.size(), acc);
    return out;
  }
  const auto data = detail::prepare(f.x_train, f.y_train, kernel);
  for (double c : cs) {
    for (double e : eps) out.push_back(score_fold(fit_fold(data, task, c, e, options), f, task));
  }
  return out;
}

}  // namespace

GridCell evaluate_cell(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& fold_of,
                       int folds, double C, double epsilon, const KernelSpec& kernel, Task task,
                       const SolverOptions& options) {
  GridCell cell{C, task == Task::Regression ? epsilon : 0.0, kernel, 0.0, {}};
  for (int f = 0; f < folds; ++f) {
    const FoldData fd = split_fold(x, y, fold_of, f);
    cell.fold_scores.push_back(score_fold_cells(fd, kernel, {C}, {cell.epsilon}, task, options).front());
  }
  cell.score = std::accumulate(cell.fold_scores.begin(), cell.fold_scores.end(), 0.0) / folds;
  return cell;
}

GridSearchResult grid_search_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::vector<std::int64_t>& groups, const SearchGrid& grid, Task task,
                                std::uint64_t seed, const SolverOptions& options, int threads,
                                const FoldTransform& transform) {
  grid.validate();
  if (x.rows() != y.size()) raise(ErrorCode::DimensionMismatch, "X rows and y length differ");
  if (x.rows() < grid.folds) raise(ErrorCode::InsufficientData, "fewer rows than folds");
  std::vector<std::int64_t> g = groups;
  if (g.empty()) {
    g.resize(static_cast<std::size_t>(x.rows()));
    std::iota(g.begin(), g.end(), 0);
  }
  if (g.size() != static_cast<std::size_t>(x.rows())) raise(ErrorCode::DimensionMismatch, "groups length mismatch");

  std::vector<double> cs = grid.C_values;
  std::vector<double> eps = task == Task::Regression ? grid.epsilon_values : std::vector<double>{0.0};
  std::sort(cs.begin(), cs.end());
  std::sort(eps.begin(), eps.end());

  GridSearchResult result;
  result.fold_of = assign_folds(g, grid.folds, seed);
  std::vector<FoldData> fold_data;
  for (int f = 0; f < grid.folds; ++f) {
    fold_data.push_back(split_fold(x, y, result.fold_of, f));
    if (transform) transform(fold_data.back().x_train, fold_data.back().x_test);
  }

  const std::size_t n_kernels = grid.kernels.size();
  const std::size_t n_jobs = static_cast<std::size_t>(grid.folds) * n_kernels;
  std::vector<std::vector<double>> job_scores(n_jobs);
  parallel_for(n_jobs, threads, [&](std::size_t job) {
    const std::size_t fold = job / n_kernels;
    const std::size_t k = job % n_kernels;
    job_scores[job] = score_fold_cells(fold_data[fold], grid.kernels[k], cs, eps, task, options);
  });

  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    for (std::size_t ei = 0; ei < eps.size(); ++ei) {
      for (std::size_t k = 0; k < n_kernels; ++k) {
        GridCell cell{cs[ci], eps[ei], grid.kernels[k], 0.0, {}};
        for (int f = 0; f < grid.folds; ++f) {
          cell.fold_scores.push_back(job_scores[static_cast<std::size_t>(f) * n_kernels + k][ci * eps.size() + ei]);
        }
        cell.score = std::accumulate(cell.fold_scores.begin(), cell.fold_scores.end(), 0.0) / grid.folds;
        result.table.push_back(std::move(cell));
      }
    }
  }
  result.best = result.table.front();
  for (const auto& cell : result.table) {
    if (cell.score > result.best.score) result.best = cell;
  }
  return result;
}

KernelModel refit_best(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GridSearchResult& search,
                       Task task, const SolverOptions& options) {
  const GridCell& b = search.best;
  KernelModel m = task == Task::Regression ? svr_fit(x, y, b.C, b.epsilon, b.kernel, options)
                                           : svc_fit(x, y, b.C, b.kernel, options);
  m.meta.cv_score = b.score;
  return m;
}

}  // namespace lfd
