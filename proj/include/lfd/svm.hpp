#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfd/error.hpp"

namespace lfd {

enum class KernelType { Linear, RBF, Poly, Sigmoid };

/// Kernel function. An unset gamma is resolved at fit time to 1 / (d * Var(X))
/// on the standardized training data.
struct KernelSpec {
  KernelType type = KernelType::RBF;
  std::optional<double> gamma;
  int degree = 3;
  double coef0 = 0.0;

  static KernelSpec linear() { return {KernelType::Linear, std::nullopt, 3, 0.0}; }
  static KernelSpec rbf(std::optional<double> gamma = std::nullopt) { return {KernelType::RBF, gamma, 3, 0.0}; }
  static KernelSpec poly(int degree = 3, std::optional<double> gamma = std::nullopt, double coef0 = 0.0) {
    return {KernelType::Poly, gamma, degree, coef0};
  }
  static KernelSpec sigmoid(std::optional<double> gamma = std::nullopt, double coef0 = 0.0) {
    return {KernelType::Sigmoid, gamma, 3, coef0};
  }

  bool needs_gamma() const { return type != KernelType::Linear; }
  /// Throws InvalidArgument when gamma is set and not positive.
  void validate() const;
  std::string to_string() const;
  /// Accepts "linear", "rbf", "rbf:gamma=0.5", "poly:degree=3:coef0=1", "sigmoid".
  static KernelSpec parse(const std::string& text);

  template <typename DerivedA, typename DerivedB>
  double operator()(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) const;

  bool operator==(const KernelSpec&) const = default;
};

/// K(i, j) = k(A.row(i), B.row(j)). Gamma must be resolved.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelSpec& kernel);
/// Symmetric Gram matrix of the rows of `a`, exactly symmetric with k(x, x) on the diagonal.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& a, const KernelSpec& kernel);

/// Per-column z-scoring; constant columns keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  template <typename Derived>
  Eigen::RowVectorXd apply_row(const Eigen::MatrixBase<Derived>& row) const {
    return (row.derived().transpose() - mean).cwiseQuotient(scale).transpose();
  }
};

enum class MachineKind { Regressor, Classifier };

struct TrainMeta {
  double C = 1.0;
  double epsilon = 0.0;
  int n_train = 0;
  double cv_score = 0.0;
  double dual_objective = 0.0;
  double kkt_residual = 0.0;
  long iterations = 0;
  bool converged = true;
};

/// Trained epsilon-SVR or C-SVC. Support vectors are stored standardized.
struct KernelModel {
  MachineKind kind = MachineKind::Regressor;
  KernelSpec kernel;
  Standardizer standardizer;
  Eigen::MatrixXd support_vectors;
  Eigen::VectorXd dual_coefs;
  double bias = 0.0;
  TrainMeta meta;

  int input_dim() const { return static_cast<int>(standardizer.mean.size()); }
  /// Raw decision value for each input row.
  Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
  double decision(const Eigen::VectorXd& x) const;
  /// Regression value, or +-1 for classifiers.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

struct SolverOptions {
  double tolerance = 1e-3;          // KKT gap required for convergence
  double refine_tolerance = 1e-6;   // after convergence at update k, SMO continues toward this gap for max(k, 1e7 / l) more updates
  long max_iterations = 0;          // 0 -> max(10 l^2, 1000) pair updates, l dual variables
  bool throw_on_no_convergence = true;
};

/// Raised when the pair-update budget is exhausted; carries the best iterate.
class NoConvergenceError : public Error {
 public:
  explicit NoConvergenceError(KernelModel best)
      : Error(ErrorCode::NoConvergence, "SMO did not reach the KKT tolerance"), best_(std::move(best)) {}
  const KernelModel& best_iterate() const { return best_; }

 private:
  KernelModel best_;
};

/// Epsilon-insensitive support vector regression. Throws NonFiniteInput,
/// InvalidArgument, NoConvergence.
KernelModel svr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double C, double epsilon,
                    const KernelSpec& kernel, const SolverOptions& options = {});

/// Soft-margin classifier on labels +-1. Throws SingleClass.
KernelModel svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double C,
                    const KernelSpec& kernel, const SolverOptions& options = {});

/// Dual QP  min 1/2 a'Qa + p'a  s.t. y'a = 0, 0 <= a <= C, with
/// Q(s, t) = y_s y_t K(s mod n, t mod n).
struct DualProblem {
  Eigen::MatrixXd kernel;  // n x n
  Eigen::VectorXd p;       // l
  Eigen::VectorXd y;       // l, entries +-1
  double C = 1.0;

  Eigen::Index size() const { return y.size(); }
  double q(Eigen::Index s, Eigen::Index t) const {
    const Eigen::Index n = kernel.rows();
    return y(s) * y(t) * kernel(s % n, t % n);
  }
};

struct DualSolution {
  Eigen::VectorXd alpha;
  double rho = 0.0;  // decision offset is -rho
  double objective = 0.0;
  double kkt_gap = 0.0;
  long iterations = 0;
  bool converged = false;
};

DualProblem make_svr_problem(Eigen::MatrixXd kernel, const Eigen::VectorXd& y, double C, double epsilon);
DualProblem make_svc_problem(Eigen::MatrixXd kernel, const Eigen::VectorXd& labels, double C);

/// Maximal-violating-pair SMO.
DualSolution solve_dual(const DualProblem& problem, const SolverOptions& options = {});

/// Largest KKT violation (m - M) of `alpha` for `problem`.
double kkt_violation(const DualProblem& problem, const Eigen::VectorXd& alpha);

// ---- cross-validated grid search ----

struct SearchGrid {
  std::vector<double> C_values;
  std::vector<double> epsilon_values;  // ignored for classification
  std::vector<KernelSpec> kernels;
  int folds = 5;

  /// C in {0.3, 0.5, 0.7}, epsilon in {0.01, 0.05, 0.1}, RBF and linear kernels.
  static SearchGrid confidence_svr();
  /// C in {0.1, 0.3, 0.5, 0.7}; linear, cubic poly, RBF, sigmoid.
  static SearchGrid gender_svc();

  void validate() const;
};

enum class Task { Regression, Classification };

struct GridCell {
  double C = 0.0;
  double epsilon = 0.0;
  KernelSpec kernel;
  double score = 0.0;  // mean R^2 (regression) or accuracy (classification)
  std::vector<double> fold_scores;
};

struct GridSearchResult {
  GridCell best;
  std::vector<GridCell> table;  // enumeration order: C asc, epsilon asc, kernel list order
  std::vector<int> fold_of;
};

/// Seeded shuffle of the distinct groups, then contiguous blocks of groups per
/// fold, so rows sharing a group never straddle folds.
std::vector<int> assign_folds(const std::vector<std::int64_t>& groups, int folds, std::uint64_t seed);

/// Scores one cell on a fixed fold assignment (the same path grid_search_cv uses).
GridCell evaluate_cell(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& fold_of,
                       int folds, double C, double epsilon, const KernelSpec& kernel, Task task,
                       const SolverOptions& options = {});

/// Maps a fold's training and held-out rows in place, fitted on the training rows only.
using FoldTransform = std::function<void(Eigen::MatrixXd& train, Eigen::MatrixXd& test)>;

/// Empty `groups` puts every row in its own group.
GridSearchResult grid_search_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::vector<std::int64_t>& groups, const SearchGrid& grid, Task task,
                                std::uint64_t seed, const SolverOptions& options = {}, int threads = 1,
                                const FoldTransform& transform = nullptr);

/// Fits the best cell of a search on all rows and records its CV score.
KernelModel refit_best(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GridSearchResult& search,
                       Task task, const SolverOptions& options = {});

// ---- implementation detail shared by the fit and CV paths ----
namespace detail {

struct PreparedData {
  Eigen::MatrixXd xs;  // sorted rows, standardized
  Eigen::VectorXd y;
  Standardizer standardizer;
  KernelSpec kernel;  // gamma resolved
  Eigen::MatrixXd gram;
};

/// Sorts rows lexicographically by (x, y), standardizes, resolves gamma and
/// builds the Gram matrix.
PreparedData prepare(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& kernel);

KernelModel fit_prepared(const PreparedData& data, MachineKind kind, double C, double epsilon,
                         const SolverOptions& options);

}  // namespace detail

template <typename DerivedA, typename DerivedB>
double KernelSpec::operator()(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) const {
  const double g = gamma.value_or(1.0);
  switch (type) {
    case KernelType::Linear: return a.dot(b);
    case KernelType::RBF: return std::exp(-g * (a - b).squaredNorm());
    case KernelType::Poly: return std::pow(g * a.dot(b) + coef0, degree);
    case KernelType::Sigmoid: return std::tanh(g * a.dot(b) + coef0);
  }
  return 0.0;
}

}  // namespace lfd
