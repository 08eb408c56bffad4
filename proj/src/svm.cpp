#include "lfd/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lfd {

void KernelSpec::validate() const {
  if (gamma && !(*gamma > 0.0)) raise(ErrorCode::InvalidArgument, "kernel gamma must be > 0");
  if (type == KernelType::Poly && degree < 1) raise(ErrorCode::InvalidArgument, "poly degree must be >= 1");
}

std::string KernelSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (type) {
    case KernelType::Linear: os << "linear"; break;
    case KernelType::RBF: os << "rbf"; break;
    case KernelType::Poly: os << "poly:degree=" << degree << ":coef0=" << coef0; break;
    case KernelType::Sigmoid: os << "sigmoid:coef0=" << coef0; break;
  }
  if (gamma && type != KernelType::Linear) os << ":gamma=" << *gamma;
  return os.str();
}

KernelSpec KernelSpec::parse(const std::string& text) {
  std::stringstream ss(text);
  std::string token;
  std::getline(ss, token, ':');
  KernelSpec k;
  if (token == "linear") {
    k = linear();
  } else if (token == "rbf") {
    k = rbf();
  } else if (token == "poly") {
    k = poly();
  } else if (token == "sigmoid") {
    k = sigmoid();
  } else {
    raise(ErrorCode::ParseError, "unknown kernel '" + text + "'");
  }
  while (std::getline(ss, token, ':')) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) raise(ErrorCode::ParseError, "expected key=value in kernel '" + text + "'");
    const std::string key = token.substr(0, eq);
    try {
      const double v = std::stod(token.substr(eq + 1));
      if (key == "gamma") {
        k.gamma = v;
      } else if (key == "degree") {
        k.degree = static_cast<int>(v);
      } else if (key == "coef0") {
        k.coef0 = v;
      } else {
        raise(ErrorCode::ParseError, "unknown kernel key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      raise(ErrorCode::ParseError, "bad kernel value in '" + text + "'");
    }
  }
  k.validate();
  return k;
}

namespace {

Eigen::MatrixXd apply_kernel(Eigen::MatrixXd dots, const Eigen::VectorXd& na, const Eigen::VectorXd& nb,
                             const KernelSpec& k) {
  const double g = k.gamma.value_or(1.0);
  switch (k.type) {
    case KernelType::Linear:
      return dots;
    case KernelType::RBF: {
      Eigen::MatrixXd d2 = (-2.0 * dots).colwise() + na;
      d2.rowwise() += nb.transpose();
      return (-g * d2.cwiseMax(0.0)).array().exp().matrix();
    }
    case KernelType::Poly:
      return (g * dots.array() + k.coef0).pow(k.degree).matrix();
    case KernelType::Sigmoid:
      return (g * dots.array() + k.coef0).tanh().matrix();
  }
  return dots;
}

}  // namespace

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelSpec& kernel) {
  if (a.cols() != b.cols()) raise(ErrorCode::DimensionMismatch, "kernel operands differ in dimension");
  Eigen::MatrixXd dots = a * b.transpose();
  return apply_kernel(std::move(dots), a.rowwise().squaredNorm(), b.rowwise().squaredNorm(), kernel);
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& a, const KernelSpec& kernel) {
  Eigen::MatrixXd dots(a.rows(), a.rows());
  dots.setZero();
  dots.selfadjointView<Eigen::Lower>().rankUpdate(a);
  dots.triangularView<Eigen::StrictlyUpper>() = dots.transpose();
  const Eigen::VectorXd norms = dots.diagonal();
  Eigen::MatrixXd k = apply_kernel(std::move(dots), norms, norms, kernel);
  k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  if (kernel.type == KernelType::RBF) k.diagonal().setOnes();
  return k;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale = ((x.rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) raise(ErrorCode::DimensionMismatch, "standardizer dimension mismatch");
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd KernelModel::decision(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim()) raise(ErrorCode::DimensionMismatch, "model input dimension mismatch");
  if (!x.allFinite()) raise(ErrorCode::NonFiniteInput, "non-finite model input");
  const Eigen::MatrixXd xs = standardizer.apply(x);
  if (support_vectors.rows() == 0) return Eigen::VectorXd::Constant(x.rows(), bias);
  return (gram_matrix(xs, support_vectors, kernel) * dual_coefs).array() + bias;
}

double KernelModel::decision(const Eigen::VectorXd& x) const {
  return decision(Eigen::MatrixXd(x.transpose()))(0);
}

Eigen::VectorXd KernelModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd f = decision(x);
  if (kind == MachineKind::Classifier) {
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = f(i) >= 0.0 ? 1.0 : -1.0;
  }
  return f;
}

DualProblem make_svr_problem(Eigen::MatrixXd kernel, const Eigen::VectorXd& y, double C, double epsilon) {
  const Eigen::Index n = y.size();
  DualProblem p;
  p.kernel = std::move(kernel);
  p.C = C;
  p.p.resize(2 * n);
  p.y.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.p(i) = epsilon - y(i);
    p.y(i) = 1.0;
    p.p(i + n) = epsilon + y(i);
    p.y(i + n) = -1.0;
  }
  return p;
}

DualProblem make_svc_problem(Eigen::MatrixXd kernel, const Eigen::VectorXd& labels, double C) {
  DualProblem p;
  p.kernel = std::move(kernel);
  p.C = C;
  p.y = labels;
  p.p = Eigen::VectorXd::Constant(labels.size(), -1.0);
  return p;
}

namespace {

constexpr double kTau = 1e-12;
// Extra pair updates allowed after convergence, in units of dual variables touched.
constexpr long kRefineWork = 10'000'000;

bool in_up(double y, double a, double C) { return (y > 0 && a < C) || (y < 0 && a > 0); }
bool in_low(double y, double a, double C) { return (y > 0 && a > 0) || (y < 0 && a < C); }

struct PairChoice {
  Eigen::Index i = -1, j = -1;
  double gap = -std::numeric_limits<double>::infinity();
};

PairChoice max_violating_pair(const DualProblem& prob, const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad) {
  double gmax = -std::numeric_limits<double>::infinity();
  double gmin = std::numeric_limits<double>::infinity();
  PairChoice c;
  for (Eigen::Index t = 0; t < prob.size(); ++t) {
    const double v = -prob.y(t) * grad(t);
    if (in_up(prob.y(t), alpha(t), prob.C) && v > gmax) {
      gmax = v;
      c.i = t;
    }
    if (in_low(prob.y(t), alpha(t), prob.C) && v < gmin) {
      gmin = v;
      c.j = t;
    }
  }
  if (c.i >= 0 && c.j >= 0) c.gap = gmax - gmin;
  return c;
}

double compute_rho(const DualProblem& prob, const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad) {
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long n_free = 0;
  for (Eigen::Index t = 0; t < prob.size(); ++t) {
    const double yg = prob.y(t) * grad(t);
    if (alpha(t) >= prob.C) {
      if (prob.y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0.0) {
      if (prob.y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  if (n_free > 0) return sum_free / static_cast<double>(n_free);
  if (std::isinf(ub) && std::isinf(lb)) return 0.0;
  if (std::isinf(ub)) return lb;
  if (std::isinf(lb)) return ub;
  return 0.5 * (ub + lb);
}

}  // namespace

double kkt_violation(const DualProblem& prob, const Eigen::VectorXd& alpha) {
  Eigen::VectorXd grad = prob.p;
  for (Eigen::Index s = 0; s < prob.size(); ++s) {
    if (alpha(s) == 0.0) continue;
    for (Eigen::Index t = 0; t < prob.size(); ++t) grad(t) += prob.q(t, s) * alpha(s);
  }
  return std::max(0.0, max_violating_pair(prob, alpha, grad).gap);
}

DualSolution solve_dual(const DualProblem& prob, const SolverOptions& options) {
  const Eigen::Index l = prob.size();
  const Eigen::Index n = prob.kernel.rows();
  if (prob.p.size() != l || n == 0 || l % n != 0) raise(ErrorCode::DimensionMismatch, "malformed dual problem");
  if (!(prob.C > 0.0)) raise(ErrorCode::InvalidArgument, "C must be > 0");
  const long budget = options.max_iterations > 0
                          ? options.max_iterations
                          : std::max<long>(10L * static_cast<long>(l) * static_cast<long>(l), 1000L);
  const double stop_gap = std::min(options.tolerance, options.refine_tolerance);
  const double C = prob.C;

  DualSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(l);
  long refine_end = -1;
  Eigen::VectorXd grad = prob.p;
  Eigen::VectorXd step(n);
  Eigen::VectorXd& a = sol.alpha;

  for (;;) {
    const PairChoice pc = max_violating_pair(prob, a, grad);
    sol.kkt_gap = std::max(0.0, pc.gap);
    sol.converged = pc.i < 0 || pc.j < 0 || pc.gap < options.tolerance;
    if (sol.converged && refine_end < 0) {
      refine_end = sol.iterations + std::max<long>(sol.iterations, kRefineWork / static_cast<long>(l));
    }
    if (pc.i < 0 || pc.j < 0 || pc.gap < stop_gap) break;
    if (refine_end < 0 ? sol.iterations >= budget
                       : sol.iterations >= refine_end && (sol.converged || sol.iterations >= refine_end + budget)) {
      break;
    }
    ++sol.iterations;

    const Eigen::Index i = pc.i, j = pc.j;
    const double qii = prob.q(i, i), qjj = prob.q(j, j), qij = prob.q(i, j);
    const double old_ai = a(i), old_aj = a(j);
    if (prob.y(i) != prob.y(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = a(i) - a(j);
      a(i) += delta;
      a(j) += delta;
      if (diff > 0) {
        if (a(j) < 0) { a(j) = 0; a(i) = diff; }
      } else {
        if (a(i) < 0) { a(i) = 0; a(j) = -diff; }
      }
      if (diff > 0) {
        if (a(i) > C) { a(i) = C; a(j) = C - diff; }
      } else {
        if (a(j) > C) { a(j) = C; a(i) = C + diff; }
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = a(i) + a(j);
      a(i) -= delta;
      a(j) += delta;
      if (sum > C) {
        if (a(i) > C) { a(i) = C; a(j) = sum - C; }
      } else {
        if (a(j) < 0) { a(j) = 0; a(i) = sum; }
      }
      if (sum > C) {
        if (a(j) > C) { a(j) = C; a(i) = sum - C; }
      } else {
        if (a(i) < 0) { a(i) = 0; a(j) = sum; }
      }
    }
    const double dai = a(i) - old_ai;
    const double daj = a(j) - old_aj;
    const double yi = prob.y(i), yj = prob.y(j);
    step = yi * dai * prob.kernel.col(i % n) + yj * daj * prob.kernel.col(j % n);
    for (Eigen::Index b = 0; b < l; b += n) {
      grad.segment(b, n).array() += prob.y.segment(b, n).array() * step.array();
    }
  }
  sol.rho = compute_rho(prob, a, grad);
  sol.objective = 0.5 * a.dot(grad + prob.p);
  return sol;
}

namespace detail {

PreparedData prepare(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& kernel) {
  kernel.validate();
  if (x.rows() != y.size()) raise(ErrorCode::DimensionMismatch, "X rows and y length differ");
  if (x.rows() < 2) raise(ErrorCode::InvalidArgument, "need at least 2 training rows");
  if (!x.allFinite() || !y.allFinite()) raise(ErrorCode::NonFiniteInput, "non-finite training data");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return y(a) < y(b);
  });
  Eigen::MatrixXd sorted(x.rows(), x.cols());
  PreparedData d;
  d.y.resize(y.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    sorted.row(r) = x.row(order[static_cast<std::size_t>(r)]);
    d.y(r) = y(order[static_cast<std::size_t>(r)]);
  }
  d.standardizer = Standardizer::fit(sorted);
  d.xs = d.standardizer.apply(sorted);
  d.kernel = kernel;
  if (kernel.needs_gamma() && !kernel.gamma) {
    const double mean = d.xs.mean();
    const double var = (d.xs.array() - mean).square().mean();
    const double dim = static_cast<double>(d.xs.cols());
    d.kernel.gamma = var > 0.0 ? 1.0 / (dim * var) : 1.0 / dim;
  }
  d.gram = gram_matrix(d.xs, d.kernel);
  return d;
}

KernelModel fit_prepared(const PreparedData& data, MachineKind kind, double C, double epsilon,
                         const SolverOptions& options) {
  if (!(C > 0.0)) raise(ErrorCode::InvalidArgument, "C must be > 0");
  const Eigen::Index n = data.y.size();
  DualProblem prob = kind == MachineKind::Regressor
                         ? make_svr_problem(data.gram, data.y, C, epsilon)
                         : make_svc_problem(data.gram, data.y, C);
  const DualSolution sol = solve_dual(prob, options);

  Eigen::VectorXd coef(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    coef(i) = kind == MachineKind::Regressor ? sol.alpha(i) - sol.alpha(i + n) : data.y(i) * sol.alpha(i);
  }
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (coef(i) != 0.0) support.push_back(i);
  }
  KernelModel model;
  model.kind = kind;
  model.kernel = data.kernel;
  model.standardizer = data.standardizer;
  model.support_vectors.resize(static_cast<Eigen::Index>(support.size()), data.xs.cols());
  model.dual_coefs.resize(static_cast<Eigen::Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    model.support_vectors.row(static_cast<Eigen::Index>(s)) = data.xs.row(support[s]);
    model.dual_coefs(static_cast<Eigen::Index>(s)) = coef(support[s]);
  }
  model.bias = -sol.rho;
  model.meta.C = C;
  model.meta.epsilon = kind == MachineKind::Regressor ? epsilon : 0.0;
  model.meta.n_train = static_cast<int>(n);
  model.meta.dual_objective = sol.objective;
  model.meta.kkt_residual = sol.kkt_gap;
  model.meta.iterations = sol.iterations;
  model.meta.converged = sol.converged;
  if (!sol.converged && options.throw_on_no_convergence) throw NoConvergenceError(std::move(model));
  return model;
}

}  // namespace detail

KernelModel svr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double C, double epsilon,
                    const KernelSpec& kernel, const SolverOptions& options) {
  if (!(epsilon >= 0.0)) raise(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const auto data = detail::prepare(x, y, kernel);
  return detail::fit_prepared(data, MachineKind::Regressor, C, epsilon, options);
}

KernelModel svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double C,
                    const KernelSpec& kernel, const SolverOptions& options) {
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1.0) {
      pos = true;
    } else if (labels(i) == -1.0) {
      neg = true;
    } else {
      raise(ErrorCode::InvalidArgument, "classifier labels must be +1 or -1");
    }
  }
  if (!pos || !neg) raise(ErrorCode::SingleClass, "classifier needs both classes");
  const auto data = detail::prepare(x, labels, kernel);
  return detail::fit_prepared(data, MachineKind::Classifier, C, 0.0, options);
}

}  // namespace lfd
