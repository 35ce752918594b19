#include "phasewalk/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace phasewalk {

namespace {

bool finite_bound(double v) { return std::abs(v) < kQpInfinity; }

// Max-abs entry, zero for empty inputs.
template <class Derived>
double amax(const Eigen::MatrixBase<Derived>& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
}

// All constraints in "row * x >= rhs" or "row * x == rhs" form.
struct ConstraintSet {
  Eigen::MatrixXd rows;
  Eigen::VectorXd rhs;
  int num_eq = 0;
  // Equalities: index >= 0 is an original eq row, index < 0 encodes the
  // fixed inequality row -(index + 1). Inequalities: +(j + 1) lower, -(j + 1) upper.
  std::vector<int> origin;

  int size() const { return static_cast<int>(rhs.size()); }
};

ConstraintSet build_constraints(const QpProblem& p) {
  const int n = p.num_variables();
  std::vector<std::pair<Eigen::VectorXd, double>> eqs;
  std::vector<int> eq_origin;
  for (int i = 0; i < p.num_equalities(); ++i) {
    eqs.emplace_back(p.eq_matrix.row(i).transpose(), p.eq_rhs(i));
    eq_origin.push_back(i);
  }
  std::vector<std::pair<Eigen::VectorXd, double>> ineqs;
  std::vector<int> ineq_origin;
  for (int j = 0; j < p.num_inequalities(); ++j) {
    const double lo = p.lower(j);
    const double hi = p.upper(j);
    if (finite_bound(lo) && finite_bound(hi) && lo == hi) {
      eqs.emplace_back(p.ineq_matrix.row(j).transpose(), lo);
      eq_origin.push_back(-(j + 1));
      continue;
    }
    if (finite_bound(lo)) {
      ineqs.emplace_back(p.ineq_matrix.row(j).transpose(), lo);
      ineq_origin.push_back(j + 1);
    }
    if (finite_bound(hi)) {
      ineqs.emplace_back(-p.ineq_matrix.row(j).transpose(), -hi);
      ineq_origin.push_back(-(j + 1));
    }
  }
  ConstraintSet cs;
  cs.num_eq = static_cast<int>(eqs.size());
  const int total = cs.num_eq + static_cast<int>(ineqs.size());
  cs.rows.resize(total, n);
  cs.rhs.resize(total);
  int k = 0;
  for (auto& [row, rhs] : eqs) {
    cs.rows.row(k) = row.transpose();
    cs.rhs(k++) = rhs;
  }
  for (auto& [row, rhs] : ineqs) {
    cs.rows.row(k) = row.transpose();
    cs.rhs(k++) = rhs;
  }
  cs.origin = eq_origin;
  cs.origin.insert(cs.origin.end(), ineq_origin.begin(), ineq_origin.end());
  return cs;
}

// Orthogonal decomposition of the working-set normals.
struct Subspace {
  Eigen::MatrixXd q;        // n x n
  Eigen::MatrixXd r;        // m x m upper triangular
  int m = 0;

  Eigen::Ref<const Eigen::MatrixXd> range() const { return q.leftCols(m); }
  Eigen::Ref<const Eigen::MatrixXd> null() const { return q.rightCols(q.cols() - m); }
};

Subspace decompose(const Eigen::MatrixXd& normals_t) {
  const auto n = normals_t.rows();
  const auto m = normals_t.cols();
  Subspace s;
  s.m = static_cast<int>(m);
  if (m == 0) {
    s.q = Eigen::MatrixXd::Identity(n, n);
    s.r.resize(0, 0);
    return s;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(normals_t);
  s.q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  s.r = qr.matrixQR().topLeftCorner(m, m).triangularView<Eigen::Upper>();
  return s;
}

Eigen::MatrixXd working_normals(const ConstraintSet& cs, const std::vector<int>& working) {
  const int n = static_cast<int>(cs.rows.cols());
  Eigen::MatrixXd at(n, cs.num_eq + static_cast<int>(working.size()));
  for (int i = 0; i < cs.num_eq; ++i) at.col(i) = cs.rows.row(i).transpose();
  for (std::size_t k = 0; k < working.size(); ++k) {
    at.col(cs.num_eq + static_cast<int>(k)) = cs.rows.row(working[k]).transpose();
  }
  return at;
}

Eigen::VectorXd working_rhs(const ConstraintSet& cs, const std::vector<int>& working) {
  Eigen::VectorXd b(cs.num_eq + static_cast<int>(working.size()));
  b.head(cs.num_eq) = cs.rhs.head(cs.num_eq);
  for (std::size_t k = 0; k < working.size(); ++k) b(cs.num_eq + static_cast<int>(k)) = cs.rhs(working[k]);
  return b;
}

// Minimum-norm correction of x onto { A_W x = b_W }.
Eigen::VectorXd project_affine(const Subspace& s, const Eigen::MatrixXd& at, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& x) {
  if (s.m == 0) return x;
  const Eigen::VectorXd resid = b - at.transpose() * x;
  const Eigen::VectorXd y = s.r.transpose().triangularView<Eigen::Lower>().solve(resid);
  return x + s.range() * y;
}

double max_violation(const ConstraintSet& cs, const Eigen::VectorXd& x) {
  double worst = 0.0;
  const Eigen::VectorXd ax = cs.rows * x;
  for (int i = 0; i < cs.size(); ++i) {
    const double d = ax(i) - cs.rhs(i);
    worst = std::max(worst, i < cs.num_eq ? std::abs(d) : -d);
  }
  return worst;
}

enum class LoopResult { Optimal, MaxIter, Unbounded };

struct LoopState {
  Eigen::VectorXd x;
  std::vector<int> working;  // inequality constraint indices (>= num_eq)
  Eigen::VectorXd lambda;    // multipliers for [equalities, working]
  int pivots = 0;
};

// Reduced-Hessian step. Returns false and a descent ray in `ray` when the
// reduced Hessian is singular along a direction of negative slope.
bool reduced_step(const Eigen::MatrixXd& h, const Eigen::Ref<const Eigen::MatrixXd>& z,
                  const Eigen::VectorXd& grad, Eigen::VectorXd& step, Eigen::VectorXd& ray) {
  const Eigen::MatrixXd hr = z.transpose() * h * z;
  const Eigen::VectorXd gr = z.transpose() * grad;
  const double scale = std::max(1.0, amax(hr.diagonal()));
  Eigen::LLT<Eigen::MatrixXd> llt(hr);
  if (llt.info() == Eigen::Success) {
    const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs2().minCoeff();
    if (min_pivot > 1e-11 * scale) {
      step = -(z * llt.solve(gr));
      return true;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hr);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  const double null_tol = 1e-10 * scale;
  Eigen::VectorXd null_part = Eigen::VectorXd::Zero(gr.size());
  for (int k = 0; k < vals.size(); ++k) {
    if (vals(k) <= null_tol) null_part += vecs.col(k) * vecs.col(k).dot(gr);
  }
  if (null_part.norm() > 1e-12 * std::max(1.0, gr.norm())) {
    ray = -(z * null_part);
    return false;
  }
  // Gradient lies in the range: regularized solve.
  const Eigen::MatrixXd reg = hr + 1e-10 * Eigen::MatrixXd::Identity(hr.rows(), hr.cols());
  step = -(z * reg.ldlt().solve(gr));
  return true;
}

LoopResult run_active_set(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const ConstraintSet& cs,
                          LoopState& st, int max_pivots) {
  const int n = static_cast<int>(g.size());
  bool on_minimizer = false;
  for (;;) {
    const Eigen::MatrixXd at = working_normals(cs, st.working);
    const Subspace sub = decompose(at);
    const Eigen::VectorXd grad = h * st.x + g;

    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ray;
    bool is_ray = false;
    if (sub.m < n && !on_minimizer) is_ray = !reduced_step(h, sub.null(), grad, step, ray);
    on_minimizer = false;

    const Eigen::VectorXd& dir = is_ray ? ray : step;
    const double xscale = 1.0 + amax(st.x);
    if (!is_ray && amax(step) <= 1e-13 * xscale) {
      // Stationary on the working set: check multiplier signs.
      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(sub.m);
      if (sub.m > 0) {
        lambda = sub.r.triangularView<Eigen::Upper>().solve(sub.range().transpose() * grad);
      }
      st.lambda = lambda;
      const double dual_tol = 1e-11 * (1.0 + amax(grad));
      int drop = -1;
      double most_negative = -dual_tol;
      for (std::size_t k = 0; k < st.working.size(); ++k) {
        const double l = lambda(cs.num_eq + static_cast<int>(k));
        if (l < most_negative ||
            (drop >= 0 && l == most_negative && st.working[k] < st.working[static_cast<std::size_t>(drop)])) {
          most_negative = l;
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) return LoopResult::Optimal;
      if (st.pivots >= max_pivots) return LoopResult::MaxIter;
      st.working.erase(st.working.begin() + drop);
      ++st.pivots;
      continue;
    }

    // Ratio test along dir, lowest index wins ties.
    double alpha = is_ray ? std::numeric_limits<double>::infinity() : 1.0;
    int blocking = -1;
    const double dnorm = dir.norm();
    for (int i = cs.num_eq; i < cs.size(); ++i) {
      if (std::find(st.working.begin(), st.working.end(), i) != st.working.end()) continue;
      const double ad = cs.rows.row(i).dot(dir);
      if (ad >= -1e-14 * cs.rows.row(i).norm() * dnorm) continue;
      const double slack = cs.rows.row(i).dot(st.x) - cs.rhs(i);
      const double a = std::max(0.0, slack / -ad);
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    if (blocking < 0 && is_ray) return LoopResult::Unbounded;
    st.x += alpha * dir;
    if (blocking >= 0) {
      if (st.pivots >= max_pivots) return LoopResult::MaxIter;
      st.working.push_back(blocking);
      ++st.pivots;
    } else {
      on_minimizer = true;
    }
  }
}

// Finds a feasible point via the LP  min s  s.t.  A x = b,  a_i x + s >= b_i,  s >= 0.
// Returns false when the minimal s is positive (infeasible).
bool find_feasible(const ConstraintSet& cs, Eigen::VectorXd& x, int& pivots, int max_pivots, bool& hit_limit) {
  const int n = static_cast<int>(x.size());
  const int ni = cs.size() - cs.num_eq;
  ConstraintSet aux;
  aux.num_eq = cs.num_eq;
  aux.rows = Eigen::MatrixXd::Zero(cs.size() + 1, n + 1);
  aux.rhs = Eigen::VectorXd::Zero(cs.size() + 1);
  aux.rows.topLeftCorner(cs.size(), n) = cs.rows;
  aux.rhs.head(cs.size()) = cs.rhs;
  aux.rows.block(cs.num_eq, n, ni, 1).setOnes();
  aux.rows(cs.size(), n) = 1.0;  // s >= 0
  aux.origin.assign(static_cast<std::size_t>(aux.size()), 0);

  LoopState st;
  st.x.resize(n + 1);
  st.x.head(n) = x;
  st.x(n) = max_violation(cs, x) + 1.0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 1);
  g(n) = 1.0;
  const LoopResult r = run_active_set(h, g, aux, st, max_pivots);
  pivots += st.pivots;
  hit_limit = (r == LoopResult::MaxIter);
  x = st.x.head(n);
  return r == LoopResult::Optimal && max_violation(cs, x) <= 1e-9 * (1.0 + amax(cs.rhs));
}

// Keeps only constraints that are linearly independent of the equalities
// and of each other.
std::vector<int> independent_subset(const ConstraintSet& cs, const std::vector<int>& candidates) {
  std::vector<int> kept;
  for (int c : candidates) {
    std::vector<int> trial = kept;
    trial.push_back(c);
    const Eigen::MatrixXd at = working_normals(cs, trial);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(at);
    qr.setThreshold(1e-10);
    if (qr.rank() == at.cols()) kept = std::move(trial);
  }
  return kept;
}

void drop_dependent_equalities(ConstraintSet& cs) {
  if (cs.num_eq == 0) return;
  std::vector<int> eq_idx(static_cast<std::size_t>(cs.num_eq));
  for (int i = 0; i < cs.num_eq; ++i) eq_idx[static_cast<std::size_t>(i)] = i;
  std::vector<int> kept;
  for (int i : eq_idx) {
    std::vector<int> trial = kept;
    trial.push_back(i);
    Eigen::MatrixXd at(cs.rows.cols(), static_cast<Eigen::Index>(trial.size()));
    for (std::size_t k = 0; k < trial.size(); ++k) at.col(static_cast<Eigen::Index>(k)) = cs.rows.row(trial[k]).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(at);
    qr.setThreshold(1e-12);
    if (qr.rank() == at.cols()) kept = std::move(trial);
  }
  if (static_cast<int>(kept.size()) == cs.num_eq) return;
  ConstraintSet out;
  const int total = static_cast<int>(kept.size()) + cs.size() - cs.num_eq;
  out.rows.resize(total, cs.rows.cols());
  out.rhs.resize(total);
  int k = 0;
  for (int i : kept) {
    out.rows.row(k) = cs.rows.row(i);
    out.rhs(k++) = cs.rhs(i);
    out.origin.push_back(cs.origin[static_cast<std::size_t>(i)]);
  }
  for (int i = cs.num_eq; i < cs.size(); ++i) {
    out.rows.row(k) = cs.rows.row(i);
    out.rhs(k++) = cs.rhs(i);
    out.origin.push_back(cs.origin[static_cast<std::size_t>(i)]);
  }
  out.num_eq = static_cast<int>(kept.size());
  cs = std::move(out);
}

bool feasible(const ConstraintSet& cs, const Eigen::VectorXd& x) {
  return max_violation(cs, x) <= 1e-9 * (1.0 + amax(cs.rhs));
}

}  // namespace

QpProblem QpProblem::unconstrained(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient) {
  const auto n = gradient.size();
  QpProblem p;
  p.hessian = hessian;
  p.gradient = gradient;
  p.eq_matrix.resize(0, n);
  p.eq_rhs.resize(0);
  p.ineq_matrix.resize(0, n);
  p.lower.resize(0);
  p.upper.resize(0);
  return p;
}

void QpProblem::validate() const {
  const auto n = gradient.size();
  if (hessian.rows() != n || hessian.cols() != n) throw std::invalid_argument("QpProblem: hessian size");
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, amax(hessian))) {
    throw std::invalid_argument("QpProblem: hessian not symmetric");
  }
  if (eq_matrix.rows() != eq_rhs.size() || (eq_matrix.rows() > 0 && eq_matrix.cols() != n)) {
    throw std::invalid_argument("QpProblem: equality dimensions");
  }
  if (ineq_matrix.rows() != lower.size() || lower.size() != upper.size() ||
      (ineq_matrix.rows() > 0 && ineq_matrix.cols() != n)) {
    throw std::invalid_argument("QpProblem: inequality dimensions");
  }
  for (int j = 0; j < lower.size(); ++j) {
    if (lower(j) > upper(j)) throw std::invalid_argument("QpProblem: lower bound exceeds upper bound");
  }
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

double kkt_residual(const QpProblem& p, const QpSolution& s) {
  const auto& x = s.x;
  Eigen::VectorXd stat = p.hessian * x + p.gradient;
  if (p.num_equalities() > 0) stat -= p.eq_matrix.transpose() * s.eq_multipliers;
  if (p.num_inequalities() > 0) stat -= p.ineq_matrix.transpose() * s.ineq_multipliers;
  double res = stat.size() > 0 ? amax(stat) : 0.0;
  if (p.num_equalities() > 0) res = std::max(res, (p.eq_matrix * x - p.eq_rhs).cwiseAbs().maxCoeff());
  if (p.num_inequalities() > 0) {
    const Eigen::VectorXd cx = p.ineq_matrix * x;
    for (int j = 0; j < p.num_inequalities(); ++j) {
      const double lo = p.lower(j);
      const double hi = p.upper(j);
      const double l = s.ineq_multipliers(j);
      if (finite_bound(lo)) res = std::max(res, lo - cx(j));
      if (finite_bound(hi)) res = std::max(res, cx(j) - hi);
      if (l > 0.0) {
        res = std::max(res, finite_bound(lo) ? l * std::abs(cx(j) - lo) : l);
      } else if (l < 0.0) {
        res = std::max(res, finite_bound(hi) ? -l * std::abs(cx(j) - hi) : -l);
      }
    }
  }
  return res;
}

QpSolution QpSolver::solve(const QpProblem& problem, const QpWarmStart* warm) {
  problem.validate();
  const int n = problem.num_variables();
  ConstraintSet cs = build_constraints(problem);

  QpSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);
  sol.eq_multipliers = Eigen::VectorXd::Zero(problem.num_equalities());
  sol.ineq_multipliers = Eigen::VectorXd::Zero(problem.num_inequalities());

  const ConstraintSet all = cs;
  drop_dependent_equalities(cs);

  LoopState st;
  st.x = Eigen::VectorXd::Zero(n);
  bool have_start = false;

  auto map_ineq = [&](int entry) {
    // Entry of QpActiveSet -> constraint index in cs.
    for (int i = cs.num_eq; i < cs.size(); ++i) {
      if (cs.origin[static_cast<std::size_t>(i)] == entry) return i;
    }
    return -1;
  };

  if (warm != nullptr) {
    std::vector<int> candidates;
    for (int e : warm->active.entries) {
      const int i = map_ineq(e);
      if (i >= 0) candidates.push_back(i);
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<int> working = independent_subset(cs, candidates);
    // Minimizer of the objective on the warm working set.
    const Eigen::MatrixXd at = working_normals(cs, working);
    const Subspace sub = decompose(at);
    Eigen::VectorXd x = project_affine(sub, at, working_rhs(cs, working),
                                       warm->x ? *warm->x : Eigen::VectorXd::Zero(n));
    if (sub.m < n) {
      Eigen::VectorXd step;
      Eigen::VectorXd ray;
      if (reduced_step(problem.hessian, sub.null(), problem.hessian * x + problem.gradient, step, ray)) {
        x += step;
      }
    }
    if (feasible(cs, x)) {
      st.x = x;
      st.working = working;
      have_start = true;
    } else if (warm->x && warm->x->size() == n) {
      Eigen::VectorXd xw = *warm->x;
      const Eigen::MatrixXd ae = working_normals(cs, {});
      xw = project_affine(decompose(ae), ae, working_rhs(cs, {}), xw);
      if (feasible(cs, xw)) {
        std::vector<int> touching;
        const Eigen::VectorXd ax = cs.rows * xw;
        for (int i = cs.num_eq; i < cs.size(); ++i) {
          if (std::abs(ax(i) - cs.rhs(i)) <= 1e-12 * (1.0 + std::abs(cs.rhs(i)))) touching.push_back(i);
        }
        st.x = xw;
        st.working = independent_subset(cs, touching);
        have_start = true;
      }
    }
  }

  if (!have_start) {
    const Eigen::MatrixXd ae = working_normals(cs, {});
    const Subspace sub = decompose(ae);
    Eigen::VectorXd x = project_affine(sub, ae, working_rhs(cs, {}), Eigen::VectorXd::Zero(n));
    if (all.num_eq > cs.num_eq) {
      // Redundant equality rows must agree with the kept ones.
      const Eigen::VectorXd r = all.rows.topRows(all.num_eq) * x - all.rhs.head(all.num_eq);
      if (amax(r) > 1e-9 * (1.0 + amax(all.rhs.head(all.num_eq)))) {
        sol.status = QpStatus::Infeasible;
        return sol;
      }
    }
    if (!feasible(cs, x)) {
      bool hit_limit = false;
      if (!find_feasible(cs, x, st.pivots, settings_.max_pivots, hit_limit)) {
        sol.x = x;
        sol.pivots = st.pivots;
        sol.status = hit_limit ? QpStatus::MaxIter : QpStatus::Infeasible;
        return sol;
      }
    }
    st.x = x;
  }

  const LoopResult r = run_active_set(problem.hessian, problem.gradient, cs, st, settings_.max_pivots);
  sol.pivots = st.pivots;
  sol.x = st.x;
  if (r == LoopResult::Unbounded) {
    sol.status = QpStatus::Unbounded;
    return sol;
  }
  if (r == LoopResult::MaxIter) {
    sol.status = QpStatus::MaxIter;
    return sol;
  }

  // Refine the primal point on the final working set and recover multipliers.
  const Eigen::MatrixXd at = working_normals(cs, st.working);
  const Subspace sub = decompose(at);
  Eigen::VectorXd x = project_affine(sub, at, working_rhs(cs, st.working), st.x);
  const Eigen::VectorXd grad0 = problem.hessian * x + problem.gradient;
  if (sub.m < n) {
    Eigen::VectorXd step;
    Eigen::VectorXd ray;
    if (reduced_step(problem.hessian, sub.null(), grad0, step, ray) && feasible(cs, x + step)) x += step;
  }
  const Eigen::VectorXd grad = problem.hessian * x + problem.gradient;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(sub.m);
  if (sub.m > 0) lambda = sub.r.triangularView<Eigen::Upper>().solve(sub.range().transpose() * grad);

  sol.x = x;
  for (int i = 0; i < cs.num_eq; ++i) {
    const int o = cs.origin[static_cast<std::size_t>(i)];
    if (o >= 0) {
      sol.eq_multipliers(o) = lambda(i);
    } else {
      sol.ineq_multipliers(-o - 1) = lambda(i);
      sol.active.entries.push_back(-o);
    }
  }
  for (std::size_t k = 0; k < st.working.size(); ++k) {
    const int o = cs.origin[static_cast<std::size_t>(st.working[k])];
    const double l = lambda(cs.num_eq + static_cast<int>(k));
    const int row = std::abs(o) - 1;
    sol.ineq_multipliers(row) = o > 0 ? l : -l;
    sol.active.entries.push_back(o);
  }
  sol.kkt_residual = kkt_residual(problem, sol);
  sol.status = sol.kkt_residual <= settings_.tolerance ? QpStatus::Optimal : QpStatus::MaxIter;
  return sol;
}

QpSolution solve_qp(const QpProblem& problem, const std::optional<QpWarmStart>& warm, QpSettings settings) {
  QpSolver solver(settings);
  return solver.solve(problem, warm ? &*warm : nullptr);
}

}  // namespace phasewalk
