#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>
#include <vector>

namespace phasewalk {

/// Bounds with magnitude at or above this value are treated as infinite.
inline constexpr double kQpInfinity = 1e19;

/// minimize 1/2 x'Hx + g'x  s.t.  A x = b,  lower <= C x <= upper
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq_matrix;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Problem with n variables and no constraints.
  static QpProblem unconstrained(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient);

  int num_variables() const { return static_cast<int>(gradient.size()); }
  int num_equalities() const { return static_cast<int>(eq_rhs.size()); }
  int num_inequalities() const { return static_cast<int>(lower.size()); }

  /// Throws std::invalid_argument on inconsistent dimensions, an asymmetric
  /// Hessian or crossed bounds.
  void validate() const;
};

enum class QpStatus { Optimal, MaxIter, Infeasible, Unbounded };

std::string_view to_string(QpStatus status);

/// An active inequality is encoded as +(row + 1) at its lower bound and
/// -(row + 1) at its upper bound.
struct QpActiveSet {
  std::vector<int> entries;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  /// One signed multiplier per inequality row: positive when the lower bound
  /// is active, negative when the upper bound is active.
  Eigen::VectorXd ineq_multipliers;
  QpStatus status = QpStatus::MaxIter;
  double kkt_residual = 0.0;
  int pivots = 0;
  QpActiveSet active;
};

struct QpWarmStart {
  std::optional<Eigen::VectorXd> x;
  QpActiveSet active;
};

struct QpSettings {
  int max_pivots = 1000;
  double tolerance = 1e-9;
};

/// Largest violation of stationarity, primal feasibility, dual feasibility
/// and complementary slackness at the given primal/dual pair.
double kkt_residual(const QpProblem& problem, const QpSolution& solution);

/// Dense primal active-set solver.
///
/// Feasibility is established by an auxiliary LP when the warm start does
/// not provide a feasible point. Working-set ties are broken by the lowest
/// constraint index. Instances keep scratch storage and must not be shared
/// between threads.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  QpSolution solve(const QpProblem& problem, const QpWarmStart* warm = nullptr);

  const QpSettings& settings() const { return settings_; }

 private:
  QpSettings settings_;
};

QpSolution solve_qp(const QpProblem& problem, const std::optional<QpWarmStart>& warm = std::nullopt,
                    QpSettings settings = {});

}  // namespace phasewalk
