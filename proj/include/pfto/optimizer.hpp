/// @file optimizer.hpp
/// @brief VMPT outer loop: metric Riesz representative, PDAS projection
///        onto box + linear integral constraints, Armijo line search,
///        adaptation control.

#pragma once

#include <functional>
#include <string>

#include "pfto/adjoint.hpp"

namespace pfto {

struct ArmijoParams {
  double initial_tau = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 30;
};

struct OptimizerConfig {
  enum class Metric { h1_scaled, l2 };
  Metric metric = Metric::h1_scaled;
  ArmijoParams armijo;
  double step_tol = 1e-6;            // relative metric step norm
  double slackness_tol = 1e-8;
  int max_outer_iters = 400;         // per mesh round
  double inactive_fraction_floor = 0.02;
  int max_dofs = 10000;              // initial dof budget (phi dofs)
  double dof_growth = 1.2;           // budget growth per epsilon halving
  double dorfler_fraction = 0.5;
};

// ---------------------------------------------------------------------------
// PDAS projection
// ---------------------------------------------------------------------------

/// a . phi = b (equality) or a . phi >= b, with `a` an assembled dual vector.
struct LinearConstraint {
  Eigen::VectorXd a;
  double b = 0.0;
  bool equality = false;
  std::string label;
};

struct PdasOptions {
  int max_iterations = 200;
  double kkt_tol = 1e-10;
  double box_lo = -1.0;
  double box_hi = 1.0;
};

struct PdasFailure : std::runtime_error {
  explicit PdasFailure(const std::string& msg) : std::runtime_error(msg) {}
};

struct ProjectionResult {
  Eigen::VectorXd phi;
  Eigen::VectorXd lambda;        // per constraint; zero off the working set
  std::vector<char> working;     // inequality working set + equalities
  int pdas_iterations = 0;
};

/// Metric projection of `candidate` onto the box intersected with the
/// linear constraints, by a primal-dual active-set iteration on the box and
/// an outer working-set loop on the inequalities. Throws PdasFailure when
/// the constraint system is infeasible on the inactive set or cycling.
/// `warm_working` seeds the inequality working set.
ProjectionResult pdas_project(const Eigen::VectorXd& candidate, const SparseMatrix& metric,
                              const std::vector<LinearConstraint>& constraints,
                              const PdasOptions& opts = {},
                              const std::vector<char>* warm_working = nullptr);

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  std::vector<double> constraint_values;
  std::vector<double> multipliers;
  double tau = 0.0;
  double step_norm = 0.0;
  int dofs = 0;
  int active_nodes = 0;
  double inactive_fraction = 0.0;
  double epsilon = 0.0;
};

struct StageRecord {
  double epsilon = 0.0;
  int dof_budget = 0;
  int final_dofs = 0;
  int iterations = 0;
  bool stationary = false;
};

struct ProblemSpec;  // problem.hpp
class Evaluator;

struct OptimizeMonitor {
  /// Called after every accepted step (and once at the initial iterate).
  std::function<void(const IterationRecord&, const Mesh&, const Eigen::VectorXd& phi,
                     const FlowState*)>
      on_iterate;
};

struct OptimizeOutcome {
  Mesh mesh;
  Eigen::VectorXd phi;
  FlowState state;  // empty when the problem has no flow terms
  bool has_state = false;
  MultiplierState multipliers;
  std::vector<IterationRecord> history;
  std::vector<StageRecord> stages;
  bool stationary = false;
  double final_epsilon = 0.0;
  FluxReport flux;
};

/// Runs the full VMPT loop with phi-jump adaptation and the epsilon
/// continuation schedule of the configuration.
OptimizeOutcome optimize(const ProblemSpec& spec, const OptimizeMonitor* monitor = nullptr);

// ---------------------------------------------------------------------------
// Constraint-qualification diagnostic
// ---------------------------------------------------------------------------

struct ConstraintQualificationReport {
  std::vector<std::string> active_labels;
  int n_active = 0;
  int sampled_rank = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool regular_point_evidence = true;  // trivially regular with no active set
};

/// Samples admissible directions psi - phi and reports the rank of the
/// active-constraint derivative matrix restricted to them. A heuristic
/// check of the Zowe-Kurcyusz condition, not a proof.
ConstraintQualificationReport constraint_qualification_diagnostic(
    const Evaluator& eval, const Eigen::VectorXd& phi, const FlowState& state, unsigned seed,
    int extra_directions = 4);

}  // namespace pfto
