/// @file adjoint.hpp
/// @brief Adjoint system, pressure-mean multiplier theta, and the reduced
///        gradient of the Lagrangian.
///
/// The adjoint solve uses the exact transpose of the constrained Newton
/// operator of the state equation. This makes the discrete duality identity
///   < dJ/d(u,p), (w,r) > = - int alpha'(phi) delta u . q
/// hold to solver precision, and the divergence equation div q = g with the
/// mean correction theta emerges from the transposed pressure-mean row.

#pragma once

#include "pfto/flow.hpp"
#include "pfto/functionals.hpp"

namespace pfto {

struct AdjointState {
  Eigen::VectorXd q;   // P2 vector dofs, zero trace
  Eigen::VectorXd pi;  // P1 dofs, zero mean
  double theta = 0.0;
};

struct MultiplierState {
  Eigen::VectorXd lambdas;      // one per constraint (KKT orientation, ineq >= 0)
  std::vector<char> active;     // in the final working set
  Eigen::VectorXd residuals;    // constraint values G_i
  Eigen::VectorXd slackness;    // lambda_i * G_i
};

/// theta = |Omega|^{-1} int ( - D4-type density ) dx, evaluated from the
/// assembled pressure dual (partition of unity).
double compute_theta(const Mesh& mesh, const FunctionalValue& total);

/// Total Lagrangian derivative data: objective - sum_i lambda_i G_i.
FunctionalValue combine_with_multipliers(const Mesh& mesh, const FunctionalValue& objective,
                                         const std::vector<FunctionalValue>& constraints,
                                         const Eigen::VectorXd& lambdas);

/// Solves the transposed Newton system for (q, pi, theta).
AdjointState solve_adjoint(const NewtonOperator& op, const FunctionalValue& total);

struct ReducedGradient {
  Eigen::VectorXd l2_dual;    // paired with test functions
  Eigen::VectorXd grad_dual;  // paired with test-function gradients
  Eigen::VectorXd total() const { return l2_dual + grad_dual; }
};

/// FONC dual: total phi-derivatives of the Lagrangian plus the adjoint
/// term -alpha'(phi) u . q.
ReducedGradient reduced_gradient(const Mesh& mesh, const Eigen::VectorXd& phi,
                                 const FlowState& state, const AdjointState& adjoint,
                                 const FunctionalValue& total, const PhysicalParams& params);

/// Directional derivative via the adjoint route:
/// < d_phi_total, delta > - int alpha'(phi) delta u . q.
double adjoint_route_derivative(const Mesh& mesh, const Eigen::VectorXd& phi,
                                const FlowState& state, const AdjointState& adjoint,
                                const FunctionalValue& total, const PhysicalParams& params,
                                const Eigen::VectorXd& delta);

/// Directional derivative via the linearized-state route:
/// < d_phi_total, delta > + < d_state, (w, r) >.
double linearized_route_derivative(const FunctionalValue& total, const Eigen::VectorXd& delta,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& r);

}  // namespace pfto
