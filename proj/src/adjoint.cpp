#include "pfto/adjoint.hpp"

namespace pfto {

double compute_theta(const Mesh& mesh, const FunctionalValue& total) {
  return -total.d_state_p.sum() / mesh.total_area();
}

FunctionalValue combine_with_multipliers(const Mesh& mesh, const FunctionalValue& objective,
                                         const std::vector<FunctionalValue>& constraints,
                                         const Eigen::VectorXd& lambdas) {
  if (static_cast<int>(constraints.size()) != lambdas.size())
    throw std::invalid_argument("combine_with_multipliers: size mismatch");
  FunctionalValue total = FunctionalValue::zero(mesh);
  total.axpy(1.0, objective);
  for (std::size_t i = 0; i < constraints.size(); ++i)
    total.axpy(-lambdas[static_cast<int>(i)], constraints[i]);
  return total;
}

AdjointState solve_adjoint(const NewtonOperator& op, const FunctionalValue& total) {
  if (total.d_state_u.size() != op.n_u || total.d_state_p.size() != op.n_p)
    throw std::invalid_argument("solve_adjoint: derivative data size mismatch");

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(op.size());
  rhs.head(op.n_u) = total.d_state_u;
  for (int d = 0; d < op.n_u; ++d)
    if (op.dirichlet_mask[d]) rhs[d] = 0.0;  // q has zero trace
  rhs.segment(op.n_u, op.n_p) = total.d_state_p;

  const Eigen::VectorXd y = op.solver->solve_transposed(rhs);

  AdjointState adj;
  adj.q = y.head(op.n_u);
  adj.pi = y.segment(op.n_u, op.n_p);
  adj.theta = -y[op.size() - 1];  // transposed pressure-mean multiplier
  return adj;
}

namespace {

/// Assembles the dual of the density -alpha'(phi) (u . q) against P1 tests.
Eigen::VectorXd alpha_sensitivity_dual(const Mesh& mesh, const Eigen::VectorXd& phi,
                                       const FlowState& state, const Eigen::VectorXd& q,
                                       const PhysicalParams& params) {
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(mesh.n_vertices());
  const QuadratureRule& quad = QuadratureRule::triangle(6);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    const auto nodes = p2_nodes(mesh, t);
    for (int k = 0; k < quad.size(); ++k) {
      const auto& L = quad.points[k];
      const double w = quad.weights[k] * geo.area;
      const double phi_q = L[0] * phi[geo.v[0]] + L[1] * phi[geo.v[1]] + L[2] * phi[geo.v[2]];
      const double ap = alpha_eps_prime(phi_q, params);
      if (ap == 0.0) continue;
      p2_basis(L, geo, N, gN);
      Vec2 u_q(0, 0), q_q(0, 0);
      for (int j = 0; j < 6; ++j) {
        u_q.x() += N[j] * state.u[2 * nodes[j]];
        u_q.y() += N[j] * state.u[2 * nodes[j] + 1];
        q_q.x() += N[j] * q[2 * nodes[j]];
        q_q.y() += N[j] * q[2 * nodes[j] + 1];
      }
      const double density = -ap * u_q.dot(q_q);
      for (int i = 0; i < 3; ++i) dual[geo.v[i]] += w * density * L[i];
    }
  }
  return dual;
}

}  // namespace

ReducedGradient reduced_gradient(const Mesh& mesh, const Eigen::VectorXd& phi,
                                 const FlowState& state, const AdjointState& adjoint,
                                 const FunctionalValue& total, const PhysicalParams& params) {
  ReducedGradient g;
  g.l2_dual = total.d_phi_l2 + alpha_sensitivity_dual(mesh, phi, state, adjoint.q, params);
  g.grad_dual = total.d_phi_grad;
  return g;
}

double adjoint_route_derivative(const Mesh& mesh, const Eigen::VectorXd& phi,
                                const FlowState& state, const AdjointState& adjoint,
                                const FunctionalValue& total, const PhysicalParams& params,
                                const Eigen::VectorXd& delta) {
  const Eigen::VectorXd dual = alpha_sensitivity_dual(mesh, phi, state, adjoint.q, params);
  return total.d_phi_total().dot(delta) + dual.dot(delta);
}

double linearized_route_derivative(const FunctionalValue& total, const Eigen::VectorXd& delta,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& r) {
  return total.d_phi_total().dot(delta) + total.d_state_u.dot(w) + total.d_state_p.dot(r);
}

}  // namespace pfto
