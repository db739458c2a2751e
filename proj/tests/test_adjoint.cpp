#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pfto/adjoint.hpp"

using namespace pfto;

namespace {

struct DragSetup {
  Mesh mesh;
  PhysicalParams params;
  Vec2 a{1, 0};

  DragSetup() {
    mesh = generate_rectangle_mesh(1.7, 0.4, 17, 4);
    for (int round = 0; round < 2; ++round) {
      std::vector<int> marked;
      for (int t = 0; t < mesh.n_triangles(); ++t)
        if ((mesh.centroid(t) - Vec2(0.5, 0.2)).norm() < 0.3) marked.push_back(t);
      mesh = refine_marked(mesh, marked).mesh;
    }
    params.mu = 0.01;
    params.alpha_bar = 0.3;
    params.epsilon = 0.05;
    params.gamma = 0.01;
    BoundaryProfile g;
    g.type = BoundaryProfile::Type::constant;
    g.value = Vec2(1, 0);
    for (auto& b : params.boundary) b = g;
  }

  /// Interior iterate: saturated ball profile scaled into the open box.
  Eigen::VectorXd interior_phi(double margin = 0.85) const {
    Eigen::VectorXd phi(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      const double s = ((mesh.vertices[i] - Vec2(0.5, 0.2)).norm() - 0.12) / 0.06;
      phi[i] = margin * std::clamp(s, -1.0, 1.0);
    }
    return phi;
  }

  /// Drag-style objective: penalty + Ginzburg-Landau + diffuse force.
  FunctionalValue objective(const Eigen::VectorXd& phi, const FlowState& s) const {
    FunctionalValue total = FunctionalValue::zero(mesh);
    total.axpy(1.0, eval_ginzburg_landau(mesh, phi, params.epsilon, params.gamma, params.c0));
    total.axpy(1.0, eval_penalty_hat_alpha(mesh, phi, s, params));
    total.axpy(1.0, eval_diffuse_surface_force(mesh, phi, s, a, params.mu));
    return total;
  }
};

Eigen::VectorXd random_direction(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = unif(rng);
  return v;
}

}  // namespace

TEST_CASE("adjoint with zero data vanishes") {
  DragSetup ds;
  PhysicalParams p = ds.params;
  p.hat_alpha_mode = PhysicalParams::HatAlphaMode::zero;
  FlowSolver solver(ds.mesh, p);
  Eigen::VectorXd phi = ds.interior_phi();
  FlowState s = solver.solve(phi);
  NewtonOperator op = solver.newton_operator(phi, s);

  FunctionalValue zero = FunctionalValue::zero(ds.mesh);
  AdjointState adj = solve_adjoint(op, zero);
  CHECK(adj.q.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(adj.pi.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(adj.theta == 0.0);
}

TEST_CASE("theta: formula instantiation for the pure surface force") {
  DragSetup ds;
  FlowSolver solver(ds.mesh, ds.params);
  Eigen::VectorXd phi = ds.interior_phi();
  FlowState s = solver.solve(phi);

  FunctionalValue force = eval_diffuse_surface_force(ds.mesh, phi, s, ds.a, ds.params.mu);
  // D3 h = -a . grad phi, so theta = |Omega|^{-1} int (1/2) a . grad phi
  double expected = 0.0;
  for (int t = 0; t < ds.mesh.n_triangles(); ++t)
    expected += ds.mesh.triangle_area(t) * 0.5 * ds.a.dot(grad_p1(ds.mesh, phi, t));
  expected /= ds.mesh.total_area();
  CHECK(compute_theta(ds.mesh, force) == doctest::Approx(expected).epsilon(1e-12));

  // solved theta agrees with the quadrature formula
  NewtonOperator op = solver.newton_operator(phi, s);
  FunctionalValue total = ds.objective(phi, s);
  AdjointState adj = solve_adjoint(op, total);
  CHECK(adj.theta == doctest::Approx(compute_theta(ds.mesh, total)).epsilon(1e-9));

  // divergence data has zero mean once theta is subtracted: since q has zero
  // trace, int div q dx must vanish, and div q = g holds weakly
  double int_div_q = 0.0;
  const QuadratureRule& quad = QuadratureRule::triangle(2);
  for (int t = 0; t < ds.mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(ds.mesh, t);
    for (int q = 0; q < quad.size(); ++q)
      int_div_q +=
          quad.weights[q] * geo.area * grad_p2_vector(ds.mesh, adj.q, t, quad.points[q]).trace();
  }
  CHECK(std::abs(int_div_q) < 1e-10);
}

TEST_CASE("adjoint rhs linearity: scaling the velocity data scales q") {
  DragSetup ds;
  FlowSolver solver(ds.mesh, ds.params);
  Eigen::VectorXd phi = ds.interior_phi();
  FlowState s = solver.solve(phi);
  NewtonOperator op = solver.newton_operator(phi, s);

  FunctionalValue penalty = eval_penalty_hat_alpha(ds.mesh, phi, s, ds.params);
  AdjointState a1 = solve_adjoint(op, penalty);
  FunctionalValue twice = FunctionalValue::zero(ds.mesh);
  twice.axpy(2.0, penalty);
  AdjointState a2 = solve_adjoint(op, twice);
  CHECK((a2.q - 2.0 * a1.q).cwiseAbs().maxCoeff() < 1e-10 * a1.q.cwiseAbs().maxCoeff());
}

TEST_CASE("duality: adjoint route equals linearized route to solver precision") {
  DragSetup ds;
  FlowSolver solver(ds.mesh, ds.params);
  Eigen::VectorXd phi = ds.interior_phi();
  FlowState s = solver.solve(phi);
  NewtonOperator op = solver.newton_operator(phi, s);
  FunctionalValue total = ds.objective(phi, s);
  AdjointState adj = solve_adjoint(op, total);

  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    Eigen::VectorXd delta = random_direction(ds.mesh.n_vertices(), seed);
    auto [w, r] = solver.solve_linearized(phi, delta, s, op);
    const double via_adjoint =
        adjoint_route_derivative(ds.mesh, phi, s, adj, total, ds.params, delta);
    const double via_linearized = linearized_route_derivative(total, delta, w, r);
    const double scale = std::abs(via_adjoint) + std::abs(via_linearized) + 1e-12;
    CHECK(std::abs(via_adjoint - via_linearized) < 1e-9 * scale);
  }
}

TEST_CASE("keystone: adjoint gradient matches finite differences of the reduced objective") {
  DragSetup ds;
  FlowSolver solver(ds.mesh, ds.params);
  Eigen::VectorXd phi = ds.interior_phi();
  FlowState s = solver.solve(phi);
  NewtonOperator op = solver.newton_operator(phi, s);
  FunctionalValue total = ds.objective(phi, s);
  AdjointState adj = solve_adjoint(op, total);
  ReducedGradient grad = reduced_gradient(ds.mesh, phi, s, adj, total, ds.params);

  auto reduced_j = [&](const Eigen::VectorXd& f) {
    FlowState st = solver.solve(f, &s);
    return ds.objective(f, st).value;
  };

  int passed = 0;
  for (unsigned seed = 100; seed < 110; ++seed) {
    Eigen::VectorXd delta = random_direction(ds.mesh.n_vertices(), seed);
    const double predicted = grad.total().dot(delta);
    double best_err = 1e300;
    for (double t : {1e-3, 1e-4, 1e-5}) {
      const double fd = (reduced_j(phi + t * delta) - reduced_j(phi - t * delta)) / (2 * t);
      best_err = std::min(best_err, std::abs(fd - predicted) /
                                        std::max({1e-14, std::abs(fd), std::abs(predicted)}));
    }
    if (best_err <= 1e-3) ++passed;
  }
  CHECK(passed == 10);
}

TEST_CASE("gamma-only problem: gradient is the Ginzburg-Landau dual") {
  Mesh m = generate_rectangle_mesh(1, 1, 6, 6);
  PhysicalParams p;
  p.mu = 1;
  p.alpha_bar = 1;
  p.epsilon = 0.1;
  p.gamma = 0.4;
  Eigen::VectorXd phi(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i)
    phi[i] = 0.5 * std::sin(3.0 * m.vertices[i].x()) * std::cos(4.0 * m.vertices[i].y());

  FunctionalValue gl = eval_ginzburg_landau(m, phi, p.epsilon, p.gamma, p.c0);
  FlowState zero_state;
  zero_state.u = Eigen::VectorXd::Zero(2 * (m.n_vertices() + m.n_edges()));
  zero_state.p = Eigen::VectorXd::Zero(m.n_vertices());
  AdjointState zero_adj;
  zero_adj.q = zero_state.u;
  zero_adj.pi = zero_state.p;
  ReducedGradient g = reduced_gradient(m, phi, zero_state, zero_adj, gl, p);

  // L2 part: -(gamma/(2 c0 eps)) phi against tests; grad part: (gamma eps/(2 c0)) grad phi
  SparseMatrix M = assemble_scalar(ScalarKind::mass, ScalarSpace::p1(m));
  SparseMatrix K = assemble_scalar(ScalarKind::stiffness, ScalarSpace::p1(m));
  const double cl2 = -p.gamma / (2 * p.c0 * p.epsilon);
  const double cgr = p.gamma * p.epsilon / (2 * p.c0);
  CHECK((g.l2_dual - cl2 * (M * phi)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.grad_dual - cgr * (K * phi)).cwiseAbs().maxCoeff() < 1e-12);
}
