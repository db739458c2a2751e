#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pfto/flow.hpp"

using namespace pfto;

namespace {

PhysicalParams basic_params() {
  PhysicalParams p;
  p.mu = 1.0;
  p.alpha_bar = 1.0;
  p.epsilon = 0.1;
  p.gamma = 1.0;
  return p;
}

// g = (y(1-y), 0): parabolic inflow/outflow on left and right, walls top/bottom
void set_poiseuille_bc(PhysicalParams& p) {
  BoundaryProfile jet;
  jet.type = BoundaryProfile::Type::parabolic_jet;
  jet.direction = Vec2(1, 0);
  jet.center = 0.5;
  jet.half_width = 0.5;
  jet.amplitude = 0.25;
  p.boundary[static_cast<int>(BoundaryTag::left)] = jet;
  p.boundary[static_cast<int>(BoundaryTag::right)] = jet;
}

Eigen::VectorXd ball_phase_field(const Mesh& m, const Vec2& c, double r, double width) {
  Eigen::VectorXd phi(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i) {
    const double s = ((m.vertices[i] - c).norm() - r) / width;
    phi[i] = std::clamp(s, -1.0, 1.0);
  }
  return phi;
}

}  // namespace

TEST_CASE("alpha_eps: values, clamping, monotonicity") {
  PhysicalParams p = basic_params();
  p.alpha_bar = 0.03;
  p.epsilon = 0.00025;
  CHECK(alpha_eps(1.0, p) == 0.0);
  CHECK(alpha_eps(-1.0, p) == doctest::Approx(120.0).epsilon(1e-14));
  CHECK(alpha_eps(-3.0, p) == alpha_eps(-1.0, p));  // clamp below
  CHECK(alpha_eps(2.0, p) == 0.0);                  // clamp above

  p.alpha_bar = 2.0;
  p.epsilon = 0.02;
  CHECK(alpha_eps(0.0, p) == doctest::Approx(50.0).epsilon(1e-14));

  // monotone decreasing in phi
  double prev = alpha_eps(-1.0, p);
  for (double s = -0.9; s <= 1.0; s += 0.1) {
    CHECK(alpha_eps(s, p) <= prev);
    prev = alpha_eps(s, p);
  }
  CHECK(alpha_eps_prime(0.5, p) == doctest::Approx(-2.0 / (2 * 0.02)));
  // interior one-sided slope at the bounds, zero strictly outside
  CHECK(alpha_eps_prime(1.0, p) == doctest::Approx(-2.0 / (2 * 0.02)));
  CHECK(alpha_eps_prime(-1.0, p) == doctest::Approx(-2.0 / (2 * 0.02)));
  CHECK(alpha_eps_prime(1.0 + 1e-9, p) == 0.0);
  CHECK(alpha_eps_prime(-1.0 - 1e-9, p) == 0.0);
}

TEST_CASE("k_omega formulas") {
  CHECK(k_omega_constant(0.68, 2) == doctest::Approx(0.4123105626).epsilon(1e-9));
  CHECK(k_omega_constant(0.68, 3) ==
        doctest::Approx(2.0 * std::sqrt(2.0) / 3.0 * std::pow(0.68, 1.0 / 6.0)).epsilon(1e-14));
  CHECK_THROWS(k_omega_constant(1.0, 4));
}

TEST_CASE("zero data gives the zero state") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  PhysicalParams p = basic_params();
  FlowSolver solver(m, p);
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
  FlowState s = solver.solve(phi);
  CHECK(s.u.cwiseAbs().maxCoeff() < 1e-13);
  CHECK(s.p.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Poiseuille flow is reproduced exactly") {
  Mesh m = generate_rectangle_mesh(1, 1, 8, 8);
  PhysicalParams p = basic_params();
  p.mu = 0.7;
  set_poiseuille_bc(p);
  FlowSolver solver(m, p);

  Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
  FlowState s = solver.solve(phi);

  Eigen::VectorXd u_exact = interpolate_p2_vector(
      m, [](const Vec2& x) { return Vec2(x.y() * (1.0 - x.y()), 0.0); });
  CHECK((s.u - u_exact).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::VectorXd p_exact(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i)
    p_exact[i] = -2.0 * p.mu * (m.vertices[i].x() - 0.5);
  CHECK((s.p - p_exact).cwiseAbs().maxCoeff() < 1e-10);

  // pressure mean zero
  CHECK(std::abs(integral_p1(m, s.p)) < 1e-10);

  // discrete divergence rows vanish
  SaddleOperator op = assemble_oseen(m, p.mu, alpha_field(phi, p), s.u, OseenForm::picard);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(op.size());
  x.head(op.n_u) = s.u;
  x.segment(op.n_u, op.n_p) = s.p;
  Eigen::VectorXd r = op.matrix() * x - op.rhs;
  CHECK(r.segment(op.n_u, op.n_p).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("uniqueness bound: zero state satisfied, report fields coherent") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 17, 4);
  PhysicalParams p = basic_params();
  FlowSolver solver(m, p);
  FlowState zero;
  zero.u = Eigen::VectorXd::Zero(2 * (m.n_vertices() + m.n_edges()));
  zero.p = Eigen::VectorXd::Zero(m.n_vertices());
  UniquenessReport rep = solver.check_uniqueness_bound(zero);
  CHECK(rep.satisfied);
  CHECK(rep.k_omega == doctest::Approx(0.4123105626).epsilon(1e-9));
  CHECK(rep.threshold == doctest::Approx(p.mu / rep.k_omega));
}

TEST_CASE("embedded obstacle: increasing alpha never speeds up the core") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 34, 8);
  // refine around the obstacle for a resolved core
  for (int round = 0; round < 2; ++round) {
    std::vector<int> marked;
    for (int t = 0; t < m.n_triangles(); ++t)
      if ((m.centroid(t) - Vec2(0.5, 0.2)).norm() < 0.22) marked.push_back(t);
    m = refine_marked(m, marked).mesh;
  }
  PhysicalParams p = basic_params();
  p.mu = 0.01;
  p.epsilon = 0.05;
  BoundaryProfile g;
  g.type = BoundaryProfile::Type::constant;
  g.value = Vec2(1, 0);
  for (auto& b : p.boundary) b = g;

  Eigen::VectorXd phi = ball_phase_field(m, Vec2(0.5, 0.2), 0.15, 0.03);
  double prev = 1e100;
  for (double abar : {0.1, 1.0, 10.0}) {
    PhysicalParams q = p;
    q.alpha_bar = abar;
    FlowSolver solver(m, q);
    FlowState s = solver.solve(phi);
    const double core = solver.max_speed_where(phi, s, -0.99);
    CHECK(core <= prev * (1.0 + 1e-9));
    prev = core;
  }
}

TEST_CASE("linearized state: zero direction, clamped region, finite differences") {
  Mesh m = generate_rectangle_mesh(1, 1, 6, 6);
  PhysicalParams p = basic_params();
  p.mu = 0.5;
  p.alpha_bar = 2.0;
  p.epsilon = 0.2;
  set_poiseuille_bc(p);
  FlowSolver solver(m, p);

  SUBCASE("delta == 0 gives w == 0") {
    Eigen::VectorXd phi = Eigen::VectorXd::Constant(m.n_vertices(), 0.3);
    FlowState s = solver.solve(phi);
    NewtonOperator op = solver.newton_operator(phi, s);
    auto [w, r] = solver.solve_linearized(phi, Eigen::VectorXd::Zero(m.n_vertices()), s, op);
    CHECK(w.cwiseAbs().maxCoeff() < 1e-13);
    CHECK(r.cwiseAbs().maxCoeff() < 1e-13);
  }

  SUBCASE("saturated phi == 1: linearization prices inward moves") {
    // at the bound only inward directions are admissible; the linearized
    // state matches one-sided difference quotients for them
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
    FlowState s = solver.solve(phi);
    NewtonOperator op = solver.newton_operator(phi, s);
    Eigen::VectorXd delta(m.n_vertices());
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    for (int i = 0; i < m.n_vertices(); ++i) delta[i] = -unif(rng);  // inward
    auto [w, r] = solver.solve_linearized(phi, delta, s, op);
    CHECK(w.cwiseAbs().maxCoeff() > 0.0);
    const double t = 1e-5;
    FlowState st = solver.solve(Eigen::VectorXd(phi + t * delta), &s);
    const double err = ((st.u - s.u) / t - w).cwiseAbs().maxCoeff();
    CHECK(err < 1e-3 * w.cwiseAbs().maxCoeff());
  }

  SUBCASE("strictly outside the box alpha is flat, so w == 0") {
    Eigen::VectorXd phi = Eigen::VectorXd::Constant(m.n_vertices(), 1.5);
    FlowState s = solver.solve(phi);  // clamps to the phi == 1 state
    NewtonOperator op = solver.newton_operator(phi, s);
    Eigen::VectorXd delta(m.n_vertices());
    for (int i = 0; i < m.n_vertices(); ++i) delta[i] = std::sin(7.0 * i);
    auto [w, r] = solver.solve_linearized(phi, delta, s, op);
    CHECK(w.cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("directional difference quotient converges at first order") {
    Eigen::VectorXd phi(m.n_vertices());
    Eigen::VectorXd delta(m.n_vertices());
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < m.n_vertices(); ++i) {
      const Vec2& x = m.vertices[i];
      phi[i] = 0.6 * std::sin(3 * x.x()) * std::cos(2 * x.y());
      delta[i] = unif(rng);
    }
    FlowState s = solver.solve(phi);
    NewtonOperator op = solver.newton_operator(phi, s);
    auto [w, r] = solver.solve_linearized(phi, delta, s, op);

    double prev_err = 1e100;
    for (double t : {1e-2, 1e-3, 1e-4}) {
      Eigen::VectorXd phi_t = phi + t * delta;
      FlowState st = solver.solve(phi_t, &s);
      const double err = ((st.u - s.u) / t - w).cwiseAbs().maxCoeff();
      CHECK(err < prev_err);
      prev_err = err;
    }
    CHECK(prev_err < 1e-3 * std::max(1.0, w.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("energy bound holds over random admissible phase fields") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 17, 4);
  PhysicalParams p = basic_params();
  p.mu = 0.1;
  p.alpha_bar = 1.0;
  p.epsilon = 0.1;
  BoundaryProfile g;
  g.type = BoundaryProfile::Type::constant;
  g.value = Vec2(1, 0);
  for (auto& b : p.boundary) b = g;
  FlowSolver solver(m, p);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd phi(m.n_vertices());
    for (int i = 0; i < m.n_vertices(); ++i) phi[i] = unif(rng);
    FlowState s = solver.solve(phi);
    const double h1 = std::sqrt(std::pow(solver.grad_norm_l2(s), 2) +
                                std::pow(s.u.norm(), 2));  // crude upper proxy for ||u||_H1
    CHECK(h1 < 50.0);  // regression bound for this data
  }
}

TEST_CASE("nonconvergence is reported") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  PhysicalParams p = basic_params();
  p.mu = 1e-4;  // convection dominated enough that zero iterations fail
  set_poiseuille_bc(p);
  FlowSolver solver(m, p);
  solver.options.max_picard = 0;
  solver.options.max_newton = 0;
  solver.options.allow_alpha_continuation = false;
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(m.n_vertices());
  CHECK_THROWS_AS(solver.solve(phi), SolverError);
}

TEST_CASE("flux-incompatible data without rescalable segments is rejected") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  PhysicalParams p = basic_params();
  BoundaryProfile in;
  in.type = BoundaryProfile::Type::constant;
  in.value = Vec2(1, 0);
  p.boundary[static_cast<int>(BoundaryTag::left)] = in;  // inflow, no outflow
  CHECK_THROWS_AS(FlowSolver(m, p), std::invalid_argument);
}
