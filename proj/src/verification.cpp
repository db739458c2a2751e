#include "pfto/verification.hpp"

#include <cmath>
#include <fstream>

namespace pfto {

// ---------------------------------------------------------------------------
// FD gradient oracle
// ---------------------------------------------------------------------------

FdGradientReport fd_reduced_gradient(const Evaluator& eval, const Eigen::VectorXd& phi,
                                     const Eigen::VectorXd& direction,
                                     const std::vector<double>& steps) {
  double tmax = 0.0;
  for (double t : steps) tmax = std::max(tmax, t);
  for (int i = 0; i < phi.size(); ++i)
    if (std::abs(phi[i]) + tmax * std::abs(direction[i]) >= 1.0)
      throw std::invalid_argument(
          "fd_reduced_gradient: steps leave the interior of the box at node " +
          std::to_string(i));

  FlowState state = eval.solve_state(phi);
  const ReducedGradient grad = eval.gradient(phi, state);

  FdGradientReport rep;
  rep.adjoint_value = grad.total().dot(direction);
  rep.best_relative_error = 1e300;
  for (double t : steps) {
    const double jp = eval.reduced_objective(phi + t * direction);
    const double jm = eval.reduced_objective(phi - t * direction);
    FdConvergenceRow row;
    row.step = t;
    row.fd_value = (jp - jm) / (2.0 * t);
    row.relative_discrepancy =
        std::abs(row.fd_value - rep.adjoint_value) /
        std::max({1e-300, std::abs(row.fd_value), std::abs(rep.adjoint_value)});
    rep.table.push_back(row);
    if (row.relative_discrepancy < rep.best_relative_error) {
      rep.best_relative_error = row.relative_discrepancy;
      rep.plateau = row.fd_value;
      rep.best_step = t;
    }
  }
  return rep;
}

void write_fd_table_csv(const std::string& path, const FdGradientReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_fd_table_csv: cannot open " + path);
  os.precision(17);
  os << "step,fd_value,adjoint_value,relative_discrepancy\n";
  for (const auto& row : report.table)
    os << row.step << "," << row.fd_value << "," << report.adjoint_value << ","
       << row.relative_discrepancy << "\n";
}

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

namespace {

// u = curl of psi = (1/pi) sin^2(pi x) sin^2(pi y): divergence free with
// zero trace on the unit square; p mean-zero by construction.
Vec2 mms_velocity(const Vec2& x) {
  const double sx = std::sin(M_PI * x.x()), sy = std::sin(M_PI * x.y());
  return Vec2(sx * sx * std::sin(2 * M_PI * x.y()), -std::sin(2 * M_PI * x.x()) * sy * sy);
}

Eigen::Matrix2d mms_velocity_gradient(const Vec2& x) {
  const double sx = std::sin(M_PI * x.x()), sy = std::sin(M_PI * x.y());
  const double s2x = std::sin(2 * M_PI * x.x()), s2y = std::sin(2 * M_PI * x.y());
  const double c2x = std::cos(2 * M_PI * x.x()), c2y = std::cos(2 * M_PI * x.y());
  Eigen::Matrix2d J;
  J(0, 0) = M_PI * s2x * s2y;
  J(0, 1) = 2 * M_PI * sx * sx * c2y;
  J(1, 0) = -2 * M_PI * c2x * sy * sy;
  J(1, 1) = -M_PI * s2x * s2y;
  return J;
}

double mms_pressure(const Vec2& x) { return std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()); }

Vec2 mms_body_force(const Vec2& x, double mu) {
  const double sx = std::sin(M_PI * x.x()), sy = std::sin(M_PI * x.y());
  const double s2x = std::sin(2 * M_PI * x.x()), s2y = std::sin(2 * M_PI * x.y());
  const double c2x = std::cos(2 * M_PI * x.x()), c2y = std::cos(2 * M_PI * x.y());
  const double pi2 = M_PI * M_PI;

  const Vec2 lap(2 * pi2 * c2x * s2y - 4 * pi2 * sx * sx * s2y,
                 4 * pi2 * s2x * sy * sy - 2 * pi2 * s2x * c2y);
  const Vec2 grad_p(M_PI * std::cos(M_PI * x.x()) * std::cos(M_PI * x.y()),
                    -M_PI * std::sin(M_PI * x.x()) * std::sin(M_PI * x.y()));
  const Vec2 u = mms_velocity(x);
  const Eigen::Matrix2d J = mms_velocity_gradient(x);
  const Vec2 conv = J * u;  // ((u . grad) u)_i = sum_j u_j dU_i/dx_j
  return -mu * lap + conv + grad_p;
}

}  // namespace

ManufacturedReport manufactured_flow_errors(int levels, double mu) {
  ManufacturedReport rep;
  int n = 8;
  for (int level = 0; level < levels; ++level, n *= 2) {
    Mesh mesh = generate_rectangle_mesh(1.0, 1.0, n, n);
    PhysicalParams params;
    params.mu = mu;
    params.alpha_bar = 1.0;
    params.epsilon = 0.1;
    params.gamma = 1.0;
    params.body_force = [mu](const Vec2& x) { return mms_body_force(x, mu); };
    // u = 0 on the whole boundary
    for (auto& b : params.boundary) b.type = BoundaryProfile::Type::no_slip;

    FlowSolver solver(mesh, params);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(mesh.n_vertices());
    FlowState s = solver.solve(phi);

    const QuadratureRule& quad = QuadratureRule::triangle(6);
    double err_h1 = 0.0, err_p = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const ElementGeometry geo = element_geometry(mesh, t);
      for (int q = 0; q < quad.size(); ++q) {
        const auto& L = quad.points[q];
        const double w = quad.weights[q] * geo.area;
        const Vec2 x = L[0] * mesh.vertices[geo.v[0]] + L[1] * mesh.vertices[geo.v[1]] +
                       L[2] * mesh.vertices[geo.v[2]];
        const Eigen::Matrix2d dJ = grad_p2_vector(mesh, s.u, t, L) - mms_velocity_gradient(x);
        err_h1 += w * dJ.squaredNorm();
        const double dp = eval_p1(mesh, s.p, t, L) - mms_pressure(x);
        err_p += w * dp * dp;
      }
    }
    ConvergenceRow row;
    row.cells = n;
    row.h = mesh.max_edge_length();
    row.err_u_h1 = std::sqrt(err_h1);
    row.err_p_l2 = std::sqrt(err_p);
    rep.rows.push_back(row);
  }
  if (rep.rows.size() >= 2) {
    const auto& a = rep.rows[rep.rows.size() - 2];
    const auto& b = rep.rows.back();
    rep.rate_u_h1 = std::log2(a.err_u_h1 / b.err_u_h1);
    rep.rate_p_l2 = std::log2(a.err_p_l2 / b.err_p_l2);
  }
  return rep;
}

double poiseuille_discrete_error(int n, double mu) {
  Mesh mesh = generate_rectangle_mesh(1.0, 1.0, n, n);
  PhysicalParams params;
  params.mu = mu;
  params.alpha_bar = 1.0;
  params.epsilon = 0.1;
  params.gamma = 1.0;
  BoundaryProfile jet;
  jet.type = BoundaryProfile::Type::parabolic_jet;
  jet.direction = Vec2(1, 0);
  jet.center = 0.5;
  jet.half_width = 0.5;
  jet.amplitude = 0.25;
  params.boundary[static_cast<int>(BoundaryTag::left)] = jet;
  params.boundary[static_cast<int>(BoundaryTag::right)] = jet;

  FlowSolver solver(mesh, params);
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(mesh.n_vertices());
  FlowState s = solver.solve(phi);

  const Eigen::VectorXd u_exact =
      interpolate_p2_vector(mesh, [](const Vec2& x) { return Vec2(x.y() * (1 - x.y()), 0.0); });
  double err = (s.u - u_exact).cwiseAbs().maxCoeff();
  for (int i = 0; i < mesh.n_vertices(); ++i)
    err = std::max(err, std::abs(s.p[i] + 2 * mu * (mesh.vertices[i].x() - 0.5)));
  return err;
}

void write_convergence_csv(const std::string& path, const ManufacturedReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_convergence_csv: cannot open " + path);
  os.precision(17);
  os << "cells,h,err_u_h1,err_p_l2\n";
  for (const auto& row : report.rows)
    os << row.cells << "," << row.h << "," << row.err_u_h1 << "," << row.err_p_l2 << "\n";
}

// ---------------------------------------------------------------------------
// Duality identity
// ---------------------------------------------------------------------------

DualityResidual duality_check(const Evaluator& eval, const Eigen::VectorXd& phi,
                              const FlowState& state, const Eigen::VectorXd& delta) {
  const FunctionalValue total = eval.objective(phi, state);
  DualityResidual out;
  if (!eval.needs_state()) {
    out.adjoint_route = out.linearized_route = total.d_phi_total().dot(delta);
    out.residual = 0.0;
    out.scale = std::abs(out.adjoint_route) + 1e-300;
    return out;
  }
  NewtonOperator op = eval.newton_operator(phi, state);
  AdjointState adj = solve_adjoint(op, total);
  auto [w, r] = eval.flow().solve_linearized(phi, delta, state, op);

  out.adjoint_route =
      adjoint_route_derivative(eval.mesh(), phi, state, adj, total, eval.params(), delta);
  out.linearized_route = linearized_route_derivative(total, delta, w, r);
  out.residual = std::abs(out.adjoint_route - out.linearized_route);
  out.scale = std::abs(out.adjoint_route) + std::abs(out.linearized_route) +
              total.d_state_u.cwiseAbs().maxCoeff() * (1.0 + w.cwiseAbs().maxCoeff()) + 1e-300;
  return out;
}

}  // namespace pfto
