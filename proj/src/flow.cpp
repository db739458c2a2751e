#include "pfto/flow.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace pfto {

// ---------------------------------------------------------------------------
// Boundary data & parameters
// ---------------------------------------------------------------------------

Vec2 BoundaryProfile::eval(const Vec2& x, BoundaryTag tag) const {
  switch (type) {
    case Type::no_slip:
      return {0, 0};
    case Type::constant:
      return value;
    case Type::parabolic_jet: {
      const double t =
          (tag == BoundaryTag::bottom || tag == BoundaryTag::top) ? x.x() : x.y();
      const double s = (t - center) / half_width;
      const double profile = std::max(1.0 - s * s, 0.0);
      return amplitude * profile * direction;
    }
  }
  return {0, 0};
}

void PhysicalParams::validate() const {
  if (!(mu > 0)) throw std::invalid_argument("params: mu must be positive");
  if (!(alpha_bar > 0)) throw std::invalid_argument("params: alpha_bar must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("params: epsilon must be positive");
  if (!(gamma > 0)) throw std::invalid_argument("params: gamma must be positive");
  if (!(c0 > 0)) throw std::invalid_argument("params: c0 must be positive");
}

double alpha_eps(double phi_value, const PhysicalParams& p) {
  const double s = std::clamp(phi_value, -1.0, 1.0);
  return p.alpha_bar * (1.0 - s) / (2.0 * p.epsilon);
}

double alpha_eps_prime(double phi_value, const PhysicalParams& p) {
  // zero on the flat extension strictly outside [-1,1]; at the bounds the
  // interior (one-sided) slope applies -- the admissible set only permits
  // inward moves there, and the reduced gradient must price them
  if (phi_value < -1.0 - 1e-12 || phi_value > 1.0 + 1e-12) return 0.0;
  return -p.alpha_bar / (2.0 * p.epsilon);
}

double hat_alpha_eps(double phi_value, const PhysicalParams& p) {
  return p.hat_alpha_mode == PhysicalParams::HatAlphaMode::zero ? 0.0 : alpha_eps(phi_value, p);
}

double hat_alpha_eps_prime(double phi_value, const PhysicalParams& p) {
  return p.hat_alpha_mode == PhysicalParams::HatAlphaMode::zero
             ? 0.0
             : alpha_eps_prime(phi_value, p);
}

Eigen::VectorXd alpha_field(const Eigen::VectorXd& phi, const PhysicalParams& p) {
  Eigen::VectorXd a(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) a[i] = alpha_eps(phi[i], p);
  return a;
}

double k_omega_constant(double domain_area, int dim) {
  if (dim == 2) return 0.5 * std::sqrt(domain_area);
  if (dim == 3) return (2.0 * std::sqrt(2.0) / 3.0) * std::pow(domain_area, 1.0 / 6.0);
  throw std::invalid_argument("k_omega_constant: dim must be 2 or 3");
}

// ---------------------------------------------------------------------------
// FlowSolver
// ---------------------------------------------------------------------------

namespace {

Vec2 outward_normal(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::left: return {-1, 0};
    case BoundaryTag::right: return {1, 0};
    case BoundaryTag::bottom: return {0, -1};
    case BoundaryTag::top: return {0, 1};
  }
  return {0, 0};
}

}  // namespace

FlowSolver::FlowSolver(const Mesh& mesh, const PhysicalParams& params)
    : mesh_(&mesh), params_(params) {
  params_.validate();

  // Flux balance of the as-imposed (P2-interpolated) data, Simpson per edge.
  auto segment_flux = [&](bool rescalable_only) {
    double acc = 0.0;
    for (const auto& e : mesh.edges) {
      if (e.boundary_tag < 0) continue;
      const auto tag = static_cast<BoundaryTag>(e.boundary_tag);
      const BoundaryProfile& prof = params_.boundary[e.boundary_tag];
      if (rescalable_only != prof.rescalable) continue;
      const Vec2 a = mesh.vertices[e.verts[0]], b = mesh.vertices[e.verts[1]];
      const Vec2 m = 0.5 * (a + b);
      const Vec2 nu = outward_normal(tag);
      const double len = (b - a).norm();
      acc += len / 6.0 *
             (prof.eval(a, tag).dot(nu) + 4.0 * prof.eval(m, tag).dot(nu) +
              prof.eval(b, tag).dot(nu));
    }
    return acc;
  };

  const double fixed = segment_flux(false);
  const double resc = segment_flux(true);
  const double scale = std::max(1.0, std::abs(fixed) + std::abs(resc));
  if (std::abs(fixed + resc) > 1e-10 * scale) {
    if (std::abs(resc) > 1e-14 * scale) {
      flux_.rescale_factor = -fixed / resc;
      for (auto& prof : params_.boundary) {
        if (!prof.rescalable) continue;
        prof.amplitude *= flux_.rescale_factor;
        prof.value *= flux_.rescale_factor;
      }
    } else {
      std::ostringstream msg;
      msg << "FlowSolver: boundary data is not flux compatible (net flux " << fixed + resc
          << ") and no segment is rescalable";
      throw std::invalid_argument(msg.str());
    }
  }

  // Total flux bookkeeping after rescale.
  double total_in = 0, total_out = 0;
  for (const auto& e : mesh.edges) {
    if (e.boundary_tag < 0) continue;
    const auto tag = static_cast<BoundaryTag>(e.boundary_tag);
    const BoundaryProfile& prof = params_.boundary[e.boundary_tag];
    const Vec2 a = mesh.vertices[e.verts[0]], b = mesh.vertices[e.verts[1]];
    const Vec2 m = 0.5 * (a + b);
    const Vec2 nu = outward_normal(tag);
    const double len = (b - a).norm();
    const double fl = len / 6.0 *
                      (prof.eval(a, tag).dot(nu) + 4.0 * prof.eval(m, tag).dot(nu) +
                       prof.eval(b, tag).dot(nu));
    if (fl < 0)
      total_in -= fl;
    else
      total_out += fl;
  }
  flux_.inflow = total_in;
  flux_.outflow = total_out;
  flux_.net = total_out - total_in;

  // Velocity Dirichlet values on all boundary P2 nodes; corners must agree.
  const int nv = mesh.n_vertices();
  std::map<int, Vec2> node_value;
  for (int eid = 0; eid < mesh.n_edges(); ++eid) {
    const auto& e = mesh.edges[eid];
    if (e.boundary_tag < 0) continue;
    const auto tag = static_cast<BoundaryTag>(e.boundary_tag);
    const BoundaryProfile& prof = params_.boundary[e.boundary_tag];
    const std::array<std::pair<int, Vec2>, 3> nodes = {
        std::pair<int, Vec2>{e.verts[0], mesh.vertices[e.verts[0]]},
        {e.verts[1], mesh.vertices[e.verts[1]]},
        {nv + eid, 0.5 * (mesh.vertices[e.verts[0]] + mesh.vertices[e.verts[1]])}};
    for (const auto& [node, x] : nodes) {
      const Vec2 g = prof.eval(x, tag);
      auto it = node_value.find(node);
      if (it == node_value.end()) {
        node_value.emplace(node, g);
      } else if ((it->second - g).norm() > 1e-12 * (1.0 + g.norm())) {
        throw std::invalid_argument("FlowSolver: inconsistent boundary data at a corner node");
      }
    }
  }
  bc_.reserve(2 * node_value.size());
  for (const auto& [node, g] : node_value) {
    bc_.emplace_back(2 * node, g.x());
    bc_.emplace_back(2 * node + 1, g.y());
  }
}

Eigen::VectorXd FlowSolver::pack(const FlowState& s) const {
  const int n_u = 2 * (mesh_->n_vertices() + mesh_->n_edges());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_u + mesh_->n_vertices() + 1);
  x.head(n_u) = s.u;
  x.segment(n_u, mesh_->n_vertices()) = s.p;
  return x;
}

FlowState FlowSolver::unpack(const Eigen::VectorXd& x) const {
  const int n_u = 2 * (mesh_->n_vertices() + mesh_->n_edges());
  FlowState s;
  s.u = x.head(n_u);
  s.p = x.segment(n_u, mesh_->n_vertices());
  return s;
}

double FlowSolver::residual_norm(const Eigen::VectorXd& phi, const Eigen::VectorXd& x) const {
  return nonlinear_residual(alpha_field(phi, params_), x, params_).cwiseAbs().maxCoeff();
}

Eigen::VectorXd FlowSolver::nonlinear_residual(const Eigen::VectorXd& alpha,
                                               const Eigen::VectorXd& x,
                                               const PhysicalParams& params) const {
  const Mesh& mesh = *mesh_;
  const int n_u = 2 * (mesh.n_vertices() + mesh.n_edges());
  const int n_p = mesh.n_vertices();
  const int mean_row = n_u + n_p;
  const double xi = x[mean_row];

  Eigen::VectorXd r = Eigen::VectorXd::Zero(n_u + n_p + 1);
  const QuadratureRule& quad = QuadratureRule::triangle(6);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    const auto nodes = p2_nodes(mesh, t);
    for (int q = 0; q < quad.size(); ++q) {
      const auto& L = quad.points[q];
      const double w = quad.weights[q] * geo.area;
      p2_basis(L, geo, N, gN);

      Vec2 u_q(0, 0);
      Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
      for (int k = 0; k < 6; ++k) {
        const double ux = x[2 * nodes[k]], uy = x[2 * nodes[k] + 1];
        u_q.x() += N[k] * ux;
        u_q.y() += N[k] * uy;
        J(0, 0) += ux * gN[k].x();
        J(0, 1) += ux * gN[k].y();
        J(1, 0) += uy * gN[k].x();
        J(1, 1) += uy * gN[k].y();
      }
      const double alpha_q =
          L[0] * alpha[geo.v[0]] + L[1] * alpha[geo.v[1]] + L[2] * alpha[geo.v[2]];
      const double p_q = L[0] * x[n_u + geo.v[0]] + L[1] * x[n_u + geo.v[1]] +
                         L[2] * x[n_u + geo.v[2]];
      const Vec2 conv = J * u_q;  // (u . grad) u
      const Vec2 f_q = params.body_force
                           ? params.body_force(L[0] * mesh.vertices[geo.v[0]] +
                                               L[1] * mesh.vertices[geo.v[1]] +
                                               L[2] * mesh.vertices[geo.v[2]])
                           : Vec2(0, 0);
      const double div_u = J.trace();

      for (int k = 0; k < 6; ++k) {
        const Vec2& g = gN[k];
        r[2 * nodes[k]] += w * ((alpha_q * u_q.x() + conv.x() - f_q.x()) * N[k] +
                                params.mu * (J(0, 0) * g.x() + J(0, 1) * g.y()) -
                                p_q * g.x());
        r[2 * nodes[k] + 1] += w * ((alpha_q * u_q.y() + conv.y() - f_q.y()) * N[k] +
                                    params.mu * (J(1, 0) * g.x() + J(1, 1) * g.y()) -
                                    p_q * g.y());
      }
      for (int i = 0; i < 3; ++i) {
        r[n_u + geo.v[i]] += w * L[i] * (-div_u + xi);
        r[mean_row] += w * L[i] * x[n_u + geo.v[i]];
      }
    }
  }
  for (const auto& [dof, g] : bc_) r[dof] = 0.0;
  return r;
}

FlowState FlowSolver::solve(const Eigen::VectorXd& phi, const FlowState* warm_start) const {
  try {
    return solve_with_params(params_, phi, warm_start);
  } catch (const SolverError&) {
    if (!options.allow_alpha_continuation) throw;
  }
  // Continuation in alpha_bar: three geometric steps up to the target.
  FlowState stage;
  const FlowState* warm = warm_start;
  for (double factor : {1.0 / 9.0, 1.0 / 3.0, 1.0}) {
    PhysicalParams p = params_;
    p.alpha_bar *= factor;
    stage = solve_with_params(p, phi, warm);
    warm = &stage;
  }
  return stage;
}

FlowState FlowSolver::solve_with_params(const PhysicalParams& params, const Eigen::VectorXd& phi,
                                        const FlowState* warm_start) const {
  if (phi.size() != mesh_->n_vertices())
    throw std::invalid_argument("FlowSolver: phi lives on a different mesh");

  const int n_u = 2 * (mesh_->n_vertices() + mesh_->n_edges());
  const Eigen::VectorXd alpha = alpha_field(phi, params);

  Eigen::VectorXd x;
  if (warm_start && warm_start->u.size() == n_u) {
    x = pack(*warm_start);
  } else {
    x = Eigen::VectorXd::Zero(n_u + mesh_->n_vertices() + 1);
  }
  for (const auto& [dof, g] : bc_) x[dof] = g;

  auto residual_of = [&](const Eigen::VectorXd& xi) {
    return nonlinear_residual(alpha, xi, params);
  };

  FlowState out;
  double res = residual_of(x).cwiseAbs().maxCoeff();

  // Picard (Oseen) sweeps to get inside Newton's basin.
  int picard_iters = 0;
  while (res > options.picard_tol && picard_iters < options.max_picard) {
    SaddleOperator op = assemble_oseen(*mesh_, params.mu, alpha, x.head(n_u), OseenForm::picard);
    if (params.body_force) add_velocity_load(op, *mesh_, params.body_force);
    apply_dirichlet(op, bc_);
    SaddleSolver solver(op);
    x = solver.solve(op.rhs);
    res = residual_of(x).cwiseAbs().maxCoeff();
    ++picard_iters;
  }

  // Newton with exact Jacobian.
  int newton_iters = 0;
  std::vector<std::pair<int, double>> bc_zero;
  bc_zero.reserve(bc_.size());
  for (const auto& [dof, g] : bc_) bc_zero.emplace_back(dof, 0.0);

  while (res > options.newton_tol && newton_iters < options.max_newton) {
    SaddleOperator jac = assemble_oseen(*mesh_, params.mu, alpha, x.head(n_u), OseenForm::newton);
    jac.rhs = -residual_of(x);
    apply_dirichlet(jac, bc_zero);
    SaddleSolver solver(jac);
    const Eigen::VectorXd dx = solver.solve(jac.rhs);
    x += dx;
    res = residual_of(x).cwiseAbs().maxCoeff();
    ++newton_iters;
  }

  if (res > options.newton_tol) {
    std::ostringstream msg;
    msg << "FlowSolver: no convergence after " << picard_iters << " Picard + " << newton_iters
        << " Newton iterations (residual " << res << ")";
    throw SolverError(msg.str());
  }

  out = unpack(x);
  out.newton_residual = res;
  out.picard_iters = picard_iters;
  out.newton_iters = newton_iters;
  return out;
}

NewtonOperator FlowSolver::newton_operator(const Eigen::VectorXd& phi,
                                           const FlowState& state) const {
  SaddleOperator op =
      assemble_oseen(*mesh_, params_.mu, alpha_field(phi, params_), state.u, OseenForm::newton);
  std::vector<std::pair<int, double>> bc_zero;
  bc_zero.reserve(bc_.size());
  for (const auto& [dof, g] : bc_) bc_zero.emplace_back(dof, 0.0);
  apply_dirichlet(op, bc_zero);

  NewtonOperator result;
  result.n_u = op.n_u;
  result.n_p = op.n_p;
  result.dirichlet_mask.assign(op.n_u, 0);
  for (const auto& [dof, g] : bc_) result.dirichlet_mask[dof] = 1;
  result.solver = std::make_unique<SaddleSolver>(op);
  return result;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> FlowSolver::solve_linearized(
    const Eigen::VectorXd& phi, const Eigen::VectorXd& delta, const FlowState& state,
    const NewtonOperator& op) const {
  if (delta.size() != mesh_->n_vertices())
    throw std::invalid_argument("solve_linearized: direction size mismatch");

  // Source: -(alpha'(phi) delta u, v) on the momentum rows.
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(op.size());
  const QuadratureRule& quad = QuadratureRule::triangle(6);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;
  for (int t = 0; t < mesh_->n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(*mesh_, t);
    const auto nodes = p2_nodes(*mesh_, t);
    for (int q = 0; q < quad.size(); ++q) {
      const auto& L = quad.points[q];
      const double w = quad.weights[q] * geo.area;
      p2_basis(L, geo, N, gN);
      const double phi_q = eval_p1(*mesh_, phi, t, L);
      const double delta_q = eval_p1(*mesh_, delta, t, L);
      const double ap = alpha_eps_prime(phi_q, params_);
      if (ap == 0.0 || delta_q == 0.0) continue;
      Vec2 u_q(0, 0);
      for (int k = 0; k < 6; ++k) {
        u_q.x() += N[k] * state.u[2 * nodes[k]];
        u_q.y() += N[k] * state.u[2 * nodes[k] + 1];
      }
      const Vec2 src = -ap * delta_q * u_q;
      for (int k = 0; k < 6; ++k) {
        rhs[2 * nodes[k]] += w * N[k] * src.x();
        rhs[2 * nodes[k] + 1] += w * N[k] * src.y();
      }
    }
  }
  for (int d = 0; d < op.n_u; ++d)
    if (op.dirichlet_mask[d]) rhs[d] = 0.0;

  const Eigen::VectorXd x = op.solver->solve(rhs);
  return {x.head(op.n_u), x.segment(op.n_u, op.n_p)};
}

double FlowSolver::grad_norm_l2(const FlowState& state) const {
  const QuadratureRule& quad = QuadratureRule::triangle(2);
  double acc = 0.0;
  for (int t = 0; t < mesh_->n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(*mesh_, t);
    for (int q = 0; q < quad.size(); ++q) {
      const Eigen::Matrix2d J = grad_p2_vector(*mesh_, state.u, t, quad.points[q]);
      acc += quad.weights[q] * geo.area * J.squaredNorm();
    }
  }
  return std::sqrt(acc);
}

UniquenessReport FlowSolver::check_uniqueness_bound(const FlowState& state) const {
  UniquenessReport rep;
  rep.k_omega = k_omega_constant(mesh_->total_area(), 2);
  rep.grad_norm = grad_norm_l2(state);
  rep.threshold = params_.mu / rep.k_omega;
  rep.satisfied = rep.grad_norm < rep.threshold;
  return rep;
}

double FlowSolver::max_speed_where(const Eigen::VectorXd& phi, const FlowState& state,
                                   double phi_threshold) const {
  const QuadratureRule& quad = QuadratureRule::triangle(4);
  double vmax = 0.0;
  for (int t = 0; t < mesh_->n_triangles(); ++t) {
    const auto& tri = mesh_->triangles[t];
    if (phi[tri[0]] > phi_threshold || phi[tri[1]] > phi_threshold ||
        phi[tri[2]] > phi_threshold)
      continue;
    for (int q = 0; q < quad.size(); ++q)
      vmax = std::max(vmax, eval_p2_vector(*mesh_, state.u, t, quad.points[q]).norm());
    // also sample the P2 nodes themselves
    const auto nodes = p2_nodes(*mesh_, t);
    for (int k = 0; k < 6; ++k)
      vmax = std::max(vmax, Vec2(state.u[2 * nodes[k]], state.u[2 * nodes[k] + 1]).norm());
  }
  return vmax;
}

}  // namespace pfto
