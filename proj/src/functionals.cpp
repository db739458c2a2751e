#include "pfto/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pfto {

FunctionalValue FunctionalValue::zero(const Mesh& mesh) {
  FunctionalValue v;
  const int nv = mesh.n_vertices();
  const int nu = 2 * (nv + mesh.n_edges());
  v.d_phi_l2 = Eigen::VectorXd::Zero(nv);
  v.d_phi_grad = Eigen::VectorXd::Zero(nv);
  v.d_state_u = Eigen::VectorXd::Zero(nu);
  v.d_state_p = Eigen::VectorXd::Zero(nv);
  return v;
}

FunctionalValue& FunctionalValue::axpy(double a, const FunctionalValue& other) {
  value += a * other.value;
  d_phi_l2 += a * other.d_phi_l2;
  d_phi_grad += a * other.d_phi_grad;
  d_state_u += a * other.d_state_u;
  d_state_p += a * other.d_state_p;
  return *this;
}

double clamped_sine(double z) {
  if (z >= M_PI / 2) return 1.0;
  if (z <= -M_PI / 2) return -1.0;
  return std::sin(z);
}

double rock_factor(const Vec2& x, const Rock& rock, double epsilon) {
  const double r = (x - rock.center).norm() / rock.sigma;
  const double phi0 = clamped_sine(-(r - 1.0) / epsilon);
  return (rock.cost - 1.0) * 0.5 * (phi0 + 1.0) + 1.0;
}

namespace {

/// Everything the per-quadrature-point integrands need.
struct QPoint {
  int tri = 0;
  double weight = 0;  // quadrature weight times area
  Vec2 x{0, 0};
  std::array<double, 3> L{};
  const ElementGeometry* geo = nullptr;
  const std::array<int, 6>* nodes = nullptr;
  const std::array<double, 6>* N = nullptr;
  const std::array<Vec2, 6>* gN = nullptr;
};

/// Runs fn over all quadrature points of the mesh with P2 basis data.
template <typename Fn>
void for_each_qpoint(const Mesh& mesh, Fn&& fn) {
  const QuadratureRule& quad = QuadratureRule::triangle(6);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    const auto nodes = p2_nodes(mesh, t);
    for (int q = 0; q < quad.size(); ++q) {
      const auto& L = quad.points[q];
      p2_basis(L, geo, N, gN);
      QPoint qp;
      qp.tri = t;
      qp.weight = quad.weights[q] * geo.area;
      qp.x = L[0] * mesh.vertices[geo.v[0]] + L[1] * mesh.vertices[geo.v[1]] +
             L[2] * mesh.vertices[geo.v[2]];
      qp.L = L;
      qp.geo = &geo;
      qp.nodes = &nodes;
      qp.N = &N;
      qp.gN = &gN;
      fn(qp);
    }
  }
}

double p1_at(const Eigen::VectorXd& f, const QPoint& qp) {
  const auto& v = qp.geo->v;
  return qp.L[0] * f[v[0]] + qp.L[1] * f[v[1]] + qp.L[2] * f[v[2]];
}

Vec2 p1_grad_at(const Eigen::VectorXd& f, const QPoint& qp) {
  const auto& v = qp.geo->v;
  return f[v[0]] * qp.geo->grad_l[0] + f[v[1]] * qp.geo->grad_l[1] + f[v[2]] * qp.geo->grad_l[2];
}

Vec2 p2_at(const Eigen::VectorXd& u, const QPoint& qp) {
  Vec2 val(0, 0);
  for (int k = 0; k < 6; ++k) {
    const int n = (*qp.nodes)[k];
    val.x() += (*qp.N)[k] * u[2 * n];
    val.y() += (*qp.N)[k] * u[2 * n + 1];
  }
  return val;
}

Eigen::Matrix2d p2_grad_at(const Eigen::VectorXd& u, const QPoint& qp) {
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  for (int k = 0; k < 6; ++k) {
    const int n = (*qp.nodes)[k];
    J(0, 0) += u[2 * n] * (*qp.gN)[k].x();
    J(0, 1) += u[2 * n] * (*qp.gN)[k].y();
    J(1, 0) += u[2 * n + 1] * (*qp.gN)[k].x();
    J(1, 1) += u[2 * n + 1] * (*qp.gN)[k].y();
  }
  return J;
}

// Accumulation helpers: pair a density with the test basis at one point.

void add_phi_l2(FunctionalValue& out, const QPoint& qp, double density) {
  const auto& v = qp.geo->v;
  for (int i = 0; i < 3; ++i) out.d_phi_l2[v[i]] += qp.weight * density * qp.L[i];
}

void add_phi_grad(FunctionalValue& out, const QPoint& qp, const Vec2& density) {
  const auto& v = qp.geo->v;
  for (int i = 0; i < 3; ++i)
    out.d_phi_grad[v[i]] += qp.weight * density.dot(qp.geo->grad_l[i]);
}

void add_state_u(FunctionalValue& out, const QPoint& qp, const Vec2& density) {
  for (int k = 0; k < 6; ++k) {
    const int n = (*qp.nodes)[k];
    out.d_state_u[2 * n] += qp.weight * density.x() * (*qp.N)[k];
    out.d_state_u[2 * n + 1] += qp.weight * density.y() * (*qp.N)[k];
  }
}

void add_state_gradu(FunctionalValue& out, const QPoint& qp, const Eigen::Matrix2d& density) {
  for (int k = 0; k < 6; ++k) {
    const int n = (*qp.nodes)[k];
    const Vec2& g = (*qp.gN)[k];
    out.d_state_u[2 * n] += qp.weight * (density(0, 0) * g.x() + density(0, 1) * g.y());
    out.d_state_u[2 * n + 1] += qp.weight * (density(1, 0) * g.x() + density(1, 1) * g.y());
  }
}

void add_state_p(FunctionalValue& out, const QPoint& qp, double density) {
  const auto& v = qp.geo->v;
  for (int i = 0; i < 3; ++i) out.d_state_p[v[i]] += qp.weight * density * qp.L[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Objective terms
// ---------------------------------------------------------------------------

FunctionalValue eval_ginzburg_landau(const Mesh& mesh, const Eigen::VectorXd& phi, double eps,
                                     double gamma, double c0) {
  for (int i = 0; i < phi.size(); ++i)
    if (std::abs(phi[i]) > 1.0 + 1e-12)
      throw std::invalid_argument("eval_ginzburg_landau: nodal value outside [-1,1] at node " +
                                  std::to_string(i));

  FunctionalValue out = FunctionalValue::zero(mesh);
  const double scale = gamma / (2.0 * c0);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    const double phi_q = p1_at(phi, qp);
    const Vec2 g = p1_grad_at(phi, qp);
    out.value += qp.weight * scale *
                 ((0.5 / eps) * (1.0 - phi_q * phi_q) + 0.5 * eps * g.squaredNorm());
    add_phi_l2(out, qp, -scale / eps * phi_q);
    add_phi_grad(out, qp, scale * eps * g);
  });
  return out;
}

FunctionalValue eval_penalty_hat_alpha(const Mesh& mesh, const Eigen::VectorXd& phi,
                                       const FlowState& state, const PhysicalParams& params) {
  FunctionalValue out = FunctionalValue::zero(mesh);
  if (params.hat_alpha_mode == PhysicalParams::HatAlphaMode::zero) return out;
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    const double phi_q = p1_at(phi, qp);
    const Vec2 u_q = p2_at(state.u, qp);
    const double u2 = u_q.squaredNorm();
    out.value += qp.weight * 0.5 * hat_alpha_eps(phi_q, params) * u2;
    add_phi_l2(out, qp, 0.5 * hat_alpha_eps_prime(phi_q, params) * u2);
    add_state_u(out, qp, hat_alpha_eps(phi_q, params) * u_q);
  });
  return out;
}

FunctionalValue eval_diffuse_surface_force(const Mesh& mesh, const Eigen::VectorXd& phi,
                                           const FlowState& state, const Vec2& a, double mu) {
  if (std::abs(a.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("eval_diffuse_surface_force: direction must be a unit vector");

  FunctionalValue out = FunctionalValue::zero(mesh);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    const Vec2 gphi = p1_grad_at(phi, qp);
    const Eigen::Matrix2d J = p2_grad_at(state.u, qp);
    const double p_q = p1_at(state.p, qp);
    const Eigen::Matrix2d sigma =
        mu * (J + J.transpose()) - p_q * Eigen::Matrix2d::Identity();

    out.value += qp.weight * 0.5 * a.dot(sigma * gphi);
    // D2 h = mu (grad phi (x) a + a (x) grad phi), D3 h = -a.grad phi, D4 h = sigma a
    add_state_gradu(out, qp,
                    0.5 * mu *
                        (gphi * a.transpose() + a * gphi.transpose()));
    add_state_p(out, qp, -0.5 * a.dot(gphi));
    add_phi_grad(out, qp, 0.5 * (sigma * a));
  });
  return out;
}

double eval_sharp_surface_force(const Mesh& mesh, const Eigen::VectorXd& phi,
                                const FlowState& state, const Vec2& a, double mu) {
  const LevelSetPolyline ls = extract_zero_level_set(mesh, phi);
  if (ls.empty())
    throw std::runtime_error("eval_sharp_surface_force: empty zero level set");

  double force = 0.0;
  for (std::size_t k = 0; k < ls.segments.size(); ++k) {
    const Vec2 mid = 0.5 * (ls.segments[k][0] + ls.segments[k][1]);
    const double len = (ls.segments[k][1] - ls.segments[k][0]).norm();
    const Vec2 nu = -ls.normals[k];  // outer normal of the object, into the fluid
    // one-sided trace: sample slightly inside the fluid
    const int cut = ls.triangle_ids[k];
    const double off = 0.25 * std::sqrt(mesh.triangle_area(cut));
    int t = locate_triangle(mesh, mid + off * nu, cut);
    Vec2 x_eval = mid + off * nu;
    if (t < 0) {
      t = cut;
      x_eval = mid;
    }
    const auto L = barycentric_coords(mesh, t, x_eval);
    const Eigen::Matrix2d J = grad_p2_vector(mesh, state.u, t, L);
    const double p_q = eval_p1(mesh, state.p, t, L);
    const Eigen::Matrix2d sigma = mu * (J + J.transpose()) - p_q * Eigen::Matrix2d::Identity();
    force += len * a.dot(sigma * nu);
  }
  return force;
}

Eigen::VectorXd solve_eta_extension(const Mesh& mesh, const Box& S, const Vec2& a) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& v : mesh.vertices) {
    xmin = std::min(xmin, v.x());
    xmax = std::max(xmax, v.x());
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
  }
  if (!(S.x0 > xmin && S.x1 < xmax && S.y0 > ymin && S.y1 < ymax) || S.x0 >= S.x1 ||
      S.y0 >= S.y1)
    throw std::invalid_argument("solve_eta_extension: square must be interior to the domain");

  const ScalarSpace p1 = ScalarSpace::p1(mesh);
  const SparseMatrix K = assemble_scalar(ScalarKind::stiffness, p1);

  std::vector<char> on_boundary(mesh.n_vertices(), 0);
  for (const auto& e : mesh.edges)
    if (e.boundary_tag >= 0) on_boundary[e.verts[0]] = on_boundary[e.verts[1]] = 1;

  Eigen::VectorXd eta(2 * mesh.n_vertices());
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<Triplet> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mesh.n_vertices());
    std::vector<double> bc_value(mesh.n_vertices(), 0.0);
    std::vector<char> constrained(mesh.n_vertices(), 0);
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      if (on_boundary[i]) {
        constrained[i] = 1;
        bc_value[i] = 0.0;
      } else if (S.contains(mesh.vertices[i])) {
        constrained[i] = 1;
        bc_value[i] = a[comp];
      }
    }
    for (int col = 0; col < K.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
        if (constrained[it.row()]) continue;
        if (constrained[it.col()]) {
          rhs[it.row()] -= it.value() * bc_value[it.col()];
          continue;
        }
        trips.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int i = 0; i < mesh.n_vertices(); ++i)
      if (constrained[i]) {
        trips.emplace_back(i, i, 1.0);
        rhs[i] = bc_value[i];
      }
    SparseMatrix A(mesh.n_vertices(), mesh.n_vertices());
    A.setFromTriplets(trips.begin(), trips.end());
    const Eigen::VectorXd sol = sparse_solve(A, rhs);
    for (int i = 0; i < mesh.n_vertices(); ++i) eta[2 * i + comp] = sol[i];
  }
  return eta;
}

FunctionalValue eval_volume_drag(const Mesh& mesh, const Eigen::VectorXd& phi,
                                 const FlowState& state, const Eigen::VectorXd& eta, double mu,
                                 const std::function<Vec2(const Vec2&)>& f) {
  if (eta.size() != 2 * mesh.n_vertices())
    throw std::invalid_argument("eval_volume_drag: eta must be a P1 vector field");

  Eigen::VectorXd eta_x(mesh.n_vertices()), eta_y(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    eta_x[i] = eta[2 * i];
    eta_y[i] = eta[2 * i + 1];
  }

  FunctionalValue out = FunctionalValue::zero(mesh);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    const double phi_q = p1_at(phi, qp);
    const Vec2 u_q = p2_at(state.u, qp);
    const Eigen::Matrix2d J = p2_grad_at(state.u, qp);
    const double p_q = p1_at(state.p, qp);
    const Vec2 eta_q(p1_at(eta_x, qp), p1_at(eta_y, qp));
    Eigen::Matrix2d G;  // (grad eta)_{ij} = d eta_i / d x_j
    G.row(0) = p1_grad_at(eta_x, qp).transpose();
    G.row(1) = p1_grad_at(eta_y, qp).transpose();
    const double div_eta = G.trace();
    const Vec2 f_q = f ? f(qp.x) : Vec2(0, 0);

    const double B = mu * J.cwiseProduct(G).sum() - u_q.dot(G * u_q) - p_q * div_eta -
                     f_q.dot(eta_q);
    const double z = -0.5 * (1.0 + phi_q);

    out.value += qp.weight * z * B;
    add_phi_l2(out, qp, -0.5 * B);
    add_state_u(out, qp, z * Vec2(-(G + G.transpose()) * u_q));
    add_state_gradu(out, qp, z * mu * G);
    add_state_p(out, qp, -z * div_eta);
  });
  return out;
}

FunctionalValue eval_potential_power(const Mesh& mesh, const Eigen::VectorXd& phi,
                                     const FlowState& state, double mu,
                                     const std::function<Vec2(const Vec2&)>& f) {
  FunctionalValue out = FunctionalValue::zero(mesh);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    const double phi_q = p1_at(phi, qp);
    const Vec2 u_q = p2_at(state.u, qp);
    const Eigen::Matrix2d J = p2_grad_at(state.u, qp);
    const Vec2 f_q = f ? f(qp.x) : Vec2(0, 0);
    const double B = 0.5 * mu * J.squaredNorm() - f_q.dot(u_q);
    const double z = 0.5 * (1.0 + phi_q);
    out.value += qp.weight * z * B;
    add_phi_l2(out, qp, 0.5 * B);
    add_state_u(out, qp, z * Vec2(-f_q));
    add_state_gradu(out, qp, z * mu * J);
  });
  return out;
}

FunctionalValue eval_rock_cost(const Mesh& mesh, const Eigen::VectorXd& phi,
                               const std::vector<Rock>& rocks, double epsilon) {
  for (const auto& r : rocks)
    if (!(r.sigma > 0)) throw std::invalid_argument("eval_rock_cost: rock radius must be > 0");

  FunctionalValue out = FunctionalValue::zero(mesh);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    double prod = 1.0;
    for (const auto& r : rocks) prod *= rock_factor(qp.x, r, epsilon);
    const double phi_q = p1_at(phi, qp);
    out.value += qp.weight * 0.5 * (1.0 + phi_q) * prod;
    add_phi_l2(out, qp, 0.5 * prod);
  });
  return out;
}

FunctionalValue eval_moreau_yosida(const Mesh& mesh, const Eigen::VectorXd& phi,
                                   const FlowState& state, double s, double cap, double mu,
                                   const std::function<Vec2(const Vec2&)>& f) {
  if (!(s > 0)) throw std::invalid_argument("eval_moreau_yosida: s must be positive");
  if (!(cap > 0)) throw std::invalid_argument("eval_moreau_yosida: cap must be positive");

  FunctionalValue power = eval_potential_power(mesh, phi, state, mu, f);
  const double violation = std::max(0.0, power.value - cap);
  const double multiplier = s * violation;

  FunctionalValue out = FunctionalValue::zero(mesh);
  if (multiplier > 0.0) out.axpy(multiplier, power);
  out.value = 0.5 * s * violation * violation;
  return out;
}

FunctionalValue eval_least_squares(const Mesh& mesh, const Eigen::VectorXd& phi,
                                   const FlowState& state, const Box& observation,
                                   const std::function<Vec2(const Vec2&)>& u_target,
                                   const std::function<double(const Vec2&)>& p_target,
                                   double delta_p, double delta_u) {
  FunctionalValue out = FunctionalValue::zero(mesh);
  for_each_qpoint(mesh, [&](const QPoint& qp) {
    if (!observation.contains(qp.x)) return;
    const double phi_q = p1_at(phi, qp);
    const Vec2 u_q = p2_at(state.u, qp);
    const double p_q = p1_at(state.p, qp);
    const Vec2 du = u_q - (u_target ? u_target(qp.x) : Vec2(0, 0));
    const double dp = p_q - (p_target ? p_target(qp.x) : 0.0);
    const double B = delta_p * dp * dp + delta_u * du.squaredNorm();
    const double z = 0.5 * (1.0 + phi_q);
    out.value += qp.weight * z * B;
    add_phi_l2(out, qp, 0.5 * B);
    add_state_u(out, qp, z * 2.0 * delta_u * du);
    add_state_p(out, qp, z * 2.0 * delta_p * dp);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

std::string ConstraintSpec::label() const {
  switch (kind) {
    case Kind::volume_lower: return "volume_lower";
    case Kind::volume_upper: return "volume_upper";
    case Kind::mass: return "mass";
    case Kind::center_of_mass: return axis == 0 ? "center_of_mass_x" : "center_of_mass_y";
    case Kind::potential_power_cap: return "potential_power_cap";
  }
  return "?";
}

FunctionalValue eval_constraint(const ConstraintSpec& spec, const Mesh& mesh,
                                const Eigen::VectorXd& phi, const FlowState& state, double mu,
                                const std::function<Vec2(const Vec2&)>& f) {
  FunctionalValue out = FunctionalValue::zero(mesh);
  const double area = mesh.total_area();

  switch (spec.kind) {
    case ConstraintSpec::Kind::volume_lower:
      for_each_qpoint(mesh, [&](const QPoint& qp) {
        out.value += qp.weight * (p1_at(phi, qp) - spec.beta);
        add_phi_l2(out, qp, 1.0);
      });
      break;
    case ConstraintSpec::Kind::volume_upper:
      for_each_qpoint(mesh, [&](const QPoint& qp) {
        out.value += qp.weight * (spec.beta - p1_at(phi, qp));
        add_phi_l2(out, qp, -1.0);
      });
      break;
    case ConstraintSpec::Kind::mass: {
      for_each_qpoint(mesh, [&](const QPoint& qp) {
        const double rho = spec.density ? spec.density(qp.x) : 1.0;
        out.value += qp.weight * (-0.5 * rho * (1.0 - p1_at(phi, qp)));
        add_phi_l2(out, qp, 0.5 * rho);
      });
      out.value += spec.max_mass;
      break;
    }
    case ConstraintSpec::Kind::center_of_mass:
      for_each_qpoint(mesh, [&](const QPoint& qp) {
        const double coord = qp.x[spec.axis] - spec.point[spec.axis];
        out.value += qp.weight * 0.5 * (1.0 - p1_at(phi, qp)) * coord;
        add_phi_l2(out, qp, -0.5 * coord);
      });
      break;
    case ConstraintSpec::Kind::potential_power_cap: {
      FunctionalValue power = eval_potential_power(mesh, phi, state, mu, f);
      out.axpy(-1.0, power);
      out.value = spec.cap - power.value;
      break;
    }
  }
  (void)area;
  return out;
}

}  // namespace pfto
