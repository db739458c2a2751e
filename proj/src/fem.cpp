#include "pfto/fem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfto {

// ---------------------------------------------------------------------------
// Quadrature (Dunavant symmetric rules, positive weights)
// ---------------------------------------------------------------------------

namespace {

QuadratureRule make_rule_1() {
  QuadratureRule r;
  r.degree = 1;
  r.points = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
  r.weights = {1.0};
  return r;
}

QuadratureRule make_rule_2() {
  QuadratureRule r;
  r.degree = 2;
  const double a = 2.0 / 3, b = 1.0 / 6;
  r.points = {{a, b, b}, {b, a, b}, {b, b, a}};
  r.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  return r;
}

QuadratureRule make_rule_4() {
  QuadratureRule r;
  r.degree = 4;
  const double a1 = 0.816847572980459, b1 = 0.091576213509771;
  const double a2 = 0.108103018168070, b2 = 0.445948490915965;
  const double w1 = 0.109951743655322, w2 = 0.223381589678011;
  r.points = {{a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
              {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
  r.weights = {w1, w1, w1, w2, w2, w2};
  return r;
}

QuadratureRule make_rule_6() {
  QuadratureRule r;
  r.degree = 6;
  const double a1 = 0.501426509658179, b1 = 0.249286745170910, w1 = 0.116786275726379;
  const double a2 = 0.873821971016996, b2 = 0.063089014491502, w2 = 0.050844906370207;
  const double c1 = 0.053145049844817, c2 = 0.310352451033784, c3 = 0.636502499121399;
  const double w3 = 0.082851075618374;
  r.points = {{a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
              {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2},
              {c1, c2, c3}, {c1, c3, c2}, {c2, c1, c3},
              {c2, c3, c1}, {c3, c1, c2}, {c3, c2, c1}};
  r.weights = {w1, w1, w1, w2, w2, w2, w3, w3, w3, w3, w3, w3};
  return r;
}

}  // namespace

const QuadratureRule& QuadratureRule::triangle(int degree) {
  static const QuadratureRule r1 = make_rule_1();
  static const QuadratureRule r2 = make_rule_2();
  static const QuadratureRule r4 = make_rule_4();
  static const QuadratureRule r6 = make_rule_6();
  if (degree <= 1) return r1;
  if (degree <= 2) return r2;
  if (degree <= 4) return r4;
  if (degree <= 6) return r6;
  throw std::invalid_argument("QuadratureRule: no rule of degree " + std::to_string(degree));
}

// ---------------------------------------------------------------------------
// Spaces & element helpers
// ---------------------------------------------------------------------------

ScalarSpace ScalarSpace::p1(const Mesh& m) { return {&m, 1, m.n_vertices()}; }
ScalarSpace ScalarSpace::p2(const Mesh& m) { return {&m, 2, m.n_vertices() + m.n_edges()}; }

Vec2 ScalarSpace::dof_coord(int i) const {
  const int nv = mesh->n_vertices();
  if (i < nv) return mesh->vertices[i];
  const auto& e = mesh->edges[i - nv];
  return 0.5 * (mesh->vertices[e.verts[0]] + mesh->vertices[e.verts[1]]);
}

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  ElementGeometry g;
  g.v = mesh.triangles[t];
  const Vec2 &a = mesh.vertices[g.v[0]], &b = mesh.vertices[g.v[1]], &c = mesh.vertices[g.v[2]];
  g.area = 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
  const double inv2A = 1.0 / (2.0 * g.area);
  g.grad_l[0] = inv2A * Vec2(b.y() - c.y(), c.x() - b.x());
  g.grad_l[1] = inv2A * Vec2(c.y() - a.y(), a.x() - c.x());
  g.grad_l[2] = inv2A * Vec2(a.y() - b.y(), b.x() - a.x());
  return g;
}

std::array<int, 6> p2_nodes(const Mesh& mesh, int t) {
  const int nv = mesh.n_vertices();
  const auto& tri = mesh.triangles[t];
  const auto& te = mesh.tri_edges[t];
  return {tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]};
}

void p2_basis(const std::array<double, 3>& L, const ElementGeometry& geo,
              std::array<double, 6>& N, std::array<Vec2, 6>& grad_N) {
  for (int i = 0; i < 3; ++i) {
    N[i] = L[i] * (2.0 * L[i] - 1.0);
    grad_N[i] = (4.0 * L[i] - 1.0) * geo.grad_l[i];
  }
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    N[3 + i] = 4.0 * L[j] * L[k];
    grad_N[3 + i] = 4.0 * (L[j] * geo.grad_l[k] + L[k] * geo.grad_l[j]);
  }
}

double eval_p1(const Mesh& mesh, const Eigen::VectorXd& f, int t,
               const std::array<double, 3>& L) {
  const auto& tri = mesh.triangles[t];
  return L[0] * f[tri[0]] + L[1] * f[tri[1]] + L[2] * f[tri[2]];
}

Vec2 grad_p1(const Mesh& mesh, const Eigen::VectorXd& f, int t) {
  const ElementGeometry geo = element_geometry(mesh, t);
  return f[geo.v[0]] * geo.grad_l[0] + f[geo.v[1]] * geo.grad_l[1] + f[geo.v[2]] * geo.grad_l[2];
}

Vec2 eval_p2_vector(const Mesh& mesh, const Eigen::VectorXd& u, int t,
                    const std::array<double, 3>& L) {
  const ElementGeometry geo = element_geometry(mesh, t);
  const auto nodes = p2_nodes(mesh, t);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;
  p2_basis(L, geo, N, gN);
  Vec2 v(0, 0);
  for (int k = 0; k < 6; ++k) {
    v.x() += N[k] * u[2 * nodes[k]];
    v.y() += N[k] * u[2 * nodes[k] + 1];
  }
  return v;
}

Eigen::Matrix2d grad_p2_vector(const Mesh& mesh, const Eigen::VectorXd& u, int t,
                               const std::array<double, 3>& L) {
  const ElementGeometry geo = element_geometry(mesh, t);
  const auto nodes = p2_nodes(mesh, t);
  std::array<double, 6> N;
  std::array<Vec2, 6> gN;
  p2_basis(L, geo, N, gN);
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  for (int k = 0; k < 6; ++k) {
    J(0, 0) += u[2 * nodes[k]] * gN[k].x();
    J(0, 1) += u[2 * nodes[k]] * gN[k].y();
    J(1, 0) += u[2 * nodes[k] + 1] * gN[k].x();
    J(1, 1) += u[2 * nodes[k] + 1] * gN[k].y();
  }
  return J;
}

Eigen::VectorXd interpolate_p1(const Mesh& mesh, const std::function<double(const Vec2&)>& f) {
  Eigen::VectorXd v(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) v[i] = f(mesh.vertices[i]);
  return v;
}

Eigen::VectorXd interpolate_p2_vector(const Mesh& mesh,
                                      const std::function<Vec2(const Vec2&)>& f) {
  const ScalarSpace s = ScalarSpace::p2(mesh);
  Eigen::VectorXd v(2 * s.n_dofs);
  for (int i = 0; i < s.n_dofs; ++i) {
    const Vec2 val = f(s.dof_coord(i));
    v[2 * i] = val.x();
    v[2 * i + 1] = val.y();
  }
  return v;
}

// ---------------------------------------------------------------------------
// Scalar assembly
// ---------------------------------------------------------------------------

SparseMatrix assemble_scalar(ScalarKind kind, const ScalarSpace& space,
                             const Eigen::VectorXd* weight) {
  if (space.degree != 1) throw std::invalid_argument("assemble_scalar: P1 only");
  const Mesh& mesh = *space.mesh;
  if (kind == ScalarKind::weighted_mass) {
    if (!weight) throw std::invalid_argument("assemble_scalar: weighted_mass needs a weight");
    if (weight->size() != mesh.n_vertices())
      throw std::invalid_argument("assemble_scalar: weight lives on a different mesh");
  }

  const QuadratureRule& quad = QuadratureRule::triangle(kind == ScalarKind::stiffness ? 1 : 4);
  std::vector<Triplet> trips;
  trips.reserve(9 * mesh.n_triangles());

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    Eigen::Matrix3d local = Eigen::Matrix3d::Zero();
    if (kind == ScalarKind::stiffness) {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          local(i, j) = geo.area * geo.grad_l[i].dot(geo.grad_l[j]);
    } else {
      for (int q = 0; q < quad.size(); ++q) {
        const auto& L = quad.points[q];
        double w = quad.weights[q] * geo.area;
        if (kind == ScalarKind::weighted_mass)
          w *= L[0] * (*weight)[geo.v[0]] + L[1] * (*weight)[geo.v[1]] + L[2] * (*weight)[geo.v[2]];
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) local(i, j) += w * L[i] * L[j];
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trips.emplace_back(geo.v[i], geo.v[j], local(i, j));
  }

  SparseMatrix A(space.n_dofs, space.n_dofs);
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

SparseMatrix lumped_mass_matrix(const ScalarSpace& space) {
  if (space.degree != 1) throw std::invalid_argument("lumped_mass_matrix: P1 only");
  const Mesh& mesh = *space.mesh;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(space.n_dofs);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const double third = mesh.triangle_area(t) / 3.0;
    for (int i = 0; i < 3; ++i) diag[mesh.triangles[t][i]] += third;
  }
  SparseMatrix M(space.n_dofs, space.n_dofs);
  std::vector<Triplet> trips;
  trips.reserve(space.n_dofs);
  for (int i = 0; i < space.n_dofs; ++i) trips.emplace_back(i, i, diag[i]);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

// ---------------------------------------------------------------------------
// Saddle assembly
// ---------------------------------------------------------------------------

SparseMatrix SaddleOperator::matrix() const {
  SparseMatrix A(size(), size());
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

void SaddleOperator::transpose_in_place() {
  for (auto& t : triplets) t = Triplet(t.col(), t.row(), t.value());
}

SaddleOperator assemble_oseen(const Mesh& mesh, double mu, const Eigen::VectorXd& alpha_nodal,
                              const Eigen::VectorXd& field, OseenForm form) {
  const int nv = mesh.n_vertices();
  const int n_nodes = nv + mesh.n_edges();
  SaddleOperator op;
  op.n_u = 2 * n_nodes;
  op.n_p = nv;
  op.rhs = Eigen::VectorXd::Zero(op.size());

  const bool has_alpha = alpha_nodal.size() > 0;
  if (has_alpha && alpha_nodal.size() != nv)
    throw std::invalid_argument("assemble_oseen: alpha field on a different mesh");
  const bool has_field = field.size() > 0;
  if (has_field && field.size() != op.n_u)
    throw std::invalid_argument("assemble_oseen: velocity field size mismatch");
  const bool with_convection = has_field && form != OseenForm::picard;
  // Picard uses the field as pure advection; Newton adds the reaction term.
  const bool with_advection = has_field;

  const QuadratureRule& quad = QuadratureRule::triangle(6);
  const int mean_row = op.n_u + op.n_p;

  std::vector<Triplet>& trips = op.triplets;
  trips.reserve(mesh.n_triangles() * (144 + 36 + 6));

  std::array<double, 6> N;
  std::array<Vec2, 6> gN;

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    const auto nodes = p2_nodes(mesh, t);

    Eigen::Matrix<double, 6, 6> a_scal = Eigen::Matrix<double, 6, 6>::Zero();  // scalar-block
    Eigen::Matrix<double, 12, 12> a_conv = Eigen::Matrix<double, 12, 12>::Zero();
    Eigen::Matrix<double, 3, 12> b_div = Eigen::Matrix<double, 3, 12>::Zero();
    Eigen::Vector3d p_mean = Eigen::Vector3d::Zero();

    for (int q = 0; q < quad.size(); ++q) {
      const auto& L = quad.points[q];
      const double w = quad.weights[q] * geo.area;
      p2_basis(L, geo, N, gN);

      double alpha_q = 0.0;
      if (has_alpha)
        alpha_q = L[0] * alpha_nodal[geo.v[0]] + L[1] * alpha_nodal[geo.v[1]] +
                  L[2] * alpha_nodal[geo.v[2]];

      Vec2 u_q(0, 0);
      Eigen::Matrix2d gu_q = Eigen::Matrix2d::Zero();
      if (has_field) {
        for (int k = 0; k < 6; ++k) {
          const double ux = field[2 * nodes[k]], uy = field[2 * nodes[k] + 1];
          u_q.x() += N[k] * ux;
          u_q.y() += N[k] * uy;
          gu_q(0, 0) += ux * gN[k].x();
          gu_q(0, 1) += ux * gN[k].y();
          gu_q(1, 0) += uy * gN[k].x();
          gu_q(1, 1) += uy * gN[k].y();
        }
      }

      // alpha mass + viscous stiffness act identically on both components
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          a_scal(i, j) += w * (alpha_q * N[i] * N[j] + mu * gN[i].dot(gN[j]));

      if (with_advection) {
        // (u_q . grad) w_j . v_i  -- scalar in components
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) {
            const double conv = w * N[i] * u_q.dot(gN[j]);
            a_conv(2 * i, 2 * j) += conv;
            a_conv(2 * i + 1, 2 * j + 1) += conv;
          }
      }
      if (with_convection) {
        // (w_j . grad) u_q . v_i  -- couples components via grad u
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) {
            const double nij = w * N[i] * N[j];
            a_conv(2 * i, 2 * j) += nij * gu_q(0, 0);
            a_conv(2 * i, 2 * j + 1) += nij * gu_q(0, 1);
            a_conv(2 * i + 1, 2 * j) += nij * gu_q(1, 0);
            a_conv(2 * i + 1, 2 * j + 1) += nij * gu_q(1, 1);
          }
      }

      // divergence rows: -(psi_i, div v_j); pressure test space is P1 = L
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j) {
          b_div(i, 2 * j) -= w * L[i] * gN[j].x();
          b_div(i, 2 * j + 1) -= w * L[i] * gN[j].y();
        }
      for (int i = 0; i < 3; ++i) p_mean[i] += w * L[i];
    }

    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        if (a_scal(i, j) != 0.0) {
          trips.emplace_back(2 * nodes[i], 2 * nodes[j], a_scal(i, j));
          trips.emplace_back(2 * nodes[i] + 1, 2 * nodes[j] + 1, a_scal(i, j));
        }
      }
    if (with_advection || with_convection) {
      for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
          if (a_conv(i, j) != 0.0)
            trips.emplace_back(2 * nodes[i / 2] + i % 2, 2 * nodes[j / 2] + j % 2, a_conv(i, j));
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 12; ++j)
        if (b_div(i, j) != 0.0) {
          const int prow = op.n_u + geo.v[i];
          const int ucol = 2 * nodes[j / 2] + j % 2;
          trips.emplace_back(prow, ucol, b_div(i, j));  // B
          trips.emplace_back(ucol, prow, b_div(i, j));  // B^T
        }
    for (int i = 0; i < 3; ++i) {
      trips.emplace_back(mean_row, op.n_u + geo.v[i], p_mean[i]);
      trips.emplace_back(op.n_u + geo.v[i], mean_row, p_mean[i]);
    }
  }

  if (form == OseenForm::adjoint) op.transpose_in_place();
  return op;
}

void add_velocity_load(SaddleOperator& op, const Mesh& mesh,
                       const std::function<Vec2(const Vec2&)>& f) {
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
      const Vec2 x = L[0] * mesh.vertices[geo.v[0]] + L[1] * mesh.vertices[geo.v[1]] +
                     L[2] * mesh.vertices[geo.v[2]];
      const Vec2 fx = f(x);
      for (int k = 0; k < 6; ++k) {
        op.rhs[2 * nodes[k]] += w * N[k] * fx.x();
        op.rhs[2 * nodes[k] + 1] += w * N[k] * fx.y();
      }
    }
  }
}

void apply_dirichlet(SaddleOperator& op, const std::vector<std::pair<int, double>>& bc) {
  std::vector<char> constrained(op.size(), 0);
  std::vector<double> value(op.size(), 0.0);
  for (const auto& [dof, g] : bc) {
    if (dof < 0 || dof >= op.size()) throw std::out_of_range("apply_dirichlet: dof out of range");
    constrained[dof] = 1;
    value[dof] = g;
  }

  std::vector<Triplet> kept;
  kept.reserve(op.triplets.size() + bc.size());
  for (const auto& t : op.triplets) {
    const bool cr = constrained[t.row()], cc = constrained[t.col()];
    if (cr) continue;  // row eliminated (diagonal 1 re-added below)
    if (cc) {
      op.rhs[t.row()] -= t.value() * value[t.col()];
      continue;
    }
    kept.push_back(t);
  }
  for (int i = 0; i < op.size(); ++i) {
    if (!constrained[i]) continue;
    kept.emplace_back(i, i, 1.0);
    op.rhs[i] = value[i];
  }
  op.triplets = std::move(kept);
}

// ---------------------------------------------------------------------------
// Direct solver
// ---------------------------------------------------------------------------

SparseSolver::SparseSolver(SparseMatrix A) : A_(std::move(A)) {
  A_.makeCompressed();
  At_ = A_.transpose();
  lu_.compute(A_);
  if (lu_.info() != Eigen::Success) {
    // try to name the offending dof: a structurally empty row or column
    int bad = -1;
    std::vector<char> row_seen(A_.rows(), 0);
    for (int k = 0; k < A_.outerSize(); ++k) {
      bool col_seen = false;
      for (SparseMatrix::InnerIterator it(A_, k); it; ++it) {
        if (it.value() != 0.0) {
          row_seen[it.row()] = 1;
          col_seen = true;
        }
      }
      if (!col_seen && bad < 0) bad = k;
    }
    if (bad < 0)
      for (int i = 0; i < A_.rows(); ++i)
        if (!row_seen[i]) {
          bad = i;
          break;
        }
    std::ostringstream msg;
    msg << "SparseSolver: factorization failed (" << lu_.lastErrorMessage() << ")";
    if (bad >= 0) msg << "; dof " << bad;
    throw SolverError(msg.str(), bad);
  }
}

Eigen::VectorXd SparseSolver::refine(const Eigen::VectorXd& x0, const Eigen::VectorXd& b,
                                     bool transposed) const {
  const SparseMatrix& M = transposed ? At_ : A_;
  Eigen::VectorXd r = b - M * x0;
  Eigen::VectorXd dx = transposed ? Eigen::VectorXd(lu_.transpose().solve(r))
                                  : Eigen::VectorXd(lu_.solve(r));
  return x0 + dx;
}

Eigen::VectorXd SparseSolver::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = lu_.solve(b);
  return refine(x, b, false);
}

Eigen::VectorXd SparseSolver::solve_transposed(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = lu_.transpose().solve(b);
  return refine(x, b, true);
}

Eigen::VectorXd sparse_solve(const SparseMatrix& A, const Eigen::VectorXd& b) {
  SparseSolver solver(A);
  Eigen::VectorXd x = solver.solve(b);
  const double a_inf = (Eigen::VectorXd(A.cwiseAbs() * Eigen::VectorXd::Ones(A.cols()))).maxCoeff();
  const double x_inf = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
  const double b_inf = b.size() ? b.cwiseAbs().maxCoeff() : 0.0;
  const double res = (A * x - b).cwiseAbs().maxCoeff();
  const double bound = 1e-10 * (a_inf * x_inf + b_inf);
  if (res > bound && res > 1e-300) {
    std::ostringstream msg;
    msg << "sparse_solve: residual " << res << " exceeds bound " << bound;
    throw SolverError(msg.str());
  }
  return x;
}

// ---------------------------------------------------------------------------
// Bordered saddle solver
// ---------------------------------------------------------------------------

SaddleSolver::SaddleSolver(const SaddleOperator& op) : n_u_(op.n_u), n_p_(op.n_p) {
  const int n = n_u_ + n_p_;
  pin_ = n_u_;  // first pressure dof

  full_ = op.matrix();
  m_ = Eigen::VectorXd::Zero(n);

  std::vector<Triplet> core_trips;
  core_trips.reserve(op.triplets.size());
  for (const auto& t : op.triplets) {
    if (t.row() == n) {
      m_[t.col()] += t.value();  // border row = border column by assembly
      continue;
    }
    if (t.col() == n) continue;
    if (t.row() == pin_ || t.col() == pin_) continue;  // symmetric pin
    core_trips.push_back(t);
  }
  core_trips.emplace_back(pin_, pin_, 1.0);
  area_ = m_.segment(n_u_, n_p_).sum();
  if (!(area_ > 0)) throw SolverError("SaddleSolver: empty pressure-mean border row");

  SparseMatrix core(n, n);
  core.setFromTriplets(core_trips.begin(), core_trips.end());
  core.makeCompressed();
  lu_.compute(core);
  if (lu_.info() != Eigen::Success)
    throw SolverError(std::string("SaddleSolver: core factorization failed (") +
                      lu_.lastErrorMessage() + ")");
}

Eigen::VectorXd SaddleSolver::direct(const Eigen::VectorXd& b, bool transposed) const {
  const int n = n_u_ + n_p_;
  const double xi = b.head(n).segment(n_u_, n_p_).sum() / area_;
  Eigen::VectorXd r = b.head(n) - xi * m_;
  r[pin_] = 0.0;
  Eigen::VectorXd y = transposed ? Eigen::VectorXd(lu_.transpose().solve(r))
                                 : Eigen::VectorXd(lu_.solve(r));
  const double t = (b[n] - m_.dot(y)) / area_;
  y.segment(n_u_, n_p_).array() += t;
  Eigen::VectorXd x(n + 1);
  x.head(n) = y;
  x[n] = xi;
  return x;
}

Eigen::VectorXd SaddleSolver::solve_impl(const Eigen::VectorXd& b, bool transposed) const {
  if (b.size() != full_.rows()) throw SolverError("SaddleSolver: rhs size mismatch");
  Eigen::VectorXd x = direct(b, transposed);
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd r =
        transposed ? Eigen::VectorXd(b - full_.transpose() * x) : Eigen::VectorXd(b - full_ * x);
    x += direct(r, transposed);
  }
  return x;
}

Eigen::VectorXd SaddleSolver::solve(const Eigen::VectorXd& b) const {
  return solve_impl(b, false);
}

Eigen::VectorXd SaddleSolver::solve_transposed(const Eigen::VectorXd& b) const {
  return solve_impl(b, true);
}

double l2_norm_p1(const Mesh& mesh, const Eigen::VectorXd& f) {
  const QuadratureRule& quad = QuadratureRule::triangle(2);
  double acc = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    for (int q = 0; q < quad.size(); ++q) {
      const double v = eval_p1(mesh, f, t, quad.points[q]);
      acc += quad.weights[q] * geo.area * v * v;
    }
  }
  return std::sqrt(acc);
}

double integral_p1(const Mesh& mesh, const Eigen::VectorXd& f) {
  double acc = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementGeometry geo = element_geometry(mesh, t);
    const auto& tri = mesh.triangles[t];
    acc += geo.area * (f[tri[0]] + f[tri[1]] + f[tri[2]]) / 3.0;
  }
  return acc;
}

}  // namespace pfto
