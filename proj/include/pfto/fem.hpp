/// @file fem.hpp
/// @brief Finite element spaces (P1 scalar, P2 vector), quadrature, sparse
///        assembly and a direct sparse solver.
///
/// The mixed Taylor-Hood saddle system is assembled in one block matrix of
/// size n_u + n_p + 1: velocity dofs first, then pressure dofs, then a
/// single scalar multiplier row enforcing the zero pressure mean.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pfto/mesh.hpp"

namespace pfto {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Symmetric Gauss rules on the reference triangle in barycentric
/// coordinates. Weights sum to one; multiply by the triangle area.
struct QuadratureRule {
  int degree = 0;
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }

  /// Smallest shipped rule exact for polynomials of the given degree
  /// (degrees 1, 2, 4 and 6 are available; higher requests throw).
  static const QuadratureRule& triangle(int degree);
};

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

struct ScalarSpace {
  const Mesh* mesh = nullptr;
  int degree = 1;
  int n_dofs = 0;

  static ScalarSpace p1(const Mesh& m);
  static ScalarSpace p2(const Mesh& m);

  /// Vertex coordinates for P1; vertices then edge midpoints for P2.
  Vec2 dof_coord(int i) const;
};

/// Two interleaved scalar components: dof of node n, component c is 2n+c.
struct VectorSpace {
  ScalarSpace scalar;
  static VectorSpace p2(const Mesh& m) { return {ScalarSpace::p2(m)}; }
  int n_dofs() const { return 2 * scalar.n_dofs; }
};

// ---------------------------------------------------------------------------
// Element helpers
// ---------------------------------------------------------------------------

/// Geometry of one triangle: barycentric gradients and area.
struct ElementGeometry {
  std::array<int, 3> v;
  double area = 0;
  std::array<Vec2, 3> grad_l;  // gradients of the barycentric coordinates
};

ElementGeometry element_geometry(const Mesh& mesh, int t);

/// Global P2 node ids of triangle t: three vertices, then the nodes on the
/// edges opposite local vertices 0,1,2 (i.e. edges (v1,v2),(v2,v0),(v0,v1)).
std::array<int, 6> p2_nodes(const Mesh& mesh, int t);

/// P2 basis values and physical gradients at a barycentric point.
void p2_basis(const std::array<double, 3>& L, const ElementGeometry& geo,
              std::array<double, 6>& N, std::array<Vec2, 6>& grad_N);

// Field evaluation at a barycentric point of triangle t.
double eval_p1(const Mesh& mesh, const Eigen::VectorXd& f, int t, const std::array<double, 3>& L);
Vec2 grad_p1(const Mesh& mesh, const Eigen::VectorXd& f, int t);
Vec2 eval_p2_vector(const Mesh& mesh, const Eigen::VectorXd& u, int t,
                    const std::array<double, 3>& L);
/// Jacobian (grad u)_{ij} = d u_i / d x_j.
Eigen::Matrix2d grad_p2_vector(const Mesh& mesh, const Eigen::VectorXd& u, int t,
                               const std::array<double, 3>& L);

/// Nodal P1 interpolation of an analytic function.
Eigen::VectorXd interpolate_p1(const Mesh& mesh, const std::function<double(const Vec2&)>& f);
/// Nodal P2 vector interpolation (vertices and edge midpoints).
Eigen::VectorXd interpolate_p2_vector(const Mesh& mesh,
                                      const std::function<Vec2(const Vec2&)>& f);

// ---------------------------------------------------------------------------
// Scalar P1 assembly
// ---------------------------------------------------------------------------

enum class ScalarKind { mass, stiffness, weighted_mass };

/// Galerkin matrix on the P1 space; `weight` (nodal P1, same mesh) is only
/// used for weighted_mass.
SparseMatrix assemble_scalar(ScalarKind kind, const ScalarSpace& space,
                             const Eigen::VectorXd* weight = nullptr);

/// Diagonal (row-sum lumped) P1 mass matrix. Together with the stiffness
/// matrix on a nonobtuse triangulation this yields an M-matrix, which keeps
/// the primal-dual active-set iteration monotone.
SparseMatrix lumped_mass_matrix(const ScalarSpace& space);

// ---------------------------------------------------------------------------
// Saddle (Oseen) assembly
// ---------------------------------------------------------------------------

enum class OseenForm {
  picard,  ///< viscous + alpha + (adv . grad) u
  newton,  ///< picard + (u . grad) adv  (full linearization at `field`)
  adjoint  ///< exact transpose of the newton operator
};

/// Block saddle operator kept in triplet form so Dirichlet elimination and
/// transposition stay exact and cheap.
struct SaddleOperator {
  int n_u = 0, n_p = 0;  // total size n_u + n_p + 1 (pressure-mean row)
  std::vector<Triplet> triplets;
  Eigen::VectorXd rhs;

  int size() const { return n_u + n_p + 1; }
  SparseMatrix matrix() const;
  void transpose_in_place();
};

/// Assembles the linearized porous-medium Navier-Stokes operator.
/// `alpha_nodal` is the P1 Brinkman coefficient (may be empty for zero);
/// `field` is the P2 velocity used for convection terms (empty for Stokes).
SaddleOperator assemble_oseen(const Mesh& mesh, double mu, const Eigen::VectorXd& alpha_nodal,
                              const Eigen::VectorXd& field, OseenForm form);

/// Adds the volume load (f, v) to the velocity rows.
void add_velocity_load(SaddleOperator& op, const Mesh& mesh,
                       const std::function<Vec2(const Vec2&)>& f);

/// Symmetric elimination of Dirichlet rows/columns; idempotent.
void apply_dirichlet(SaddleOperator& op, const std::vector<std::pair<int, double>>& bc);

// ---------------------------------------------------------------------------
// Direct solver
// ---------------------------------------------------------------------------

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg, int dof = -1)
      : std::runtime_error(msg), dof_index(dof) {}
  int dof_index = -1;
};

/// Sparse LU with one step of iterative refinement. Deterministic for
/// identical input. Throws SolverError on singular factorization, naming
/// the offending dof when it can be identified.
class SparseSolver {
 public:
  explicit SparseSolver(SparseMatrix A);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_transposed(const Eigen::VectorXd& b) const;

  const SparseMatrix& matrix() const { return A_; }

 private:
  SparseMatrix A_;
  SparseMatrix At_;
  mutable Eigen::SparseLU<SparseMatrix> lu_;  // transpose() is non-const in Eigen 3.4

  Eigen::VectorXd refine(const Eigen::VectorXd& x0, const Eigen::VectorXd& b,
                         bool transposed) const;
};

/// Convenience: factorize + solve with the residual contract
/// ||Ax-b||_inf <= 1e-10 (||A||_inf ||x||_inf + ||b||_inf).
Eigen::VectorXd sparse_solve(const SparseMatrix& A, const Eigen::VectorXd& b);

/// Direct solver for the bordered saddle system. The scalar pressure-mean
/// row couples every pressure dof, which ruins sparse LU fill-in when
/// factored head-on; instead the border-free core is factored with one
/// pressure dof pinned (deflating its constant-pressure nullspace) and the
/// bordered solution is recovered algebraically, then polished by
/// iterative refinement against the full bordered matrix.
class SaddleSolver {
 public:
  explicit SaddleSolver(const SaddleOperator& op);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_transposed(const Eigen::VectorXd& b) const;
  const SparseMatrix& full_matrix() const { return full_; }

 private:
  int n_u_ = 0, n_p_ = 0, pin_ = 0;
  SparseMatrix full_;
  Eigen::VectorXd m_;  // border column (pressure-mass entries), size n_u+n_p
  double area_ = 0.0;  // m . 1_p
  mutable Eigen::SparseLU<SparseMatrix> lu_;

  Eigen::VectorXd direct(const Eigen::VectorXd& b, bool transposed) const;
  Eigen::VectorXd solve_impl(const Eigen::VectorXd& b, bool transposed) const;
};

// L2 / H1 norms of fields (for error studies).
double l2_norm_p1(const Mesh& mesh, const Eigen::VectorXd& f);
double integral_p1(const Mesh& mesh, const Eigen::VectorXd& f);

}  // namespace pfto
