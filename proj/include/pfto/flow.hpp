/// @file flow.hpp
/// @brief Nonlinear porous-medium Navier-Stokes state solver and its
///        linearization.
///
/// The Brinkman coefficient alpha_eps(phi) = alpha_bar (1-phi)/(2 eps) is
/// clamped outside [-1,1]; its derivative is taken as zero on the clamped
/// region (including the bounds), matching the flat extension.

#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "pfto/fem.hpp"
#include "pfto/mesh.hpp"

namespace pfto {

// ---------------------------------------------------------------------------
// Boundary data
// ---------------------------------------------------------------------------

struct BoundaryProfile {
  enum class Type { no_slip, constant, parabolic_jet } type = Type::no_slip;
  Vec2 value{0, 0};  // constant
  // parabolic jet: amplitude * max(1 - ((t - center)/half_width)^2, 0) * direction,
  // with t the tangential coordinate of the segment
  Vec2 direction{0, 0};
  double center = 0, half_width = 1, amplitude = 0;
  bool rescalable = false;

  Vec2 eval(const Vec2& x, BoundaryTag tag) const;
};

struct PhysicalParams {
  double mu = 1.0;
  double alpha_bar = 1.0;
  double epsilon = 0.1;
  double gamma = 1.0;
  double c0 = 1.5707963267948966;  // pi/2 for the double obstacle (paper's choice)
  enum class HatAlphaMode { equal_alpha, zero } hat_alpha_mode = HatAlphaMode::equal_alpha;
  std::function<Vec2(const Vec2&)> body_force;  // null -> zero
  std::array<BoundaryProfile, 4> boundary{};    // indexed by BoundaryTag

  void validate() const;  // positivity checks
};

double alpha_eps(double phi_value, const PhysicalParams& p);
double alpha_eps_prime(double phi_value, const PhysicalParams& p);
double hat_alpha_eps(double phi_value, const PhysicalParams& p);
double hat_alpha_eps_prime(double phi_value, const PhysicalParams& p);

/// Nodal values of alpha_eps over a P1 phase field.
Eigen::VectorXd alpha_field(const Eigen::VectorXd& phi, const PhysicalParams& p);

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

struct FlowState {
  Eigen::VectorXd u;  // P2 vector dofs
  Eigen::VectorXd p;  // P1 dofs, zero mean
  double newton_residual = 0.0;
  int picard_iters = 0;
  int newton_iters = 0;
};

struct FlowSolveOptions {
  double picard_tol = 1e-3;
  double newton_tol = 1e-12;
  int max_picard = 25;
  int max_newton = 25;
  bool allow_alpha_continuation = true;
};

struct UniquenessReport {
  double k_omega = 0;     // 1/2 |Omega|^{1/2} in 2d
  double grad_norm = 0;   // ||grad u||_{L2}
  double threshold = 0;   // mu / K_Omega
  bool satisfied = false;
};

/// K_Omega of the conditional-uniqueness bound; dim 2 or 3.
double k_omega_constant(double domain_area, int dim);

/// Factorized Newton operator at a converged state; shared by the adjoint
/// and the linearized solves so the discrete duality identity is exact.
struct NewtonOperator {
  int n_u = 0, n_p = 0;
  std::vector<char> dirichlet_mask;  // over velocity dofs
  std::unique_ptr<SaddleSolver> solver;

  int size() const { return n_u + n_p + 1; }
};

struct FluxReport {
  double inflow = 0, outflow = 0, net = 0;
  double rescale_factor = 1.0;  // applied to rescalable segments
};

/// Per-mesh flow solver: caches boundary dofs and the flux-balanced
/// boundary data.
class FlowSolver {
 public:
  FlowSolver(const Mesh& mesh, const PhysicalParams& params);

  const Mesh& mesh() const { return *mesh_; }
  const PhysicalParams& params() const { return params_; }
  const FluxReport& flux_report() const { return flux_; }
  const std::vector<std::pair<int, double>>& velocity_dirichlet() const { return bc_; }

  /// Solves the nonlinear state; throws SolverError on nonconvergence.
  FlowState solve(const Eigen::VectorXd& phi, const FlowState* warm_start = nullptr) const;

  /// Newton operator (constrained, factorized) at a converged state.
  NewtonOperator newton_operator(const Eigen::VectorXd& phi, const FlowState& state) const;

  /// Linearized state (w, r) for a phase-field direction delta, using the
  /// supplied Newton operator. w has zero trace, r zero mean.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_linearized(const Eigen::VectorXd& phi,
                                                               const Eigen::VectorXd& delta,
                                                               const FlowState& state,
                                                               const NewtonOperator& op) const;

  /// Max-norm of the free-dof residual of the discrete weak form.
  double residual_norm(const Eigen::VectorXd& phi, const Eigen::VectorXd& x) const;

  /// Weak-form residual assembled directly by quadrature (no matrix),
  /// Dirichlet rows zeroed.
  Eigen::VectorXd nonlinear_residual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& x,
                                     const PhysicalParams& params) const;

  UniquenessReport check_uniqueness_bound(const FlowState& state) const;

  /// Max |u| over triangles whose vertices all satisfy phi <= threshold.
  double max_speed_where(const Eigen::VectorXd& phi, const FlowState& state,
                         double phi_threshold) const;

  double grad_norm_l2(const FlowState& state) const;

  FlowSolveOptions options;

 private:
  const Mesh* mesh_;
  PhysicalParams params_;
  std::vector<std::pair<int, double>> bc_;  // velocity Dirichlet dofs
  FluxReport flux_;

  FlowState solve_with_params(const PhysicalParams& p, const Eigen::VectorXd& phi,
                              const FlowState* warm_start) const;

  Eigen::VectorXd pack(const FlowState& s) const;
  FlowState unpack(const Eigen::VectorXd& x) const;
};

}  // namespace pfto
