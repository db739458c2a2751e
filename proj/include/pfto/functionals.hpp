/// @file functionals.hpp
/// @brief Objective and constraint functionals with their partial
///        derivatives with respect to phi and the flow state.
///
/// Every evaluation returns the value together with assembled dual vectors:
///   d_phi_l2[i]   = < dJ/dphi (L2 density), psi_i >
///   d_phi_grad[i] = < dJ/dphi (gradient density), grad psi_i >
///   d_state_u[k]  = dJ/du paired with the P2 velocity basis
///   d_state_p[j]  = dJ/dp paired with the P1 pressure basis
/// The pressure dual doubles as the divergence data of the adjoint system
/// (up to sign and the mean correction theta).

#pragma once

#include <functional>
#include <optional>

#include "pfto/flow.hpp"

namespace pfto {

struct FunctionalValue {
  double value = 0.0;
  Eigen::VectorXd d_phi_l2;
  Eigen::VectorXd d_phi_grad;
  Eigen::VectorXd d_state_u;
  Eigen::VectorXd d_state_p;

  static FunctionalValue zero(const Mesh& mesh);
  FunctionalValue& axpy(double a, const FunctionalValue& other);
  Eigen::VectorXd d_phi_total() const { return d_phi_l2 + d_phi_grad; }
};

// ---------------------------------------------------------------------------
// Objective terms
// ---------------------------------------------------------------------------

struct Rock {
  Vec2 center{0, 0};
  double sigma = 0.1;
  double cost = 1.0;
};

/// Clamped sine profile used for rocks and ball-shaped initial data.
double clamped_sine(double z);
/// Rock cost factor R[m, sigma, c](x); equals c at the center, 1 far away.
double rock_factor(const Vec2& x, const Rock& rock, double epsilon);

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Box {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool contains(const Vec2& p) const {
    return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1;
  }
};

/// Scaled Ginzburg-Landau energy with the smooth part of the double
/// obstacle; rejects nodal values outside [-1,1] beyond 1e-12.
FunctionalValue eval_ginzburg_landau(const Mesh& mesh, const Eigen::VectorXd& phi, double eps,
                                     double gamma, double c0);

/// (1/2) int hat_alpha(phi) |u|^2.
FunctionalValue eval_penalty_hat_alpha(const Mesh& mesh, const Eigen::VectorXd& phi,
                                       const FlowState& state, const PhysicalParams& params);

/// Diffuse hydrodynamic force (1/2) int a . (mu (grad u + grad u^T) - p I) grad phi.
FunctionalValue eval_diffuse_surface_force(const Mesh& mesh, const Eigen::VectorXd& phi,
                                           const FlowState& state, const Vec2& a, double mu);

/// Sharp-interface force: line integral over {phi_h = 0} with traces taken
/// on the fluid side. Throws when the level set is empty.
double eval_sharp_surface_force(const Mesh& mesh, const Eigen::VectorXd& phi,
                                const FlowState& state, const Vec2& a, double mu);

/// Componentwise discrete-harmonic extension: eta = a on the closed box S,
/// eta = 0 on the domain boundary. Returns interleaved P1 vector values.
Eigen::VectorXd solve_eta_extension(const Mesh& mesh, const Box& S, const Vec2& a);

/// Volume formulation of the force:
/// int -(1+phi)/2 (mu grad u : grad eta - u.(grad eta)u - p div eta - f.eta).
FunctionalValue eval_volume_drag(const Mesh& mesh, const Eigen::VectorXd& phi,
                                 const FlowState& state, const Eigen::VectorXd& eta, double mu,
                                 const std::function<Vec2(const Vec2&)>& f);

/// Total potential power of the fluid region:
/// int (1+phi)/2 (mu/2 |grad u|^2 - f.u).
FunctionalValue eval_potential_power(const Mesh& mesh, const Eigen::VectorXd& phi,
                                     const FlowState& state, double mu,
                                     const std::function<Vec2(const Vec2&)>& f);

/// int (1+phi)/2 prod_i R[m_i, sigma_i, c_i].
FunctionalValue eval_rock_cost(const Mesh& mesh, const Eigen::VectorXd& phi,
                               const std::vector<Rock>& rocks, double epsilon);

/// Moreau-Yosida relaxation (s/2) max(0, P - D)^2 of the potential-power
/// cap P <= D; derivatives chain through eval_potential_power.
FunctionalValue eval_moreau_yosida(const Mesh& mesh, const Eigen::VectorXd& phi,
                                   const FlowState& state, double s, double cap, double mu,
                                   const std::function<Vec2(const Vec2&)>& f);

/// Least-squares tracking of target profiles over an observation box.
FunctionalValue eval_least_squares(const Mesh& mesh, const Eigen::VectorXd& phi,
                                   const FlowState& state, const Box& observation,
                                   const std::function<Vec2(const Vec2&)>& u_target,
                                   const std::function<double(const Vec2&)>& p_target,
                                   double delta_p, double delta_u);

// ---------------------------------------------------------------------------
// Integral constraints
// ---------------------------------------------------------------------------

struct ConstraintSpec {
  enum class Kind {
    volume_lower,        // int phi - beta |Omega| >= 0
    volume_upper,        // beta |Omega| - int phi >= 0
    mass,                // M - int rho (1-phi)/2 >= 0
    center_of_mass,      // int (1-phi)/2 (x_k - y_k) = 0   (equality)
    potential_power_cap  // D - P >= 0
  };
  Kind kind = Kind::volume_lower;
  double beta = 0.0;
  double max_mass = 0.0;
  std::function<double(const Vec2&)> density;  // mass constraint; null -> 1
  Vec2 point{0, 0};
  int axis = 0;  // center_of_mass component
  double cap = 0.0;

  bool is_equality() const { return kind == Kind::center_of_mass; }
  /// True when the constraint is linear in phi with no state dependence,
  /// i.e. handled exactly by the projection.
  bool is_linear_in_phi() const { return kind != Kind::potential_power_cap; }
  std::string label() const;
};

/// Value and derivatives of G_i in the feasibility convention
/// (equalities = 0, inequalities >= 0 when feasible).
FunctionalValue eval_constraint(const ConstraintSpec& spec, const Mesh& mesh,
                                const Eigen::VectorXd& phi, const FlowState& state, double mu,
                                const std::function<Vec2(const Vec2&)>& f);

}  // namespace pfto
