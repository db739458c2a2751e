/// @file verification.hpp
/// @brief Independent oracles: finite-difference gradients against the
///        adjoint, manufactured Navier-Stokes solutions, duality checks.
///
/// Everything here is implementable without the optimizer module and is
/// used both by the unit tests and the `verify` CLI subcommand.

#pragma once

#include <string>
#include <vector>

#include "pfto/problem.hpp"

namespace pfto {

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle
// ---------------------------------------------------------------------------

struct FdConvergenceRow {
  double step = 0;
  double fd_value = 0;
  double relative_discrepancy = 0;  // against the adjoint value
};

struct FdGradientReport {
  double adjoint_value = 0;  // directional derivative via the adjoint
  double plateau = 0;        // FD value at the best step
  double best_step = 0;
  double best_relative_error = 0;
  std::vector<FdConvergenceRow> table;
};

/// Central differences of the fully re-solved reduced objective along one
/// direction. Requires phi +- t*direction to stay strictly inside the box
/// for every step.
FdGradientReport fd_reduced_gradient(const Evaluator& eval, const Eigen::VectorXd& phi,
                                     const Eigen::VectorXd& direction,
                                     const std::vector<double>& steps = {1e-2, 1e-3, 1e-4, 1e-5,
                                                                         1e-6});

void write_fd_table_csv(const std::string& path, const FdGradientReport& report);

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  int cells = 0;
  double h = 0;
  double err_u_h1 = 0;
  double err_p_l2 = 0;
};

struct ManufacturedReport {
  std::vector<ConvergenceRow> rows;
  double rate_u_h1 = 0;  // observed order between the last two levels
  double rate_p_l2 = 0;
};

/// Convergence study for phi == 1 (pure Navier-Stokes) with a smooth
/// divergence-free manufactured solution; `levels` meshes starting at 8x8.
ManufacturedReport manufactured_flow_errors(int levels, double mu = 1.0);

/// Max nodal error of the Poiseuille channel solve (exactly representable
/// in Taylor-Hood, so this is a pure solver-accuracy probe).
double poiseuille_discrete_error(int n = 8, double mu = 0.7);

void write_convergence_csv(const std::string& path, const ManufacturedReport& report);

// ---------------------------------------------------------------------------
// Duality identity
// ---------------------------------------------------------------------------

struct DualityResidual {
  double adjoint_route = 0;
  double linearized_route = 0;
  double residual = 0;
  double scale = 1;
};

/// Compares the adjoint-route and linearized-route directional derivatives
/// of the reduced objective; both sides share one factorization, so the
/// discrete identity holds to solver precision.
DualityResidual duality_check(const Evaluator& eval, const Eigen::VectorXd& phi,
                              const FlowState& state, const Eigen::VectorXd& delta);

}  // namespace pfto
