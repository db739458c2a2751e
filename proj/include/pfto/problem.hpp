/// @file problem.hpp
/// @brief Problem specification (domain, physics, objective, constraints,
///        optimizer settings), JSON configuration, experiment presets, and
///        the fixed-mesh evaluation machinery.

#pragma once

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "pfto/optimizer.hpp"

namespace pfto {

struct DomainSpec {
  double width = 1.0, height = 1.0;
  int nx = 8, ny = 8;
};

struct InitialPhi {
  enum class Type { constant, ball, file } type = Type::constant;
  double value = 0.0;
  Vec2 center{0, 0};
  double radius = 0.0;
  std::string path;
};

struct ObjectiveTerm {
  enum class Kind {
    ginzburg_landau,
    penalty_hat_alpha,
    surface_force,
    volume_drag,
    potential_power,
    rock_cost,
    moreau_yosida,
    least_squares
  };
  Kind kind = Kind::ginzburg_landau;
  double weight = 1.0;
  Vec2 direction{1, 0};       // surface_force / volume_drag
  Box eta_box{};              // volume_drag
  std::vector<Rock> rocks;    // rock_cost
  double my_s = 0.0, my_cap = 0.0;
  Box ls_box{};
  double ls_delta_p = 0.0, ls_delta_u = 0.0;
  Vec2 ls_u_target{0, 0};
  double ls_p_target = 0.0;

  bool needs_state() const {
    return kind != Kind::ginzburg_landau && kind != Kind::rock_cost;
  }
};

struct OutputSpec {
  std::string directory = "out";
  int snapshot_every = 0;
  bool dump_adjoint = false;
  unsigned seed = 12345;
};

struct ProblemSpec {
  int spec_version = 1;
  std::string preset;
  DomainSpec domain;
  PhysicalParams physics;      // physics.epsilon is the initial epsilon
  double epsilon_final = 0.0;  // 0 -> no continuation
  std::vector<ObjectiveTerm> objective;
  std::vector<ConstraintSpec> constraints;
  InitialPhi initial_phi;
  OptimizerConfig optimizer;
  OutputSpec output;

  bool needs_state() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ProblemSpec from_json(const nlohmann::json& j);
  static ProblemSpec load_file(const std::string& path);
};

/// Built-in experiment presets: heavy_ground, drag_surface, drag_volume,
/// lift_power. Throws on unknown names.
ProblemSpec load_preset(const std::string& name);
std::vector<std::string> preset_names();
/// JSON text of a preset, identical to the file shipped under presets/.
std::string preset_json_text(const std::string& name);

/// Analytic initial design on a given mesh.
Eigen::VectorXd initial_phi_field(const ProblemSpec& spec, const Mesh& mesh);

// ---------------------------------------------------------------------------
// Fixed-mesh evaluation machinery
// ---------------------------------------------------------------------------

/// Bundles everything needed to evaluate the reduced objective, the
/// constraints and the adjoint-based gradient on one mesh at one epsilon.
class Evaluator {
 public:
  Evaluator(const ProblemSpec& spec, const Mesh& mesh, double epsilon);

  const Mesh& mesh() const { return *mesh_; }
  const ProblemSpec& spec() const { return *spec_; }
  const PhysicalParams& params() const { return params_; }
  bool needs_state() const { return needs_state_; }
  const FlowSolver& flow() const { return *flow_; }
  const Eigen::VectorXd& eta() const { return eta_; }

  FlowState solve_state(const Eigen::VectorXd& phi, const FlowState* warm = nullptr) const;

  /// Weighted sum of all objective terms with derivative duals.
  FunctionalValue objective(const Eigen::VectorXd& phi, const FlowState& state) const;
  std::vector<FunctionalValue> constraint_values(const Eigen::VectorXd& phi,
                                                 const FlowState& state) const;

  NewtonOperator newton_operator(const Eigen::VectorXd& phi, const FlowState& state) const;

  /// Reduced gradient of objective - sum lambda_i G_i; pass lambdas = null
  /// for the plain objective gradient. Solves the adjoint internally.
  ReducedGradient gradient(const Eigen::VectorXd& phi, const FlowState& state,
                           const Eigen::VectorXd* lambdas = nullptr) const;

  SparseMatrix metric_matrix(OptimizerConfig::Metric metric) const;
  std::vector<LinearConstraint> linear_constraints() const;

  /// Reduced objective value (state solved internally when needed).
  double reduced_objective(const Eigen::VectorXd& phi) const;

 private:
  const ProblemSpec* spec_;
  const Mesh* mesh_;
  PhysicalParams params_;
  bool needs_state_ = false;
  std::unique_ptr<FlowSolver> flow_;
  Eigen::VectorXd eta_;  // extension field for volume_drag terms

  FunctionalValue eval_term(const ObjectiveTerm& term, const Eigen::VectorXd& phi,
                            const FlowState& state) const;
};

}  // namespace pfto
