#include "pfto/runner.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "pfto/verification.hpp"
#include "pfto/vtk.hpp"

namespace pfto {

namespace fs = std::filesystem;
using nlohmann::json;

ProblemSpec resolve_spec(const RunOptions& opts) {
  if (!opts.preset.empty() && !opts.config_path.empty())
    throw std::invalid_argument("run: give either --preset or --config, not both");
  if (opts.preset.empty() && opts.config_path.empty())
    throw std::invalid_argument("run: one of --preset or --config is required");

  ProblemSpec spec =
      opts.preset.empty() ? ProblemSpec::load_file(opts.config_path) : load_preset(opts.preset);
  if (!opts.output_dir.empty()) spec.output.directory = opts.output_dir;
  if (opts.max_dofs > 0) spec.optimizer.max_dofs = opts.max_dofs;
  if (opts.snapshot_every >= 0) spec.output.snapshot_every = opts.snapshot_every;
  if (opts.seed > 0) spec.output.seed = opts.seed;
  if (opts.dump_adjoint) spec.output.dump_adjoint = true;
  if (opts.eps_final > 0) {
    if (opts.eps_final > spec.physics.epsilon)
      throw std::invalid_argument("run: --eps-final exceeds the initial epsilon");
    spec.epsilon_final = opts.eps_final;
  }
  return spec;
}

namespace {

void write_history_header(std::ofstream& os, const ProblemSpec& spec) {
  os << "iter,J";
  for (std::size_t j = 0; j < spec.constraints.size(); ++j)
    os << ",G_" << spec.constraints[j].label();
  for (std::size_t j = 0; j < spec.constraints.size(); ++j)
    os << ",lambda_" << spec.constraints[j].label();
  os << ",tau,step_norm,dofs,inactive_frac\n";
}

void write_history_row(std::ofstream& os, const IterationRecord& rec, std::size_t n_constraints) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << rec.iter << "," << num(rec.objective);
  for (std::size_t j = 0; j < n_constraints; ++j)
    os << "," << (j < rec.constraint_values.size() ? num(rec.constraint_values[j]) : "nan");
  for (std::size_t j = 0; j < n_constraints; ++j)
    os << "," << (j < rec.multipliers.size() ? num(rec.multipliers[j]) : "0");
  os << "," << num(rec.tau) << "," << num(rec.step_norm) << "," << rec.dofs << ","
     << num(rec.inactive_fraction) << "\n";
}

void write_snapshot(const std::string& path, const Mesh& mesh, const Eigen::VectorXd& phi,
                    const FlowState* state, const AdjointState* adjoint) {
  std::vector<VtkPointData> fields;
  fields.push_back({"phi", &phi, false});
  Eigen::VectorXd u_vert, q_vert;
  if (state) {
    u_vert = p2_vertex_values(mesh, state->u);
    fields.push_back({"velocity", &u_vert, true});
    fields.push_back({"pressure", &state->p, false});
  }
  if (adjoint) {
    q_vert = p2_vertex_values(mesh, adjoint->q);
    fields.push_back({"adjoint_velocity", &q_vert, true});
    fields.push_back({"adjoint_pressure", &adjoint->pi, false});
  }
  write_vtk(path, mesh, fields);
}

/// Force direction for the summary: first surface/volume term, else e_x.
Vec2 summary_direction(const ProblemSpec& spec) {
  for (const auto& t : spec.objective)
    if (t.kind == ObjectiveTerm::Kind::surface_force ||
        t.kind == ObjectiveTerm::Kind::volume_drag)
      return t.direction;
  return Vec2(1, 0);
}

}  // namespace

int run_experiment(const RunOptions& opts) {
  std::string stage = "configuration";
  try {
    ProblemSpec spec = resolve_spec(opts);

    stage = "validation";
    spec.validate();

    stage = "output setup";
    fs::create_directories(spec.output.directory);
    std::ofstream history(fs::path(spec.output.directory) / "history.csv");
    if (!history) throw std::runtime_error("cannot open history.csv for writing");
    history.precision(17);
    write_history_header(history, spec);

    const auto t_start = std::chrono::steady_clock::now();

    int snapshot_count = 0;
    OptimizeMonitor monitor;
    monitor.on_iterate = [&](const IterationRecord& rec, const Mesh& mesh,
                             const Eigen::VectorXd& phi, const FlowState* state) {
      write_history_row(history, rec, spec.constraints.size());
      history.flush();
      if (spec.output.snapshot_every > 0 && rec.iter % spec.output.snapshot_every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%06d.vtk", rec.iter);
        write_snapshot((fs::path(spec.output.directory) / name).string(), mesh, phi, state,
                       nullptr);
        ++snapshot_count;
      }
    };

    stage = "optimization";
    OptimizeOutcome outcome = optimize(spec, &monitor);
    history.flush();

    stage = "summary";
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    Evaluator eval(spec, outcome.mesh, outcome.final_epsilon);
    const FlowState* state = outcome.has_state ? &outcome.state : nullptr;
    FunctionalValue objective =
        eval.objective(outcome.phi, outcome.has_state ? outcome.state : eval.solve_state(outcome.phi));

    json summary;
    summary["spec_version"] = spec.spec_version;
    summary["preset"] = spec.preset;
    summary["objective"] = objective.value;
    summary["epsilon_final"] = outcome.final_epsilon;
    summary["stationary"] = outcome.stationary;
    summary["runtime_seconds"] = runtime;
    summary["dofs"] = {{"phi", outcome.mesh.n_vertices()},
                       {"velocity", 2 * (outcome.mesh.n_vertices() + outcome.mesh.n_edges())},
                       {"triangles", outcome.mesh.n_triangles()}};
    summary["iterations"] = outcome.history.empty() ? 0 : outcome.history.back().iter;
    summary["snapshots"] = snapshot_count;

    const Vec2 dir = summary_direction(spec);
    summary["force_direction"] = {dir.x(), dir.y()};
    if (outcome.has_state) {
      FunctionalValue diffuse = eval_diffuse_surface_force(outcome.mesh, outcome.phi,
                                                           outcome.state, dir, spec.physics.mu);
      summary["diffuse_force"] = diffuse.value;
      try {
        summary["sharp_force"] = eval_sharp_surface_force(outcome.mesh, outcome.phi,
                                                          outcome.state, dir, spec.physics.mu);
      } catch (const std::exception&) {
        summary["sharp_force"] = nullptr;  // empty level set
      }
      const UniquenessReport uniq = eval.flow().check_uniqueness_bound(outcome.state);
      summary["uniqueness_bound"] = {{"k_omega", uniq.k_omega},
                                     {"grad_norm", uniq.grad_norm},
                                     {"threshold", uniq.threshold},
                                     {"satisfied", uniq.satisfied}};
      summary["outflow_rescale_factor"] = outcome.flux.rescale_factor;
      summary["boundary_flux"] = {{"inflow", outcome.flux.inflow},
                                  {"outflow", outcome.flux.outflow}};
    }

    json cons = json::array();
    const auto values = eval.constraint_values(
        outcome.phi, outcome.has_state ? outcome.state : eval.solve_state(outcome.phi));
    for (std::size_t j = 0; j < spec.constraints.size(); ++j) {
      json jc;
      jc["label"] = spec.constraints[j].label();
      jc["value"] = values[j].value;
      jc["equality"] = spec.constraints[j].is_equality();
      if (j < static_cast<std::size_t>(outcome.multipliers.lambdas.size())) {
        jc["lambda"] = outcome.multipliers.lambdas[static_cast<int>(j)];
        jc["slackness"] = outcome.multipliers.slackness[static_cast<int>(j)];
        jc["active"] = static_cast<bool>(outcome.multipliers.active[j]);
      }
      cons.push_back(jc);
    }
    summary["constraints"] = cons;

    json stages = json::array();
    for (const auto& st : outcome.stages)
      stages.push_back({{"epsilon", st.epsilon},
                        {"dof_budget", st.dof_budget},
                        {"final_dofs", st.final_dofs},
                        {"iterations", st.iterations},
                        {"stationary", st.stationary}});
    summary["stages"] = stages;

    if (!spec.constraints.empty() && outcome.has_state) {
      const ConstraintQualificationReport cq = constraint_qualification_diagnostic(
          eval, outcome.phi, outcome.state, spec.output.seed);
      summary["constraint_qualification"] = {
          {"active", cq.active_labels},
          {"sampled_rank", cq.sampled_rank},
          {"sigma_min", cq.sigma_min},
          {"sigma_max", cq.sigma_max},
          {"regular_point_evidence", cq.regular_point_evidence}};
    }

    stage = "artifacts";
    {
      std::ofstream os(fs::path(spec.output.directory) / "summary.json");
      os << summary.dump(2) << "\n";
    }
    std::optional<AdjointState> adjoint;
    if (spec.output.dump_adjoint && outcome.has_state) {
      NewtonOperator op = eval.newton_operator(outcome.phi, outcome.state);
      adjoint = solve_adjoint(op, objective);
    }
    write_snapshot((fs::path(spec.output.directory) / "final.vtk").string(), outcome.mesh,
                   outcome.phi, state, adjoint ? &*adjoint : nullptr);

    std::cout << "run: " << (spec.preset.empty() ? "config" : spec.preset) << " finished in "
              << runtime << " s, J = " << objective.value
              << ", dofs = " << outcome.mesh.n_vertices() << "\n";
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "run failed during " << stage << ": " << err.what() << "\n";
    return 1;
  }
}

int run_verification(const std::string& output_dir, unsigned seed) {
  try {
    fs::create_directories(output_dir);
    int failures = 0;

    // Manufactured-solution convergence
    ManufacturedReport mms = manufactured_flow_errors(3);
    write_convergence_csv((fs::path(output_dir) / "manufactured_rates.csv").string(), mms);
    const bool rates_ok = mms.rate_u_h1 >= 1.9 && mms.rate_p_l2 >= 1.9;
    std::printf("%-34s %s  (u-H1 rate %.3f, p-L2 rate %.3f)\n", "manufactured convergence",
                rates_ok ? "PASS" : "FAIL", mms.rate_u_h1, mms.rate_p_l2);
    failures += !rates_ok;

    const double poi = poiseuille_discrete_error();
    const bool poi_ok = poi <= 1e-10;
    std::printf("%-34s %s  (max error %.3e)\n", "poiseuille exactness", poi_ok ? "PASS" : "FAIL",
                poi);
    failures += !poi_ok;

    // FD-vs-adjoint gradient and duality on a coarse drag configuration
    ProblemSpec spec = load_preset("drag_surface");
    spec.optimizer.max_dofs = 2000;
    Mesh mesh = generate_rectangle_mesh(spec.domain.width, spec.domain.height, spec.domain.nx,
                                        spec.domain.ny);
    for (int pass = 0; pass < 3; ++pass) {
      Eigen::VectorXd phi0 = initial_phi_field(spec, mesh);
      std::vector<int> marked = dorfler_mark(phase_jump_indicator(mesh, phi0), 0.5);
      if (marked.empty()) break;
      mesh = refine_marked(mesh, marked).mesh;
    }
    Evaluator eval(spec, mesh, spec.physics.epsilon);
    Eigen::VectorXd phi = 0.85 * initial_phi_field(spec, mesh);

    std::mt19937_64 rng(seed == 0 ? 12345 : seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd direction(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) direction[i] = 0.1 * unif(rng);

    FdGradientReport fd = fd_reduced_gradient(eval, phi, direction);
    write_fd_table_csv((fs::path(output_dir) / "fd_gradient.csv").string(), fd);
    const bool fd_ok = fd.best_relative_error <= 1e-3;
    std::printf("%-34s %s  (plateau error %.3e at step %.1e)\n", "fd gradient vs adjoint",
                fd_ok ? "PASS" : "FAIL", fd.best_relative_error, fd.best_step);
    failures += !fd_ok;

    FlowState state = eval.solve_state(phi);
    bool dual_ok = true;
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd delta(mesh.n_vertices());
      for (int i = 0; i < mesh.n_vertices(); ++i) delta[i] = unif(rng);
      DualityResidual r = duality_check(eval, phi, state, delta);
      worst = std::max(worst, r.residual / r.scale);
      dual_ok = dual_ok && r.residual <= 1e-9 * r.scale;
    }
    std::printf("%-34s %s  (worst residual %.3e of scale)\n", "duality identity",
                dual_ok ? "PASS" : "FAIL", worst);
    failures += !dual_ok;

    return failures == 0 ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "verify failed: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace pfto
