/// Command line front end: run experiments, verification oracles, and mesh
/// inspection for phase-field flow topology optimization.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pfto/runner.hpp"
#include "pfto/verification.hpp"

using namespace pfto;

namespace {

int mesh_info(const RunOptions& opts) {
  try {
    ProblemSpec spec = resolve_spec(opts);
    Mesh mesh = generate_rectangle_mesh(spec.domain.width, spec.domain.height, spec.domain.nx,
                                        spec.domain.ny);
    std::printf("domain: (0, %g) x (0, %g)\n", spec.domain.width, spec.domain.height);
    std::printf("seed mesh: %d vertices, %d triangles, %d edges\n", mesh.n_vertices(),
                mesh.n_triangles(), mesh.n_edges());
    std::printf("area: %.12g, longest edge: %.6g\n", mesh.total_area(), mesh.max_edge_length());
    int per_tag[4] = {0, 0, 0, 0};
    for (const auto& e : mesh.edges)
      if (e.boundary_tag >= 0) ++per_tag[e.boundary_tag];
    for (int t = 0; t < 4; ++t)
      std::printf("boundary %-6s: %d edges\n", to_string(static_cast<BoundaryTag>(t)),
                  per_tag[t]);
    std::printf("phi dof budget: %d\n", spec.optimizer.max_dofs);
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "mesh-info failed: " << err.what() << "\n";
    return 1;
  }
}

int dump_presets(const std::string& dir) {
  try {
    std::filesystem::create_directories(dir);
    for (const auto& name : preset_names()) {
      std::ofstream os(std::filesystem::path(dir) / (name + ".json"));
      os << preset_json_text(name);
    }
    std::printf("wrote %zu preset files to %s\n", preset_names().size(), dir.c_str());
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "preset-dump failed: " << err.what() << "\n";
    return 1;
  }
}

void add_spec_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("--preset", opts.preset,
                  "built-in experiment (heavy_ground, drag_surface, drag_volume, lift_power)");
  cmd->add_option("--config", opts.config_path, "JSON configuration file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phase-field shape and topology optimization for stationary Navier-Stokes flow"};
  app.require_subcommand(1);

  RunOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run an experiment and write artifacts");
  add_spec_options(run, run_opts);
  run->add_option("--output-dir", run_opts.output_dir, "artifact directory");
  run->add_option("--max-dofs", run_opts.max_dofs, "phase-field dof budget override");
  run->add_option("--snapshot-every", run_opts.snapshot_every, "VTK snapshot cadence");
  run->add_option("--seed", run_opts.seed, "random seed for diagnostics");
  run->add_option("--eps-final", run_opts.eps_final, "stop the epsilon continuation early");
  run->add_flag("--dump-adjoint", run_opts.dump_adjoint, "include (q, pi) in final.vtk");

  std::string verify_dir = "verify_out";
  unsigned verify_seed = 0;
  CLI::App* verify = app.add_subcommand("verify", "run the verification oracle suites");
  verify->add_option("--output-dir", verify_dir, "oracle report directory");
  verify->add_option("--seed", verify_seed, "random seed");

  RunOptions info_opts;
  CLI::App* info = app.add_subcommand("mesh-info", "print seed-mesh statistics");
  add_spec_options(info, info_opts);

  std::string preset_dir = "presets";
  CLI::App* dump = app.add_subcommand("preset-dump", "write built-in presets as JSON files");
  dump->add_option("--dir", preset_dir, "target directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return run_experiment(run_opts);
  if (verify->parsed()) return run_verification(verify_dir, verify_seed);
  if (info->parsed()) return mesh_info(info_opts);
  if (dump->parsed()) return dump_presets(preset_dir);
  return 1;
}
