/// @file runner.hpp
/// @brief Experiment execution: configuration resolution, artifact output
///        (VTK snapshots, history.csv, summary.json).

#pragma once

#include <optional>
#include <string>

#include "pfto/problem.hpp"

namespace pfto {

struct RunOptions {
  std::string preset;       // one of preset_names(), or
  std::string config_path;  // a JSON configuration file
  std::string output_dir;   // override of output.directory
  int max_dofs = 0;         // override when > 0
  int snapshot_every = -1;  // override when >= 0
  unsigned seed = 0;        // override when > 0
  bool dump_adjoint = false;
  double eps_final = 0.0;   // override when > 0 (shorten the continuation)
};

/// Resolves the specification from the options (preset or config file plus
/// overrides). Throws on conflicts or unknown presets.
ProblemSpec resolve_spec(const RunOptions& opts);

/// Full experiment run; writes history.csv, summary.json, VTK snapshots and
/// final.vtk into the output directory. Returns the process exit status and
/// reports the failing stage on stderr.
int run_experiment(const RunOptions& opts);

/// Verification suite (manufactured convergence, FD gradient, duality);
/// writes oracle CSV reports, prints a table, returns 0 when all pass.
int run_verification(const std::string& output_dir, unsigned seed);

}  // namespace pfto
