#include "pfto/optimizer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>

#include "pfto/problem.hpp"

namespace pfto {

// ---------------------------------------------------------------------------
// PDAS projection
// ---------------------------------------------------------------------------

namespace {

struct BoxPdasResult {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  // over the supplied equality-treated constraints
  std::vector<signed char> status;
  int iterations = 0;
};

/// Box projection with a fixed set of equality-treated linear constraints
/// (Hintermueller-Ito-Kunisch active-set iteration).
BoxPdasResult box_pdas(const Eigen::VectorXd& c, const SparseMatrix& M,
                       const std::vector<const LinearConstraint*>& eqs,
                       const PdasOptions& opts) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(eqs.size());
  const double lo = opts.box_lo, hi = opts.box_hi;

  // status: 0 inactive, +1 at the upper bound, -1 at the lower bound
  std::vector<signed char> status(n, 0);
  for (int i = 0; i < n; ++i)
    status[i] = c[i] > hi ? +1 : (c[i] < lo ? -1 : 0);

  // hysteresis band for the set updates: candidates produced by small line
  // search steps carry hundreds of nodes within round-off of the bounds,
  // and bit-level noise must not flip their status back and forth
  double m_diag_max = 0.0;
  for (int i = 0; i < n; ++i) m_diag_max = std::max(m_diag_max, M.coeff(i, i));
  const double tol = 1e-11 * m_diag_max * std::max(1.0, c.cwiseAbs().maxCoeff());

  const Eigen::VectorXd Mc = M * c;
  Eigen::VectorXd z(n), lambda = Eigen::VectorXd::Zero(m);

  for (int it = 1; it <= opts.max_iterations; ++it) {
    std::vector<int> inactive;
    inactive.reserve(n);
    std::vector<int> pos(n, -1);
    for (int i = 0; i < n; ++i)
      if (status[i] == 0) {
        pos[i] = static_cast<int>(inactive.size());
        inactive.push_back(i);
      }
    const int ni = static_cast<int>(inactive.size());
    if (ni == 0 && m > 0)
      throw PdasFailure("pdas: no inactive nodes left to satisfy the integral constraints");

    Eigen::VectorXd z_active = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (status[i] != 0) z_active[i] = status[i] > 0 ? hi : lo;
    const Eigen::VectorXd Mza = M * z_active;

    // bordered system on the inactive set:
    //   M_II z_I - A_I^T lambda = (M c)_I - (M z_A)_I
    //   A_I z_I = b - A_A z_A
    Eigen::VectorXd rhs0(ni);
    for (int k = 0; k < ni; ++k) rhs0[k] = Mc[inactive[k]] - Mza[inactive[k]];

    std::vector<Triplet> trips;
    for (int col = 0; col < M.outerSize(); ++col)
      for (SparseMatrix::InnerIterator itM(M, col); itM; ++itM)
        if (pos[itM.row()] >= 0 && pos[itM.col()] >= 0)
          trips.emplace_back(pos[itM.row()], pos[itM.col()], itM.value());
    SparseMatrix Mii(ni, ni);
    Mii.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(Mii);
    if (ldlt.info() != Eigen::Success)
      throw PdasFailure("pdas: inactive-set metric block is not SPD");

    Eigen::VectorXd y0 = ldlt.solve(rhs0);
    if (m > 0) {
      Eigen::MatrixXd Ai(ni, m);
      Eigen::VectorXd bp(m);
      for (int j = 0; j < m; ++j) {
        for (int k = 0; k < ni; ++k) Ai(k, j) = eqs[j]->a[inactive[k]];
        bp[j] = eqs[j]->b - eqs[j]->a.dot(z_active);
      }
      Eigen::MatrixXd X = ldlt.solve(Ai);
      Eigen::MatrixXd S = Ai.transpose() * X;
      Eigen::FullPivLU<Eigen::MatrixXd> slu(S);
      slu.setThreshold(1e-12);
      if (slu.rank() < m)
        throw PdasFailure("pdas: constraint system is singular on the inactive set");
      lambda = slu.solve(bp - Ai.transpose() * y0);
      y0 += X * lambda;
    }

    z = z_active;
    for (int k = 0; k < ni; ++k) z[inactive[k]] = y0[k];

    // stationarity defect and active-set update
    Eigen::VectorXd w = M * (z - c);
    for (int j = 0; j < m; ++j) w -= lambda[j] * eqs[j]->a;

    bool changed = false;
    for (int i = 0; i < n; ++i) {
      signed char next = status[i];  // keep the status inside the band
      const double up = w[i] + (hi - z[i]);
      const double dn = w[i] - (z[i] - lo);
      if (up < -tol)
        next = +1;
      else if (dn > tol)
        next = -1;
      else if (up > tol && dn < -tol)
        next = 0;
      if (next != status[i]) {
        status[i] = next;
        changed = true;
      }
    }
    if (!changed) {
      BoxPdasResult out;
      out.z = z.cwiseMax(lo).cwiseMin(hi);  // strip round-off overshoot
      out.lambda = lambda;
      out.status = std::move(status);
      out.iterations = it;
      return out;
    }
  }
  throw PdasFailure("pdas: active-set cycle limit exceeded");
}

}  // namespace

ProjectionResult pdas_project(const Eigen::VectorXd& candidate, const SparseMatrix& metric,
                              const std::vector<LinearConstraint>& constraints,
                              const PdasOptions& opts, const std::vector<char>* warm_working) {
  const int n = static_cast<int>(candidate.size());
  if (metric.rows() != n || metric.cols() != n)
    throw std::invalid_argument("pdas_project: metric size mismatch");
  for (const auto& lc : constraints)
    if (lc.a.size() != n) throw std::invalid_argument("pdas_project: constraint size mismatch");
  const int m = static_cast<int>(constraints.size());

  std::vector<char> working(m, 0);
  for (int j = 0; j < m; ++j) {
    if (constraints[j].equality) {
      working[j] = 1;
    } else if (warm_working && static_cast<int>(warm_working->size()) == m) {
      working[j] = (*warm_working)[j];
    } else {
      // seed with constraints violated by the clamped candidate
      Eigen::VectorXd cl = candidate.cwiseMax(opts.box_lo).cwiseMin(opts.box_hi);
      const double scale = std::max(1.0, std::abs(constraints[j].b));
      working[j] = constraints[j].a.dot(cl) < constraints[j].b - 1e-12 * scale;
    }
  }

  const int max_outer = 4 * m + 8;
  for (int round = 0; round < max_outer; ++round) {
    std::vector<const LinearConstraint*> eqs;
    std::vector<int> eq_index;
    for (int j = 0; j < m; ++j)
      if (working[j]) {
        eqs.push_back(&constraints[j]);
        eq_index.push_back(j);
      }

    BoxPdasResult box = box_pdas(candidate, metric, eqs, opts);

    // drop the most negative multiplier of a working inequality
    int drop = -1;
    double most_negative = -1e-12;
    for (std::size_t k = 0; k < eq_index.size(); ++k) {
      const int j = eq_index[k];
      if (constraints[j].equality) continue;
      const double scale = std::max(1.0, constraints[j].a.cwiseAbs().maxCoeff());
      if (box.lambda[k] < most_negative * scale) {
        most_negative = box.lambda[k] / scale;
        drop = j;
      }
    }
    if (drop >= 0) {
      working[drop] = 0;
      continue;
    }

    // add the most violated non-working inequality
    int add = -1;
    double worst = -1e-10;
    for (int j = 0; j < m; ++j) {
      if (working[j] || constraints[j].equality) continue;
      const double scale =
          std::max({1.0, std::abs(constraints[j].b), constraints[j].a.cwiseAbs().sum()});
      const double defect = (constraints[j].a.dot(box.z) - constraints[j].b) / scale;
      if (defect < worst) {
        worst = defect;
        add = j;
      }
    }
    if (add >= 0) {
      working[add] = 1;
      continue;
    }

    ProjectionResult out;
    out.phi = box.z;
    out.lambda = Eigen::VectorXd::Zero(m);
    for (std::size_t k = 0; k < eq_index.size(); ++k) out.lambda[eq_index[k]] = box.lambda[k];
    out.working = working;
    out.pdas_iterations = box.iterations;
    return out;
  }
  throw PdasFailure("pdas: inequality working-set loop did not settle");
}

// ---------------------------------------------------------------------------
// VMPT loop
// ---------------------------------------------------------------------------

namespace {

double metric_norm(const SparseMatrix& M, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(M * v)));
}

double inactive_fraction(const Eigen::VectorXd& phi) {
  int inactive = 0;
  for (int i = 0; i < phi.size(); ++i)
    if (std::abs(phi[i]) < 1.0 - 1e-14) ++inactive;
  return static_cast<double>(inactive) / std::max<int>(1, static_cast<int>(phi.size()));
}

enum class RoundReason { stationary, iteration_cap, needs_refinement };

struct RoundState {
  Eigen::VectorXd phi;
  FlowState state;
  MultiplierState multipliers;
  RoundReason reason = RoundReason::iteration_cap;
};

/// One VMPT descent run on a fixed mesh; records into `history`.
RoundState run_vmpt_round(const Evaluator& eval, const SparseMatrix& M,
                          const std::vector<LinearConstraint>& lincons, Eigen::VectorXd phi,
                          double epsilon, const OptimizerConfig& config, int& iter_counter,
                          std::vector<IterationRecord>& history,
                          const OptimizeMonitor* monitor) {
  const Mesh& mesh = eval.mesh();
  Eigen::SimplicialLDLT<SparseMatrix> metric_solver(M);
  if (metric_solver.info() != Eigen::Success)
    throw std::runtime_error("optimize: metric factorization failed");

  PdasOptions pdas_opts;
  std::vector<char> warm_working;

  auto project = [&](const Eigen::VectorXd& cand) {
    ProjectionResult pr = pdas_project(cand, M, lincons, pdas_opts,
                                       warm_working.empty() ? nullptr : &warm_working);
    warm_working = pr.working;
    return pr;
  };

  RoundState rs;

  // start from the feasible projection of the incoming iterate
  ProjectionResult proj0 = project(phi);
  phi = proj0.phi;
  FlowState state = eval.solve_state(phi);
  double J = eval.objective(phi, state).value;

  auto make_record = [&](double J_val, const Eigen::VectorXd& lam, double tau, double step_norm) {
    IterationRecord rec;
    rec.iter = iter_counter;
    rec.objective = J_val;
    const auto cons = eval.constraint_values(phi, state);
    for (const auto& c : cons) rec.constraint_values.push_back(c.value);
    for (int j = 0; j < lam.size(); ++j) rec.multipliers.push_back(lam[j]);
    rec.tau = tau;
    rec.step_norm = step_norm;
    rec.dofs = mesh.n_vertices();
    rec.inactive_fraction = inactive_fraction(phi);
    rec.active_nodes = mesh.n_vertices() -
                       static_cast<int>(std::lround(rec.inactive_fraction * mesh.n_vertices()));
    rec.epsilon = epsilon;
    return rec;
  };

  auto finish = [&](RoundReason reason, const Eigen::VectorXd& lam,
                    const std::vector<char>& working) {
    rs.phi = phi;
    rs.state = state;
    rs.reason = reason;
    rs.multipliers.lambdas = lam;
    rs.multipliers.active.assign(working.begin(), working.end());
    const auto cons = eval.constraint_values(phi, state);
    rs.multipliers.residuals.resize(static_cast<int>(cons.size()));
    rs.multipliers.slackness.resize(static_cast<int>(cons.size()));
    for (std::size_t j = 0; j < cons.size(); ++j) {
      rs.multipliers.residuals[static_cast<int>(j)] = cons[j].value;
      rs.multipliers.slackness[static_cast<int>(j)] =
          (j < static_cast<std::size_t>(lam.size()) ? lam[static_cast<int>(j)] : 0.0) *
          cons[j].value;
    }
    return rs;
  };

  // initial record (iteration 0 of this round)
  {
    IterationRecord rec = make_record(J, Eigen::VectorXd::Zero(lincons.size()), 0.0, 0.0);
    history.push_back(rec);
    if (monitor && monitor->on_iterate)
      monitor->on_iterate(rec, mesh, phi, eval.needs_state() ? &state : nullptr);
    ++iter_counter;
  }

  const double phi_norm_floor = 1e-8;
  double tau_accepted = config.armijo.initial_tau;

  for (int k = 0; k < config.max_outer_iters; ++k) {
    if (inactive_fraction(phi) < config.inactive_fraction_floor)
      return finish(RoundReason::needs_refinement, Eigen::VectorXd::Zero(lincons.size()),
                    warm_working);

    const ReducedGradient grad = eval.gradient(phi, state);
    const Eigen::VectorXd g = grad.total();
    const Eigen::VectorXd v = metric_solver.solve(g);

    double tau = std::min(config.armijo.initial_tau, 2.0 * tau_accepted);
    ProjectionResult proj;
    FlowState state_new;
    double J_new = 0, m_dec = 0, step_norm = 0;
    bool accepted = false, stationary = false;

    const double noise_floor = 1e-12 * std::max(1.0, std::abs(J));
    for (int bt = 0; bt <= config.armijo.max_backtracks; ++bt) {
      proj = project(phi - tau * v);
      const Eigen::VectorXd step = phi - proj.phi;
      m_dec = g.dot(step);
      step_norm = metric_norm(M, step);

      if (m_dec <= noise_floor) {
        stationary = true;  // projected gradient vanishes along the arc
        break;
      }
      state_new = eval.solve_state(proj.phi, &state);
      J_new = eval.objective(proj.phi, state_new).value;
      if (std::getenv("PFTO_LS_TRACE"))
        std::fprintf(stderr, "ls tau=%.3e m_dec=%.6e dJ=%.6e\n", tau, m_dec, J_new - J);
      if (J_new <= J - config.armijo.sufficient_decrease * m_dec) {
        accepted = true;
        break;
      }
      tau *= config.armijo.shrink;
      if (tau < 1e-12) break;
    }

    if (!accepted && !stationary) {
      // exhausted backtracking: a predicted decrease at or below the
      // evaluation noise of the re-solved objective counts as stationary
      if (m_dec <= 1e-8 * std::max(1.0, std::abs(J))) {
        stationary = true;
      } else {
        std::ostringstream msg;
        msg << "optimize: line search failed after " << config.armijo.max_backtracks
            << " backtracks (last tau " << tau << ", predicted decrease " << m_dec << ")";
        throw std::runtime_error(msg.str());
      }
    }
    if (stationary)
      return finish(RoundReason::stationary, proj.lambda / std::max(tau, 1e-300),
                    proj.working);

    phi = proj.phi;
    state = state_new;
    J = J_new;
    tau_accepted = tau;
    const Eigen::VectorXd lam = proj.lambda / tau;

    IterationRecord rec = make_record(J, lam, tau, step_norm);
    history.push_back(rec);
    if (monitor && monitor->on_iterate)
      monitor->on_iterate(rec, mesh, phi, eval.needs_state() ? &state : nullptr);
    ++iter_counter;

    if (step_norm <= config.step_tol * std::max(metric_norm(M, phi), phi_norm_floor))
      return finish(RoundReason::stationary, lam, proj.working);
  }
  return finish(RoundReason::iteration_cap, Eigen::VectorXd::Zero(lincons.size()),
                warm_working);
}

}  // namespace

OptimizeOutcome optimize(const ProblemSpec& spec, const OptimizeMonitor* monitor) {
  spec.validate();
  const OptimizerConfig& config = spec.optimizer;

  Mesh mesh = generate_rectangle_mesh(spec.domain.width, spec.domain.height, spec.domain.nx,
                                      spec.domain.ny);
  double epsilon = spec.physics.epsilon;
  const double eps_final = spec.epsilon_final > 0 ? spec.epsilon_final : epsilon;
  double budget = config.max_dofs;

  // pre-refinement: resolve the initial interface before optimizing
  for (int pass = 0; pass < 40 && mesh.n_vertices() < budget; ++pass) {
    Eigen::VectorXd phi0 = initial_phi_field(spec, mesh);
    Eigen::VectorXd eta = phase_jump_indicator(mesh, phi0);
    if (eta.maxCoeff() <= 1e-14) break;
    std::vector<int> marked = dorfler_mark(eta, config.dorfler_fraction);
    if (marked.empty()) break;
    mesh = refine_marked(mesh, marked).mesh;
  }
  Eigen::VectorXd phi = initial_phi_field(spec, mesh);

  OptimizeOutcome out;
  out.has_state = spec.needs_state();
  int iter_counter = 0;

  while (true) {
    StageRecord stage;
    stage.epsilon = epsilon;
    stage.dof_budget = static_cast<int>(budget);

    RoundState rs;
    const int max_rounds = 60;
    for (int round = 0; round < max_rounds; ++round) {
      Evaluator eval(spec, mesh, epsilon);
      const SparseMatrix M = eval.metric_matrix(config.metric);
      const std::vector<LinearConstraint> lincons = eval.linear_constraints();

      const int hist_before = static_cast<int>(out.history.size());
      bool projection_failed = false;
      try {
        rs = run_vmpt_round(eval, M, lincons, phi, epsilon, config, iter_counter, out.history,
                            monitor);
        phi = rs.phi;
      } catch (const PdasFailure&) {
        projection_failed = true;  // too few inactive dofs: refine and retry
      }
      stage.iterations += static_cast<int>(out.history.size()) - hist_before;

      const bool wants_refinement =
          projection_failed || rs.reason == RoundReason::needs_refinement;
      const bool below_budget = mesh.n_vertices() < budget;
      if (!wants_refinement && (!below_budget || rs.reason == RoundReason::iteration_cap)) {
        if (rs.reason == RoundReason::iteration_cap && below_budget) {
          // fall through to refinement: fresh dofs often unlock progress
        } else {
          stage.stationary = rs.reason == RoundReason::stationary;
          break;
        }
      }

      // refinement pass on the phase-field jump indicator; forced passes
      // (safeguard) may exceed the stage budget
      Eigen::VectorXd eta = phase_jump_indicator(mesh, phi);
      if (eta.maxCoeff() <= 1e-14) {
        stage.stationary = rs.reason == RoundReason::stationary;
        break;
      }
      std::vector<int> marked = dorfler_mark(eta, config.dorfler_fraction);
      if (marked.empty()) {
        stage.stationary = rs.reason == RoundReason::stationary;
        break;
      }
      RefinedMesh refined = refine_marked(mesh, marked);
      phi = refined.prolongation.apply(phi);
      mesh = std::move(refined.mesh);
    }

    stage.final_dofs = mesh.n_vertices();
    out.stages.push_back(stage);
    out.stationary = stage.stationary;
    out.multipliers = rs.multipliers;
    out.final_epsilon = epsilon;

    if (epsilon <= eps_final * (1.0 + 1e-12)) break;
    epsilon = std::max(0.5 * epsilon, eps_final);
    budget = std::ceil(budget * config.dof_growth);
  }

  out.mesh = std::move(mesh);
  out.phi = phi;
  if (out.has_state) {
    Evaluator eval(spec, out.mesh, out.final_epsilon);
    out.state = eval.solve_state(out.phi);
    out.flux = eval.flow().flux_report();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constraint-qualification diagnostic
// ---------------------------------------------------------------------------

ConstraintQualificationReport constraint_qualification_diagnostic(const Evaluator& eval,
                                                                  const Eigen::VectorXd& phi,
                                                                  const FlowState& state,
                                                                  unsigned seed,
                                                                  int extra_directions) {
  ConstraintQualificationReport rep;
  const Mesh& mesh = eval.mesh();
  const auto cons = eval.constraint_values(phi, state);
  const auto& specs = eval.spec().constraints;

  // derivative duals D G_i (adjoint route for state-dependent constraints)
  std::vector<Eigen::VectorXd> duals;
  for (std::size_t j = 0; j < cons.size(); ++j) {
    const double scale = std::max(1.0, std::abs(cons[j].value));
    const bool active = specs[j].is_equality() || std::abs(cons[j].value) <= 1e-8 * scale;
    if (!active) continue;
    rep.active_labels.push_back(specs[j].label());
    if (specs[j].is_linear_in_phi() || !eval.needs_state()) {
      duals.push_back(cons[j].d_phi_total());
    } else {
      NewtonOperator op = eval.newton_operator(phi, state);
      AdjointState adj = solve_adjoint(op, cons[j]);
      ReducedGradient g = reduced_gradient(mesh, phi, state, adj, cons[j], eval.params());
      duals.push_back(g.total());
    }
  }
  rep.n_active = static_cast<int>(duals.size());
  if (rep.n_active == 0) {
    rep.regular_point_evidence = true;  // trivially regular
    return rep;
  }

  const int n_dirs = rep.n_active + std::max(extra_directions, 4);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd R(rep.n_active, n_dirs);
  for (int d = 0; d < n_dirs; ++d) {
    Eigen::VectorXd psi(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) psi[i] = unif(rng);  // feasible box element
    const Eigen::VectorXd dir = psi - phi;
    for (int i = 0; i < rep.n_active; ++i) R(i, d) = duals[i].dot(dir);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
  const Eigen::VectorXd sv = svd.singularValues();
  rep.sigma_max = sv.size() ? sv[0] : 0.0;
  rep.sigma_min = sv.size() ? sv[sv.size() - 1] : 0.0;
  rep.sampled_rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * std::max(1.0, rep.sigma_max)) ++rep.sampled_rank;
  rep.regular_point_evidence = rep.sampled_rank == rep.n_active;
  return rep;
}

}  // namespace pfto
