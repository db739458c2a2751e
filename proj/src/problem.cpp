#include "pfto/problem.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace pfto {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace {

json vec2_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("config: expected [x, y]");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

json box_to_json(const Box& b) { return json::array({b.x0, b.x1, b.y0, b.y1}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::invalid_argument("config: expected [x0, x1, y0, y1]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json profile_to_json(const BoundaryProfile& p) {
  json j;
  switch (p.type) {
    case BoundaryProfile::Type::no_slip:
      j["type"] = "no_slip";
      break;
    case BoundaryProfile::Type::constant:
      j["type"] = "constant";
      j["value"] = vec2_to_json(p.value);
      break;
    case BoundaryProfile::Type::parabolic_jet:
      j["type"] = "parabolic_jet";
      j["direction"] = vec2_to_json(p.direction);
      j["center"] = p.center;
      j["half_width"] = p.half_width;
      j["amplitude"] = p.amplitude;
      break;
  }
  if (p.rescalable) j["rescalable"] = true;
  return j;
}

BoundaryProfile profile_from_json(const json& j) {
  BoundaryProfile p;
  const std::string type = j.at("type").get<std::string>();
  if (type == "no_slip") {
    p.type = BoundaryProfile::Type::no_slip;
  } else if (type == "constant") {
    p.type = BoundaryProfile::Type::constant;
    p.value = vec2_from_json(j.at("value"));
  } else if (type == "parabolic_jet") {
    p.type = BoundaryProfile::Type::parabolic_jet;
    p.direction = vec2_from_json(j.at("direction"));
    p.center = j.at("center").get<double>();
    p.half_width = j.at("half_width").get<double>();
    p.amplitude = j.at("amplitude").get<double>();
  } else {
    throw std::invalid_argument("config: unknown boundary profile type '" + type + "'");
  }
  p.rescalable = j.value("rescalable", false);
  return p;
}

const char* term_kind_name(ObjectiveTerm::Kind k) {
  switch (k) {
    case ObjectiveTerm::Kind::ginzburg_landau: return "ginzburg_landau";
    case ObjectiveTerm::Kind::penalty_hat_alpha: return "penalty_hat_alpha";
    case ObjectiveTerm::Kind::surface_force: return "surface_force";
    case ObjectiveTerm::Kind::volume_drag: return "volume_drag";
    case ObjectiveTerm::Kind::potential_power: return "potential_power";
    case ObjectiveTerm::Kind::rock_cost: return "rock_cost";
    case ObjectiveTerm::Kind::moreau_yosida: return "moreau_yosida";
    case ObjectiveTerm::Kind::least_squares: return "least_squares";
  }
  return "?";
}

ObjectiveTerm::Kind term_kind_from_name(const std::string& s) {
  for (auto k : {ObjectiveTerm::Kind::ginzburg_landau, ObjectiveTerm::Kind::penalty_hat_alpha,
                 ObjectiveTerm::Kind::surface_force, ObjectiveTerm::Kind::volume_drag,
                 ObjectiveTerm::Kind::potential_power, ObjectiveTerm::Kind::rock_cost,
                 ObjectiveTerm::Kind::moreau_yosida, ObjectiveTerm::Kind::least_squares})
    if (s == term_kind_name(k)) return k;
  throw std::invalid_argument("config: unknown objective term kind '" + s + "'");
}

const char* constraint_kind_name(ConstraintSpec::Kind k) {
  switch (k) {
    case ConstraintSpec::Kind::volume_lower: return "volume_lower";
    case ConstraintSpec::Kind::volume_upper: return "volume_upper";
    case ConstraintSpec::Kind::mass: return "mass";
    case ConstraintSpec::Kind::center_of_mass: return "center_of_mass";
    case ConstraintSpec::Kind::potential_power_cap: return "potential_power_cap";
  }
  return "?";
}

}  // namespace

bool ProblemSpec::needs_state() const {
  for (const auto& t : objective)
    if (t.needs_state()) return true;
  for (const auto& c : constraints)
    if (!c.is_linear_in_phi()) return true;
  return false;
}

void ProblemSpec::validate() const {
  if (spec_version != 1) throw std::invalid_argument("config: unsupported spec_version");
  if (!(domain.width > 0) || !(domain.height > 0))
    throw std::invalid_argument("config: domain dimensions must be positive");
  if (domain.nx < 1 || domain.ny < 1)
    throw std::invalid_argument("config: mesh seed resolution must be >= 1");
  physics.validate();
  if (epsilon_final > physics.epsilon)
    throw std::invalid_argument("config: epsilon_final exceeds the initial epsilon");

  for (const auto& t : objective) {
    if (!std::isfinite(t.weight)) throw std::invalid_argument("config: non-finite weight");
    if (t.kind == ObjectiveTerm::Kind::surface_force ||
        t.kind == ObjectiveTerm::Kind::volume_drag) {
      if (std::abs(t.direction.norm() - 1.0) > 1e-12)
        throw std::invalid_argument("config: force direction must be a unit vector");
    }
    if (t.kind == ObjectiveTerm::Kind::volume_drag) {
      const Box& b = t.eta_box;
      if (!(b.x0 > 0 && b.x1 < domain.width && b.y0 > 0 && b.y1 < domain.height &&
            b.x0 < b.x1 && b.y0 < b.y1))
        throw std::invalid_argument("config: eta box must be interior to the domain");
    }
    if (t.kind == ObjectiveTerm::Kind::rock_cost)
      for (const auto& r : t.rocks)
        if (!(r.sigma > 0)) throw std::invalid_argument("config: rock radius must be positive");
    if (t.kind == ObjectiveTerm::Kind::moreau_yosida && (!(t.my_s > 0) || !(t.my_cap > 0)))
      throw std::invalid_argument("config: moreau_yosida needs s > 0 and cap > 0");
  }

  double beta_lower = -1.0, beta_upper = 1.0;
  for (const auto& c : constraints) {
    switch (c.kind) {
      case ConstraintSpec::Kind::volume_lower:
      case ConstraintSpec::Kind::volume_upper:
        if (!(c.beta > -1.0 && c.beta < 1.0))
          throw std::invalid_argument("config: volume bound beta must lie in (-1, 1)");
        if (c.kind == ConstraintSpec::Kind::volume_lower)
          beta_lower = std::max(beta_lower, c.beta);
        else
          beta_upper = std::min(beta_upper, c.beta);
        break;
      case ConstraintSpec::Kind::mass:
        if (!(c.max_mass > 0)) throw std::invalid_argument("config: mass bound must be positive");
        break;
      case ConstraintSpec::Kind::center_of_mass:
        if (!(c.point.x() > 0 && c.point.x() < domain.width && c.point.y() > 0 &&
              c.point.y() < domain.height))
          throw std::invalid_argument("config: center of mass must be interior to the domain");
        break;
      case ConstraintSpec::Kind::potential_power_cap:
        throw std::invalid_argument(
            "config: the potential-power cap is a nonlinear state constraint; use the "
            "moreau_yosida objective term");
    }
  }
  if (beta_lower > beta_upper)
    throw std::invalid_argument("config: infeasible volume window (lower bound above upper)");

  if (initial_phi.type == InitialPhi::Type::ball) {
    if (!(initial_phi.radius > 0))
      throw std::invalid_argument("config: initial ball radius must be positive");
  }
  if (initial_phi.type == InitialPhi::Type::constant &&
      std::abs(initial_phi.value) > 1.0)
    throw std::invalid_argument("config: initial constant must lie in [-1, 1]");

  // Boundary data: flux compatibility (and corner consistency) on the seed
  // mesh; throws when incompatible without rescalable segments.
  Mesh seed = generate_rectangle_mesh(domain.width, domain.height, domain.nx, domain.ny);
  FlowSolver probe(seed, physics);
  (void)probe;
}

json ProblemSpec::to_json() const {
  json j;
  j["spec_version"] = spec_version;
  if (!preset.empty()) j["preset"] = preset;
  j["domain"] = {{"width", domain.width},
                 {"height", domain.height},
                 {"nx", domain.nx},
                 {"ny", domain.ny}};
  json phys;
  phys["mu"] = physics.mu;
  phys["alpha_bar"] = physics.alpha_bar;
  phys["gamma"] = physics.gamma;
  phys["epsilon_initial"] = physics.epsilon;
  phys["epsilon_final"] = epsilon_final > 0 ? epsilon_final : physics.epsilon;
  phys["c0"] = physics.c0;
  phys["hat_alpha_mode"] =
      physics.hat_alpha_mode == PhysicalParams::HatAlphaMode::equal_alpha ? "equal_alpha"
                                                                          : "zero";
  j["physics"] = phys;

  static const char* side_names[4] = {"left", "right", "bottom", "top"};
  json bnd;
  for (int s = 0; s < 4; ++s) bnd[side_names[s]] = profile_to_json(physics.boundary[s]);
  j["boundary"] = bnd;

  json init;
  switch (initial_phi.type) {
    case InitialPhi::Type::constant:
      init["type"] = "constant";
      init["value"] = initial_phi.value;
      break;
    case InitialPhi::Type::ball:
      init["type"] = "ball";
      init["center"] = vec2_to_json(initial_phi.center);
      init["radius"] = initial_phi.radius;
      break;
    case InitialPhi::Type::file:
      init["type"] = "file";
      init["path"] = initial_phi.path;
      break;
  }
  j["initial_phi"] = init;

  json terms = json::array();
  for (const auto& t : objective) {
    json jt;
    jt["kind"] = term_kind_name(t.kind);
    jt["weight"] = t.weight;
    switch (t.kind) {
      case ObjectiveTerm::Kind::surface_force:
        jt["direction"] = vec2_to_json(t.direction);
        break;
      case ObjectiveTerm::Kind::volume_drag:
        jt["direction"] = vec2_to_json(t.direction);
        jt["eta_box"] = box_to_json(t.eta_box);
        break;
      case ObjectiveTerm::Kind::rock_cost: {
        json rocks = json::array();
        for (const auto& r : t.rocks)
          rocks.push_back({{"center", vec2_to_json(r.center)},
                           {"sigma", r.sigma},
                           {"cost", r.cost}});
        jt["rocks"] = rocks;
        break;
      }
      case ObjectiveTerm::Kind::moreau_yosida:
        jt["s"] = t.my_s;
        jt["cap"] = t.my_cap;
        break;
      case ObjectiveTerm::Kind::least_squares:
        jt["box"] = box_to_json(t.ls_box);
        jt["delta_p"] = t.ls_delta_p;
        jt["delta_u"] = t.ls_delta_u;
        jt["u_target"] = vec2_to_json(t.ls_u_target);
        jt["p_target"] = t.ls_p_target;
        break;
      default:
        break;
    }
    terms.push_back(jt);
  }
  j["objective"] = terms;

  json cons = json::array();
  for (const auto& c : constraints) {
    json jc;
    jc["kind"] = constraint_kind_name(c.kind);
    switch (c.kind) {
      case ConstraintSpec::Kind::volume_lower:
      case ConstraintSpec::Kind::volume_upper:
        jc["beta"] = c.beta;
        break;
      case ConstraintSpec::Kind::mass:
        jc["max_mass"] = c.max_mass;
        break;
      case ConstraintSpec::Kind::center_of_mass:
        jc["point"] = vec2_to_json(c.point);
        jc["axis"] = c.axis;
        break;
      default:
        break;
    }
    cons.push_back(jc);
  }
  j["constraints"] = cons;

  json opt;
  opt["metric"] = optimizer.metric == OptimizerConfig::Metric::h1_scaled ? "h1_scaled" : "l2";
  opt["armijo"] = {{"initial_tau", optimizer.armijo.initial_tau},
                   {"shrink", optimizer.armijo.shrink},
                   {"sufficient_decrease", optimizer.armijo.sufficient_decrease},
                   {"max_backtracks", optimizer.armijo.max_backtracks}};
  opt["step_tol"] = optimizer.step_tol;
  opt["slackness_tol"] = optimizer.slackness_tol;
  opt["max_outer_iters"] = optimizer.max_outer_iters;
  opt["inactive_fraction_floor"] = optimizer.inactive_fraction_floor;
  opt["max_dofs"] = optimizer.max_dofs;
  opt["dof_growth"] = optimizer.dof_growth;
  opt["dorfler_fraction"] = optimizer.dorfler_fraction;
  j["optimizer"] = opt;

  j["output"] = {{"directory", output.directory},
                 {"snapshot_every", output.snapshot_every},
                 {"dump_adjoint", output.dump_adjoint},
                 {"seed", output.seed}};
  return j;
}

ProblemSpec ProblemSpec::from_json(const json& j) {
  ProblemSpec s;
  s.spec_version = j.value("spec_version", 1);
  s.preset = j.value("preset", std::string());

  const json& d = j.at("domain");
  s.domain.width = d.at("width").get<double>();
  s.domain.height = d.at("height").get<double>();
  s.domain.nx = d.at("nx").get<int>();
  s.domain.ny = d.at("ny").get<int>();

  const json& p = j.at("physics");
  s.physics.mu = p.at("mu").get<double>();
  s.physics.alpha_bar = p.at("alpha_bar").get<double>();
  s.physics.gamma = p.at("gamma").get<double>();
  s.physics.epsilon = p.at("epsilon_initial").get<double>();
  s.epsilon_final = p.value("epsilon_final", s.physics.epsilon);
  s.physics.c0 = p.value("c0", M_PI / 2);
  const std::string ham = p.value("hat_alpha_mode", "equal_alpha");
  if (ham == "equal_alpha")
    s.physics.hat_alpha_mode = PhysicalParams::HatAlphaMode::equal_alpha;
  else if (ham == "zero")
    s.physics.hat_alpha_mode = PhysicalParams::HatAlphaMode::zero;
  else
    throw std::invalid_argument("config: unknown hat_alpha_mode '" + ham + "'");

  static const char* side_names[4] = {"left", "right", "bottom", "top"};
  if (j.contains("boundary"))
    for (int side = 0; side < 4; ++side)
      if (j["boundary"].contains(side_names[side]))
        s.physics.boundary[side] = profile_from_json(j["boundary"][side_names[side]]);

  if (j.contains("initial_phi")) {
    const json& init = j["initial_phi"];
    const std::string type = init.at("type").get<std::string>();
    if (type == "constant") {
      s.initial_phi.type = InitialPhi::Type::constant;
      s.initial_phi.value = init.value("value", 0.0);
    } else if (type == "ball") {
      s.initial_phi.type = InitialPhi::Type::ball;
      s.initial_phi.center = vec2_from_json(init.at("center"));
      s.initial_phi.radius = init.at("radius").get<double>();
    } else if (type == "file") {
      s.initial_phi.type = InitialPhi::Type::file;
      s.initial_phi.path = init.at("path").get<std::string>();
    } else {
      throw std::invalid_argument("config: unknown initial_phi type '" + type + "'");
    }
  }

  for (const json& jt : j.value("objective", json::array())) {
    ObjectiveTerm t;
    t.kind = term_kind_from_name(jt.at("kind").get<std::string>());
    t.weight = jt.value("weight", 1.0);
    switch (t.kind) {
      case ObjectiveTerm::Kind::surface_force:
        t.direction = vec2_from_json(jt.at("direction"));
        break;
      case ObjectiveTerm::Kind::volume_drag:
        t.direction = vec2_from_json(jt.at("direction"));
        t.eta_box = box_from_json(jt.at("eta_box"));
        break;
      case ObjectiveTerm::Kind::rock_cost:
        for (const json& jr : jt.at("rocks"))
          t.rocks.push_back(Rock{vec2_from_json(jr.at("center")), jr.at("sigma").get<double>(),
                                 jr.at("cost").get<double>()});
        break;
      case ObjectiveTerm::Kind::moreau_yosida:
        t.my_s = jt.at("s").get<double>();
        t.my_cap = jt.at("cap").get<double>();
        break;
      case ObjectiveTerm::Kind::least_squares:
        t.ls_box = box_from_json(jt.at("box"));
        t.ls_delta_p = jt.value("delta_p", 0.0);
        t.ls_delta_u = jt.value("delta_u", 0.0);
        t.ls_u_target = vec2_from_json(jt.at("u_target"));
        t.ls_p_target = jt.value("p_target", 0.0);
        break;
      default:
        break;
    }
    s.objective.push_back(std::move(t));
  }

  for (const json& jc : j.value("constraints", json::array())) {
    const std::string kind = jc.at("kind").get<std::string>();
    if (kind == "center_of_mass" && !jc.contains("axis")) {
      // expands into one equality per coordinate
      for (int axis = 0; axis < 2; ++axis) {
        ConstraintSpec c;
        c.kind = ConstraintSpec::Kind::center_of_mass;
        c.point = vec2_from_json(jc.at("point"));
        c.axis = axis;
        s.constraints.push_back(std::move(c));
      }
      continue;
    }
    ConstraintSpec c;
    if (kind == "volume_lower") {
      c.kind = ConstraintSpec::Kind::volume_lower;
      c.beta = jc.at("beta").get<double>();
    } else if (kind == "volume_upper") {
      c.kind = ConstraintSpec::Kind::volume_upper;
      c.beta = jc.at("beta").get<double>();
    } else if (kind == "mass") {
      c.kind = ConstraintSpec::Kind::mass;
      c.max_mass = jc.at("max_mass").get<double>();
    } else if (kind == "center_of_mass") {
      c.kind = ConstraintSpec::Kind::center_of_mass;
      c.point = vec2_from_json(jc.at("point"));
      c.axis = jc.at("axis").get<int>();
    } else if (kind == "potential_power_cap") {
      c.kind = ConstraintSpec::Kind::potential_power_cap;
      c.cap = jc.at("cap").get<double>();
    } else {
      throw std::invalid_argument("config: unknown constraint kind '" + kind + "'");
    }
    s.constraints.push_back(std::move(c));
  }

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    const std::string metric = o.value("metric", "h1_scaled");
    if (metric == "h1_scaled")
      s.optimizer.metric = OptimizerConfig::Metric::h1_scaled;
    else if (metric == "l2")
      s.optimizer.metric = OptimizerConfig::Metric::l2;
    else
      throw std::invalid_argument("config: unknown metric '" + metric + "'");
    if (o.contains("armijo")) {
      const json& a = o["armijo"];
      s.optimizer.armijo.initial_tau = a.value("initial_tau", 1.0);
      s.optimizer.armijo.shrink = a.value("shrink", 0.5);
      s.optimizer.armijo.sufficient_decrease = a.value("sufficient_decrease", 1e-4);
      s.optimizer.armijo.max_backtracks = a.value("max_backtracks", 30);
    }
    s.optimizer.step_tol = o.value("step_tol", 1e-6);
    s.optimizer.slackness_tol = o.value("slackness_tol", 1e-8);
    s.optimizer.max_outer_iters = o.value("max_outer_iters", 400);
    s.optimizer.inactive_fraction_floor = o.value("inactive_fraction_floor", 0.02);
    s.optimizer.max_dofs = o.value("max_dofs", 10000);
    s.optimizer.dof_growth = o.value("dof_growth", 1.2);
    s.optimizer.dorfler_fraction = o.value("dorfler_fraction", 0.5);
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    s.output.directory = o.value("directory", "out");
    s.output.snapshot_every = o.value("snapshot_every", 0);
    s.output.dump_adjoint = o.value("dump_adjoint", false);
    s.output.seed = o.value("seed", 12345u);
  }
  return s;
}

ProblemSpec ProblemSpec::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  json j;
  is >> j;
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

ProblemSpec make_heavy_ground() {
  ProblemSpec s;
  s.preset = "heavy_ground";
  s.domain = {1.0, 1.0, 20, 20};
  s.physics.mu = 0.02;
  s.physics.alpha_bar = 5.0;
  s.physics.epsilon = 0.01;
  s.physics.gamma = 0.001;
  s.epsilon_final = 0.01;

  BoundaryProfile inflow;
  inflow.type = BoundaryProfile::Type::parabolic_jet;
  inflow.direction = Vec2(0, 1);
  inflow.center = 0.5;
  inflow.half_width = 1.0 / 6.0;
  inflow.amplitude = 2.0;

  BoundaryProfile out_left;
  out_left.type = BoundaryProfile::Type::parabolic_jet;
  out_left.direction = Vec2(-1, 0);
  out_left.center = 0.8;
  out_left.half_width = 1.0 / 12.0;
  out_left.amplitude = 1.0;
  out_left.rescalable = true;

  BoundaryProfile out_right = out_left;
  out_right.direction = Vec2(1, 0);

  s.physics.boundary[static_cast<int>(BoundaryTag::bottom)] = inflow;
  s.physics.boundary[static_cast<int>(BoundaryTag::left)] = out_left;
  s.physics.boundary[static_cast<int>(BoundaryTag::right)] = out_right;

  ObjectiveTerm gl;
  gl.kind = ObjectiveTerm::Kind::ginzburg_landau;
  ObjectiveTerm pen;
  pen.kind = ObjectiveTerm::Kind::penalty_hat_alpha;
  ObjectiveTerm rocks;
  rocks.kind = ObjectiveTerm::Kind::rock_cost;
  const double sigma = 0.15, cost = 50.0;
  rocks.rocks = {Rock{Vec2(0.5, 0.3), sigma, cost}, Rock{Vec2(0.15, 0.45), sigma, cost},
                 Rock{Vec2(0.85, 0.45), sigma, cost}, Rock{Vec2(0.5, 0.75), sigma, cost}};
  s.objective = {pen, rocks, gl};

  s.initial_phi.type = InitialPhi::Type::constant;
  s.initial_phi.value = 0.0;
  s.optimizer.max_dofs = 100000;
  s.optimizer.max_outer_iters = 500;
  return s;
}

ProblemSpec make_drag_surface() {
  ProblemSpec s;
  s.preset = "drag_surface";
  s.domain = {1.7, 0.4, 34, 8};
  s.physics.mu = 0.001;
  s.physics.alpha_bar = 0.03;
  s.physics.epsilon = 0.008;
  s.physics.gamma = 0.01;
  s.epsilon_final = 0.00025;

  BoundaryProfile g;
  g.type = BoundaryProfile::Type::constant;
  g.value = Vec2(1, 0);
  for (auto& b : s.physics.boundary) b = g;

  ObjectiveTerm gl;
  gl.kind = ObjectiveTerm::Kind::ginzburg_landau;
  ObjectiveTerm pen;
  pen.kind = ObjectiveTerm::Kind::penalty_hat_alpha;
  ObjectiveTerm force;
  force.kind = ObjectiveTerm::Kind::surface_force;
  force.direction = Vec2(1, 0);
  s.objective = {pen, gl, force};

  ConstraintSpec vol;
  vol.kind = ConstraintSpec::Kind::volume_upper;
  vol.beta = 0.975;
  s.constraints = {vol};

  s.initial_phi.type = InitialPhi::Type::ball;
  s.initial_phi.center = Vec2(0.5, 0.2);
  s.initial_phi.radius = 0.25;
  s.optimizer.max_dofs = 10000;
  return s;
}

ProblemSpec make_drag_volume() {
  ProblemSpec s = make_drag_surface();
  s.preset = "drag_volume";
  s.physics.mu = 0.01;
  for (auto& t : s.objective) {
    if (t.kind == ObjectiveTerm::Kind::surface_force) {
      t.kind = ObjectiveTerm::Kind::volume_drag;
      t.eta_box = Box{0.15, 1.0, 0.13, 0.27};
    }
  }
  return s;
}

ProblemSpec make_lift_power() {
  ProblemSpec s;
  s.preset = "lift_power";
  s.domain = {1.7, 0.4, 34, 8};
  s.physics.mu = 0.01;
  s.physics.alpha_bar = 2.0;
  s.physics.epsilon = 0.02;
  s.physics.gamma = 0.001;
  s.epsilon_final = 0.02;

  BoundaryProfile g;
  g.type = BoundaryProfile::Type::constant;
  g.value = Vec2(1, 0);
  for (auto& b : s.physics.boundary) b = g;

  ObjectiveTerm gl;
  gl.kind = ObjectiveTerm::Kind::ginzburg_landau;
  ObjectiveTerm pen;
  pen.kind = ObjectiveTerm::Kind::penalty_hat_alpha;
  ObjectiveTerm lift;
  lift.kind = ObjectiveTerm::Kind::surface_force;
  lift.direction = Vec2(0, -1);  // negative perpendicular of the flow direction
  ObjectiveTerm my;
  my.kind = ObjectiveTerm::Kind::moreau_yosida;
  my.my_s = 100.0;
  my.my_cap = 0.06;
  s.objective = {pen, gl, lift, my};

  ConstraintSpec lower;
  lower.kind = ConstraintSpec::Kind::volume_lower;
  lower.beta = 0.663 / 0.68;
  ConstraintSpec upper;
  upper.kind = ConstraintSpec::Kind::volume_upper;
  upper.beta = 0.665 / 0.68;
  ConstraintSpec com_x;
  com_x.kind = ConstraintSpec::Kind::center_of_mass;
  com_x.point = Vec2(0.5, 0.2);
  com_x.axis = 0;
  ConstraintSpec com_y = com_x;
  com_y.axis = 1;
  s.constraints = {lower, upper, com_x, com_y};

  s.initial_phi.type = InitialPhi::Type::ball;
  s.initial_phi.center = Vec2(0.5, 0.2);
  s.initial_phi.radius = 0.25;
  s.optimizer.max_dofs = 10000;
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"heavy_ground", "drag_surface", "drag_volume", "lift_power"};
}

ProblemSpec load_preset(const std::string& name) {
  ProblemSpec s;
  if (name == "heavy_ground")
    s = make_heavy_ground();
  else if (name == "drag_surface")
    s = make_drag_surface();
  else if (name == "drag_volume")
    s = make_drag_volume();
  else if (name == "lift_power")
    s = make_lift_power();
  else
    throw std::invalid_argument("unknown preset '" + name + "'");
  s.validate();
  return s;
}

std::string preset_json_text(const std::string& name) {
  return load_preset(name).to_json().dump(2) + "\n";
}

Eigen::VectorXd initial_phi_field(const ProblemSpec& spec, const Mesh& mesh) {
  Eigen::VectorXd phi(mesh.n_vertices());
  switch (spec.initial_phi.type) {
    case InitialPhi::Type::constant:
      phi.setConstant(spec.initial_phi.value);
      break;
    case InitialPhi::Type::ball:
      for (int i = 0; i < mesh.n_vertices(); ++i) {
        const double dist = (mesh.vertices[i] - spec.initial_phi.center).norm();
        phi[i] = clamped_sine((dist - spec.initial_phi.radius) /
                              (spec.physics.epsilon * spec.initial_phi.radius));
      }
      break;
    case InitialPhi::Type::file: {
      std::ifstream is(spec.initial_phi.path);
      if (!is) throw std::runtime_error("initial_phi: cannot open " + spec.initial_phi.path);
      int n = 0;
      is >> n;
      if (n != mesh.n_vertices())
        throw std::runtime_error("initial_phi: node count mismatch with the seed mesh");
      for (int i = 0; i < n; ++i) is >> phi[i];
      break;
    }
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

Evaluator::Evaluator(const ProblemSpec& spec, const Mesh& mesh, double epsilon)
    : spec_(&spec), mesh_(&mesh), params_(spec.physics) {
  params_.epsilon = epsilon;
  needs_state_ = spec.needs_state();
  if (needs_state_) flow_ = std::make_unique<FlowSolver>(mesh, params_);
  for (const auto& t : spec.objective) {
    if (t.kind == ObjectiveTerm::Kind::volume_drag) {
      eta_ = solve_eta_extension(mesh, t.eta_box, t.direction);
      break;  // one extension per problem (single volume-drag direction)
    }
  }
}

FlowState Evaluator::solve_state(const Eigen::VectorXd& phi, const FlowState* warm) const {
  if (!needs_state_) {
    FlowState s;
    s.u = Eigen::VectorXd::Zero(2 * (mesh_->n_vertices() + mesh_->n_edges()));
    s.p = Eigen::VectorXd::Zero(mesh_->n_vertices());
    return s;
  }
  return flow_->solve(phi, warm);
}

FunctionalValue Evaluator::eval_term(const ObjectiveTerm& term, const Eigen::VectorXd& phi,
                                     const FlowState& state) const {
  switch (term.kind) {
    case ObjectiveTerm::Kind::ginzburg_landau:
      return eval_ginzburg_landau(*mesh_, phi, params_.epsilon, params_.gamma, params_.c0);
    case ObjectiveTerm::Kind::penalty_hat_alpha:
      return eval_penalty_hat_alpha(*mesh_, phi, state, params_);
    case ObjectiveTerm::Kind::surface_force:
      return eval_diffuse_surface_force(*mesh_, phi, state, term.direction, params_.mu);
    case ObjectiveTerm::Kind::volume_drag:
      return eval_volume_drag(*mesh_, phi, state, eta_, params_.mu, params_.body_force);
    case ObjectiveTerm::Kind::potential_power:
      return eval_potential_power(*mesh_, phi, state, params_.mu, params_.body_force);
    case ObjectiveTerm::Kind::rock_cost:
      return eval_rock_cost(*mesh_, phi, term.rocks, params_.epsilon);
    case ObjectiveTerm::Kind::moreau_yosida:
      return eval_moreau_yosida(*mesh_, phi, state, term.my_s, term.my_cap, params_.mu,
                                params_.body_force);
    case ObjectiveTerm::Kind::least_squares: {
      const Vec2 ut = term.ls_u_target;
      const double pt = term.ls_p_target;
      return eval_least_squares(
          *mesh_, phi, state, term.ls_box, [ut](const Vec2&) { return ut; },
          [pt](const Vec2&) { return pt; }, term.ls_delta_p, term.ls_delta_u);
    }
  }
  throw std::logic_error("eval_term: unreachable");
}

FunctionalValue Evaluator::objective(const Eigen::VectorXd& phi, const FlowState& state) const {
  FunctionalValue total = FunctionalValue::zero(*mesh_);
  for (const auto& t : spec_->objective) total.axpy(t.weight, eval_term(t, phi, state));
  return total;
}

std::vector<FunctionalValue> Evaluator::constraint_values(const Eigen::VectorXd& phi,
                                                          const FlowState& state) const {
  std::vector<FunctionalValue> out;
  out.reserve(spec_->constraints.size());
  for (const auto& c : spec_->constraints)
    out.push_back(eval_constraint(c, *mesh_, phi, state, params_.mu, params_.body_force));
  return out;
}

NewtonOperator Evaluator::newton_operator(const Eigen::VectorXd& phi,
                                          const FlowState& state) const {
  if (!needs_state_) throw std::logic_error("newton_operator: problem has no flow state");
  return flow_->newton_operator(phi, state);
}

ReducedGradient Evaluator::gradient(const Eigen::VectorXd& phi, const FlowState& state,
                                    const Eigen::VectorXd* lambdas) const {
  FunctionalValue total = objective(phi, state);
  if (lambdas && lambdas->size() > 0) {
    const auto cons = constraint_values(phi, state);
    total = combine_with_multipliers(*mesh_, total, cons, *lambdas);
  }
  if (!needs_state_) {
    ReducedGradient g;
    g.l2_dual = total.d_phi_l2;
    g.grad_dual = total.d_phi_grad;
    return g;
  }
  NewtonOperator op = flow_->newton_operator(phi, state);
  AdjointState adj = solve_adjoint(op, total);
  return reduced_gradient(*mesh_, phi, state, adj, total, params_);
}

SparseMatrix Evaluator::metric_matrix(OptimizerConfig::Metric metric) const {
  // lumped L2 part: keeps the metric an M-matrix on nonobtuse meshes, so
  // the PDAS active-set updates stay monotone
  const ScalarSpace p1 = ScalarSpace::p1(*mesh_);
  SparseMatrix M = lumped_mass_matrix(p1);
  if (metric == OptimizerConfig::Metric::l2) return M;
  SparseMatrix K = assemble_scalar(ScalarKind::stiffness, p1);
  const double w = params_.gamma * params_.epsilon / (2.0 * params_.c0);
  return SparseMatrix(w * K) + M;
}

std::vector<LinearConstraint> Evaluator::linear_constraints() const {
  std::vector<LinearConstraint> out;
  const QuadratureRule& quad = QuadratureRule::triangle(4);
  const double area = mesh_->total_area();

  for (const auto& c : spec_->constraints) {
    if (!c.is_linear_in_phi()) continue;
    LinearConstraint lc;
    lc.label = c.label();
    lc.a = Eigen::VectorXd::Zero(mesh_->n_vertices());
    double offset = 0.0;  // constant part: G(phi) = a.phi + offset (feasible: >= 0 / == 0)
    for (int t = 0; t < mesh_->n_triangles(); ++t) {
      const ElementGeometry geo = element_geometry(*mesh_, t);
      for (int q = 0; q < quad.size(); ++q) {
        const auto& L = quad.points[q];
        const double w = quad.weights[q] * geo.area;
        const Vec2 x = L[0] * mesh_->vertices[geo.v[0]] + L[1] * mesh_->vertices[geo.v[1]] +
                       L[2] * mesh_->vertices[geo.v[2]];
        double coeff = 0.0, cst = 0.0;
        switch (c.kind) {
          case ConstraintSpec::Kind::volume_lower:
            coeff = 1.0;
            cst = -c.beta;
            break;
          case ConstraintSpec::Kind::volume_upper:
            coeff = -1.0;
            cst = c.beta;
            break;
          case ConstraintSpec::Kind::mass:
            coeff = 0.5 * (c.density ? c.density(x) : 1.0);
            cst = -0.5 * (c.density ? c.density(x) : 1.0);
            break;
          case ConstraintSpec::Kind::center_of_mass:
            coeff = -0.5 * (x[c.axis] - c.point[c.axis]);
            cst = 0.5 * (x[c.axis] - c.point[c.axis]);
            break;
          default:
            break;
        }
        for (int i = 0; i < 3; ++i) lc.a[geo.v[i]] += w * coeff * L[i];
        offset += w * cst;
      }
    }
    if (c.kind == ConstraintSpec::Kind::mass) offset += c.max_mass;
    // G(phi) = a.phi + offset; feasibility a.phi >= -offset (or equality)
    lc.b = -offset;
    lc.equality = c.is_equality();
    out.push_back(std::move(lc));
  }
  (void)area;
  return out;
}

double Evaluator::reduced_objective(const Eigen::VectorXd& phi) const {
  FlowState s = solve_state(phi);
  return objective(phi, s).value;
}

}  // namespace pfto
