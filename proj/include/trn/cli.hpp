#pragma once

// Command-line front end: single runs from JSON configs, benchmark matrices
// (scenarios x Poisson ratios x strategies x meshes) with per-cell outputs
// and summary statistics, SVG convergence plots, and beam mesh generation.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trn/newton.hpp"

namespace trn {

using json = nlohmann::json;

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& err) {
    // err.byte is a 1-based offset into the text; report line/column
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < err.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": JSON parse error: " + err.what());
  }
}

inline const json& require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ConfigError(where + ": missing required field \"" + key + "\"");
  return obj.at(key);
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline double number_or(const json& obj, const std::string& key, double fallback,
                        const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return number(obj.at(key), where + "." + key);
}

inline int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<int>();
}

inline std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

inline void check_version(const json& obj, const std::string& where) {
  if (obj.is_object() && obj.contains("version") && obj.at("version") != 1)
    throw ConfigError(where + ": unsupported config version");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// config structures

struct MeshSource {
  std::string name = "mesh";
  bool from_file = false;
  std::string path;
  MeshFormat format = MeshFormat::tetgen;
  std::array<int, 3> divisions = {1, 1, 1};
  Vec3 extent = Vec3(1, 1, 1);
};

struct RunConfig {
  MeshSource mesh;
  std::vector<int> explicit_fixed;  // merged into the mesh's fixed set
  ScenarioSpec scenario;
  double young = 1e8;
  double poisson = 0.3;
  EnergyModel model = EnergyModel::stable_neo_hookean;
  SolverConfig solver;
  std::string output_dir = "out";
  bool emit_vtk = false;
  long seed = 0;
};

namespace detail {

inline EnergyModel parse_model(const std::string& s, const std::string& where) {
  if (s == "stable_neo_hookean") return EnergyModel::stable_neo_hookean;
  if (s == "arap_vol") return EnergyModel::arap_vol;
  if (s == "symmetric_dirichlet_vol") return EnergyModel::symmetric_dirichlet_vol;
  throw ConfigError(where + ": unknown energy model \"" + s + "\"");
}

inline const char* model_name(EnergyModel m) {
  switch (m) {
    case EnergyModel::stable_neo_hookean: return "stable_neo_hookean";
    case EnergyModel::arap_vol: return "arap_vol";
    case EnergyModel::symmetric_dirichlet_vol: return "symmetric_dirichlet_vol";
  }
  return "?";
}

inline ScenarioKind parse_scenario_kind(const std::string& s, const std::string& where) {
  if (s == "stretch") return ScenarioKind::stretch;
  if (s == "compress") return ScenarioKind::compress;
  if (s == "bend") return ScenarioKind::bend;
  if (s == "twist") return ScenarioKind::twist;
  if (s == "identity") return ScenarioKind::identity;
  throw ConfigError(where + ": unknown scenario kind \"" + s + "\"");
}

inline const char* scenario_kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::stretch: return "stretch";
    case ScenarioKind::compress: return "compress";
    case ScenarioKind::bend: return "bend";
    case ScenarioKind::twist: return "twist";
    case ScenarioKind::identity: return "identity";
  }
  return "?";
}

inline ScenarioSpec parse_scenario(const json& obj, const std::string& where) {
  ScenarioSpec spec;
  spec.kind = parse_scenario_kind(text(require(obj, "kind", where), where + ".kind"), where);
  spec.magnitude = number_or(obj, "magnitude", 1.0, where);
  if (obj.contains("axis")) {
    const json& a = obj.at("axis");
    if (!a.is_array() || a.size() != 3) throw ConfigError(where + ".axis: expected 3 numbers");
    for (int k = 0; k < 3; ++k) spec.axis[k] = number(a[k], where + ".axis");
  }
  if (obj.contains("fixed_region")) {
    const json& f = obj.at("fixed_region");
    if (!f.is_array() || f.size() != 2)
      throw ConfigError(where + ".fixed_region: expected 2 fractions");
    for (int k = 0; k < 2; ++k) spec.fixed_region[k] = number(f[k], where + ".fixed_region");
  }
  return spec;
}

// Strategy params must be present exactly when the kind uses them.
inline ProjectionStrategy parse_strategy(const json& obj, const std::string& where) {
  ProjectionStrategy s;
  const std::string kind = text(require(obj, "kind", where), where + ".kind");
  std::vector<std::string> allowed = {"kind", "name"};
  if (kind == "unprojected") {
    s.kind = StrategyKind::unprojected;
  } else if (kind == "clamp") {
    s.kind = StrategyKind::clamp;
    s.clamp_floor = number_or(obj, "clamp_floor", 0.0, where);
    if (s.clamp_floor < 0) throw ConfigError(where + ".clamp_floor: must be >= 0");
    allowed.push_back("clamp_floor");
  } else if (kind == "abs") {
    s.kind = StrategyKind::abs;
  } else if (kind == "adaptive") {
    s.kind = StrategyKind::adaptive;
    s.rho_eps = number_or(obj, "rho_eps", 0.01, where);
    if (!(s.rho_eps > 0 && s.rho_eps < 1)) throw ConfigError(where + ".rho_eps: must be in (0, 1)");
    allowed.push_back("rho_eps");
  } else if (kind == "fixed_blend") {
    s.kind = StrategyKind::fixed_blend;
    s.blend_w = number(require(obj, "blend_w", where), where + ".blend_w");
    if (!(s.blend_w >= 0 && s.blend_w <= 1))
      throw ConfigError(where + ".blend_w: must be in [0, 1]");
    allowed.push_back("blend_w");
  } else if (kind == "threshold_abs") {
    s.kind = StrategyKind::threshold_abs;
    s.tau = number(require(obj, "tau", where), where + ".tau");
    if (!(s.tau > 0)) throw ConfigError(where + ".tau: must be > 0");
    allowed.push_back("tau");
  } else if (kind == "pod_shift") {
    s.kind = StrategyKind::pod_shift;
    s.shift_growth = number_or(obj, "shift_growth", 10.0, where);
    if (!(s.shift_growth > 1)) throw ConfigError(where + ".shift_growth: must be > 1");
    allowed.push_back("shift_growth");
  } else {
    throw ConfigError(where + ".kind: unknown strategy \"" + kind + "\"");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(where + "." + it.key() + ": parameter not used by strategy \"" + kind +
                        "\"");
  }
  return s;
}

inline std::string strategy_label(const ProjectionStrategy& s) {
  std::string label = to_string(s.kind);
  if (s.kind == StrategyKind::fixed_blend) label += "_w" + fmt_short(s.blend_w);
  if (s.kind == StrategyKind::threshold_abs) label += "_tau" + fmt_short(s.tau);
  return label;
}

inline SolverConfig parse_solver(const json& obj, const std::string& where,
                                 const SolverConfig& base) {
  SolverConfig cfg = base;
  if (obj.is_null()) return cfg;
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  cfg.max_iters = obj.contains("max_iters") ? integer(obj.at("max_iters"), where + ".max_iters")
                                            : cfg.max_iters;
  cfg.decrement_tol = number_or(obj, "decrement_tol", cfg.decrement_tol, where);
  cfg.ls_shrink = number_or(obj, "ls_shrink", cfg.ls_shrink, where);
  cfg.ls_armijo_c = number_or(obj, "ls_armijo_c", cfg.ls_armijo_c, where);
  cfg.ls_max_iters = obj.contains("ls_max_iters")
                         ? integer(obj.at("ls_max_iters"), where + ".ls_max_iters")
                         : cfg.ls_max_iters;
  cfg.rho_guard = number_or(obj, "rho_guard", cfg.rho_guard, where);
  if (obj.contains("strategy")) cfg.strategy = parse_strategy(obj.at("strategy"), where + ".strategy");
  if (cfg.max_iters <= 0 || cfg.decrement_tol <= 0 || cfg.ls_max_iters <= 0 ||
      !(cfg.ls_shrink > 0 && cfg.ls_shrink < 1) || cfg.ls_armijo_c < 0 || cfg.rho_guard <= 0)
    throw ConfigError(where + ": invalid solver parameters");
  return cfg;
}

inline MeshSource parse_mesh_source(const json& obj, const std::string& where) {
  MeshSource src;
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  if (obj.contains("name")) src.name = text(obj.at("name"), where + ".name");
  if (obj.contains("file")) {
    src.from_file = true;
    src.path = text(obj.at("file"), where + ".file");
    const std::string fmt = text(require(obj, "format", where), where + ".format");
    if (fmt == "tetgen")
      src.format = MeshFormat::tetgen;
    else if (fmt == "msh")
      src.format = MeshFormat::msh;
    else
      throw ConfigError(where + ".format: expected \"tetgen\" or \"msh\"");
    if (!obj.contains("name"))
      src.name = std::filesystem::path(src.path).stem().string();
  } else if (obj.contains("beam")) {
    const json& beam = obj.at("beam");
    const json& div = require(beam, "divisions", where + ".beam");
    const json& ext = require(beam, "extent", where + ".beam");
    if (!div.is_array() || div.size() != 3 || !ext.is_array() || ext.size() != 3)
      throw ConfigError(where + ".beam: divisions and extent must have 3 entries");
    for (int k = 0; k < 3; ++k) {
      src.divisions[k] = integer(div[k], where + ".beam.divisions");
      src.extent[k] = number(ext[k], where + ".beam.extent");
      if (src.divisions[k] < 1) throw ConfigError(where + ".beam.divisions: must be >= 1");
      if (!(src.extent[k] > 0)) throw ConfigError(where + ".beam.extent: must be positive");
    }
    if (!obj.contains("name"))
      src.name = "beam" + std::to_string(src.divisions[0]) + "x" +
                 std::to_string(src.divisions[1]) + "x" + std::to_string(src.divisions[2]);
  } else {
    throw ConfigError(where + ": expected either \"file\" or \"beam\"");
  }
  return src;
}

inline TetMesh realize_mesh(const MeshSource& src, const std::vector<int>& explicit_fixed) {
  TetMesh mesh = src.from_file ? load_mesh(src.path, src.format)
                               : generate_beam(src.divisions, src.extent);
  mesh.fixed_vertices.insert(mesh.fixed_vertices.end(), explicit_fixed.begin(),
                             explicit_fixed.end());
  std::sort(mesh.fixed_vertices.begin(), mesh.fixed_vertices.end());
  mesh.fixed_vertices.erase(
      std::unique(mesh.fixed_vertices.begin(), mesh.fixed_vertices.end()),
      mesh.fixed_vertices.end());
  return mesh;
}

inline json mesh_source_json(const MeshSource& src) {
  json j;
  j["name"] = src.name;
  if (src.from_file) {
    j["file"] = src.path;
    j["format"] = src.format == MeshFormat::tetgen ? "tetgen" : "msh";
  } else {
    j["beam"] = {{"divisions", src.divisions},
                 {"extent", {src.extent[0], src.extent[1], src.extent[2]}}};
  }
  return j;
}

inline json scenario_json(const ScenarioSpec& s) {
  return json{{"kind", scenario_kind_name(s.kind)},
              {"magnitude", s.magnitude},
              {"axis", {s.axis[0], s.axis[1], s.axis[2]}},
              {"fixed_region", {s.fixed_region[0], s.fixed_region[1]}}};
}

inline json strategy_json(const ProjectionStrategy& s) {
  json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case StrategyKind::clamp: j["clamp_floor"] = s.clamp_floor; break;
    case StrategyKind::adaptive: j["rho_eps"] = s.rho_eps; break;
    case StrategyKind::fixed_blend: j["blend_w"] = s.blend_w; break;
    case StrategyKind::threshold_abs: j["tau"] = s.tau; break;
    case StrategyKind::pod_shift: j["shift_growth"] = s.shift_growth; break;
    default: break;
  }
  return j;
}

inline json solver_json(const SolverConfig& cfg) {
  return json{{"max_iters", cfg.max_iters},
              {"decrement_tol", cfg.decrement_tol},
              {"ls_shrink", cfg.ls_shrink},
              {"ls_armijo_c", cfg.ls_armijo_c},
              {"ls_max_iters", cfg.ls_max_iters},
              {"rho_guard", cfg.rho_guard},
              {"strategy", strategy_json(cfg.strategy)}};
}

}  // namespace detail

inline RunConfig parse_run_config(const json& root) {
  detail::check_version(root, "config");
  RunConfig cfg;
  cfg.mesh = detail::parse_mesh_source(detail::require(root, "mesh", "config"), "config.mesh");
  if (root.contains("fixed_vertices")) {
    for (const json& v : root.at("fixed_vertices"))
      cfg.explicit_fixed.push_back(detail::integer(v, "config.fixed_vertices"));
  }
  cfg.scenario =
      detail::parse_scenario(detail::require(root, "scenario", "config"), "config.scenario");
  const json& mat = detail::require(root, "material", "config");
  cfg.young = detail::number(detail::require(mat, "young", "config.material"),
                             "config.material.young");
  cfg.poisson = detail::number(detail::require(mat, "poisson", "config.material"),
                               "config.material.poisson");
  cfg.model = detail::parse_model(
      detail::text(detail::require(mat, "model", "config.material"), "config.material.model"),
      "config.material.model");
  cfg.solver = detail::parse_solver(root.contains("solver") ? root.at("solver") : json(),
                                    "config.solver", SolverConfig{});
  cfg.output_dir = detail::text(detail::require(root, "output_dir", "config"),
                                "config.output_dir");
  if (root.contains("emit_vtk")) cfg.emit_vtk = root.at("emit_vtk").get<bool>();
  if (root.contains("seed")) cfg.seed = detail::integer(root.at("seed"), "config.seed");
  return cfg;
}

// ---------------------------------------------------------------------------
// trace serialization

inline void write_trace_csv(const std::vector<IterationRecord>& records,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "iter,energy,decrement,rho,mode,ls_iters,step,wall_time\n";
  for (const IterationRecord& r : records) {
    out << r.iter << ',' << detail::fmt17(r.energy) << ',' << detail::fmt17(r.decrement) << ',';
    if (r.rho) out << detail::fmt17(*r.rho);
    out << ',' << to_string(r.mode) << ',' << r.ls_iters << ',' << detail::fmt17(r.step) << ','
        << detail::fmt17(r.wall_time) << '\n';
  }
}

struct SolveOutput {
  TetMesh mesh;
  SolveTrace trace;
  MaterialParams material;
  double total_time = 0;
  int fixed_count = 0;
};

inline SolveOutput run_solve(const RunConfig& cfg) {
  SolveOutput out;
  out.mesh = detail::realize_mesh(cfg.mesh, cfg.explicit_fixed);
  const RestData rest = precompute_rest(out.mesh);
  out.material = make_material(cfg.young, cfg.poisson);
  const auto t0 = std::chrono::steady_clock::now();
  out.trace = newton_solve(out.mesh, rest, cfg.model, out.material, cfg.scenario, cfg.solver);
  out.total_time = detail::seconds_since(t0);
  {
    ScenarioResult sc = apply_scenario(out.mesh, cfg.scenario);
    std::vector<int> fixed = sc.fixed;
    fixed.insert(fixed.end(), out.mesh.fixed_vertices.begin(), out.mesh.fixed_vertices.end());
    std::sort(fixed.begin(), fixed.end());
    fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
    out.fixed_count = static_cast<int>(fixed.size());
  }
  return out;
}

inline json summary_json(const RunConfig& cfg, const SolveOutput& out) {
  json summary;
  summary["version"] = 1;
  summary["status"] = to_string(out.trace.status);
  summary["iterations"] = out.trace.records.size();
  summary["total_time"] = out.total_time;
  if (!out.trace.records.empty())
    summary["final_energy"] = out.trace.records.back().energy;
  summary["config"] = {{"mesh", detail::mesh_source_json(cfg.mesh)},
                       {"scenario", detail::scenario_json(cfg.scenario)},
                       {"material",
                        {{"young", cfg.young},
                         {"poisson", cfg.poisson},
                         {"model", detail::model_name(cfg.model)}}},
                       {"solver", detail::solver_json(cfg.solver)},
                       {"output_dir", cfg.output_dir},
                       {"emit_vtk", cfg.emit_vtk},
                       {"seed", cfg.seed}};
  summary["decided_parameters"] = {
      {"energy_variant",
       std::string(detail::model_name(cfg.model)) +
           (cfg.model == EnergyModel::stable_neo_hookean
                ? " = 0.5*mu*(Ic-3) + 0.5*lambda*(J-1-mu/lambda)^2"
                : " with volume term 0.5*lambda*(J-1)^2")},
      {"lambda_reparameterization", "none"},
      {"mu", out.material.mu},
      {"lambda", out.material.lambda},
      {"first_iteration_mode", "abs"},
      {"armijo_c", cfg.solver.ls_armijo_c},
      {"fixed_vertex_selection", "axial end slabs plus explicit ids"},
      {"fixed_vertex_count", out.fixed_count}};
  return summary;
}

// run: minimize one configuration, writing trace.csv / summary.json and
// optionally final.vtk. Exit 0 converged, 1 otherwise; config errors exit 2
// before any output is written.
inline int cmd_run(const std::string& config_path) {
  RunConfig cfg;
  try {
    cfg = parse_run_config(detail::parse_json_file(config_path));
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  SolveOutput out;
  try {
    out = run_solve(cfg);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  std::filesystem::create_directories(cfg.output_dir);
  write_trace_csv(out.trace.records, cfg.output_dir + "/trace.csv");
  {
    std::ofstream js(cfg.output_dir + "/summary.json");
    js << summary_json(cfg, out).dump(2) << "\n";
  }
  if (cfg.emit_vtk)
    export_vtk(out.mesh, out.trace.final_positions, cfg.output_dir + "/final.vtk");
  std::cout << cfg.mesh.name << " " << detail::scenario_kind_name(cfg.scenario.kind)
            << " pr=" << detail::fmt_short(cfg.poisson) << " "
            << detail::strategy_label(cfg.solver.strategy) << ": "
            << to_string(out.trace.status) << " in " << out.trace.records.size()
            << " iterations\n";
  return out.trace.status == SolveStatus::converged ? 0 : 1;
}

// ---------------------------------------------------------------------------
// bench

struct BenchConfig {
  std::vector<MeshSource> meshes;
  std::vector<std::pair<std::string, ScenarioSpec>> scenarios;
  std::vector<double> poissons;
  std::vector<std::pair<std::string, ProjectionStrategy>> strategies;
  double young = 1e8;
  EnergyModel model = EnergyModel::stable_neo_hookean;
  SolverConfig solver_base;
  std::string output_dir = "bench";
  int jobs = 1;
};

inline BenchConfig parse_bench_config(const json& root) {
  detail::check_version(root, "bench config");
  BenchConfig cfg;
  for (const json& m : detail::require(root, "meshes", "bench"))
    cfg.meshes.push_back(detail::parse_mesh_source(m, "bench.meshes"));
  for (const json& s : detail::require(root, "scenarios", "bench")) {
    ScenarioSpec spec = detail::parse_scenario(s, "bench.scenarios");
    std::string name = s.contains("name")
                           ? detail::text(s.at("name"), "bench.scenarios.name")
                           : std::string(detail::scenario_kind_name(spec.kind)) + "_" +
                                 detail::fmt_short(spec.magnitude);
    cfg.scenarios.emplace_back(name, spec);
  }
  for (const json& p : detail::require(root, "poissons", "bench"))
    cfg.poissons.push_back(detail::number(p, "bench.poissons"));
  for (const json& s : detail::require(root, "strategies", "bench")) {
    ProjectionStrategy strat = detail::parse_strategy(s, "bench.strategies");
    std::string name = s.contains("name") ? detail::text(s.at("name"), "bench.strategies.name")
                                          : detail::strategy_label(strat);
    cfg.strategies.emplace_back(name, strat);
  }
  if (cfg.meshes.empty() || cfg.scenarios.empty() || cfg.poissons.empty() ||
      cfg.strategies.empty())
    throw ConfigError("bench: matrix axes must all be nonempty");
  const json& mat = detail::require(root, "material", "bench");
  cfg.young =
      detail::number(detail::require(mat, "young", "bench.material"), "bench.material.young");
  cfg.model = detail::parse_model(
      detail::text(detail::require(mat, "model", "bench.material"), "bench.material.model"),
      "bench.material.model");
  cfg.solver_base = detail::parse_solver(root.contains("solver") ? root.at("solver") : json(),
                                         "bench.solver", SolverConfig{});
  cfg.output_dir = detail::text(detail::require(root, "output_dir", "bench"),
                                "bench.output_dir");
  if (root.contains("jobs")) cfg.jobs = detail::integer(root.at("jobs"), "bench.jobs");
  return cfg;
}

struct BenchCell {
  int mesh = 0, scenario = 0, poisson = 0, strategy = 0;
  std::string dir;
  std::string status = "pending";
  int iters = 0;
  double mean_ls_iters = 0;
  double total_time = 0;
  double mean_iter_time = 0;
  double pct_direction = 0, pct_linesearch = 0, pct_ratio = 0;
  bool converged = false;
};

namespace detail {

inline void fill_cell_stats(BenchCell& cell, const SolveTrace& trace, double total_time) {
  cell.status = to_string(trace.status);
  cell.converged = trace.status == SolveStatus::converged;
  cell.iters = static_cast<int>(trace.records.size());
  cell.total_time = total_time;
  double ls_sum = 0, ls_count = 0, wall = 0, dir = 0, ls_t = 0, ratio = 0;
  for (const IterationRecord& r : trace.records) {
    if (r.ls_iters > 0) {
      ls_sum += r.ls_iters;
      ls_count += 1;
    }
    wall += r.wall_time;
    dir += r.t_direction;
    ls_t += r.t_linesearch;
    ratio += r.t_ratio;
  }
  cell.mean_ls_iters = ls_count > 0 ? ls_sum / ls_count : 0.0;
  cell.mean_iter_time = cell.iters > 0 ? wall / cell.iters : 0.0;
  if (wall > 0) {
    cell.pct_direction = 100.0 * dir / wall;
    cell.pct_linesearch = 100.0 * ls_t / wall;
    cell.pct_ratio = 100.0 * ratio / wall;
  }
}

}  // namespace detail

// bench: run the full matrix, one output directory per cell, then
// bench_summary.csv (per-cell statistics) and speedup.csv (iteration ratios
// against the adaptive strategy within each mesh/scenario/poisson group).
inline int cmd_bench(const std::string& config_path, int jobs_override = 0) {
  BenchConfig cfg;
  try {
    cfg = parse_bench_config(detail::parse_json_file(config_path));
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  if (jobs_override > 0) cfg.jobs = jobs_override;
  cfg.jobs = std::max(1, cfg.jobs);

  // meshes and rest data are shared read-only across cells
  std::vector<TetMesh> meshes;
  std::vector<RestData> rests;
  try {
    for (const MeshSource& src : cfg.meshes) {
      meshes.push_back(detail::realize_mesh(src, {}));
      rests.push_back(precompute_rest(meshes.back()));
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<BenchCell> cells;
  for (size_t m = 0; m < cfg.meshes.size(); ++m)
    for (size_t s = 0; s < cfg.scenarios.size(); ++s)
      for (size_t p = 0; p < cfg.poissons.size(); ++p)
        for (size_t t = 0; t < cfg.strategies.size(); ++t) {
          BenchCell cell;
          cell.mesh = static_cast<int>(m);
          cell.scenario = static_cast<int>(s);
          cell.poisson = static_cast<int>(p);
          cell.strategy = static_cast<int>(t);
          cell.dir = cfg.output_dir + "/" + cfg.meshes[m].name + "__" +
                     cfg.scenarios[s].first + "__pr" + detail::fmt_short(cfg.poissons[p]) +
                     "__" + cfg.strategies[t].first;
          cells.push_back(cell);
        }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      BenchCell& cell = cells[i];
      try {
        SolverConfig solver = cfg.solver_base;
        solver.strategy = cfg.strategies[cell.strategy].second;
        const MaterialParams material = make_material(cfg.young, cfg.poissons[cell.poisson]);
        const auto t0 = std::chrono::steady_clock::now();
        SolveTrace trace = newton_solve(meshes[cell.mesh], rests[cell.mesh], cfg.model,
                                        material, cfg.scenarios[cell.scenario].second, solver);
        detail::fill_cell_stats(cell, trace, detail::seconds_since(t0));
        std::filesystem::create_directories(cell.dir);
        write_trace_csv(trace.records, cell.dir + "/trace.csv");
        RunConfig echo;
        echo.mesh = cfg.meshes[cell.mesh];
        echo.scenario = cfg.scenarios[cell.scenario].second;
        echo.young = cfg.young;
        echo.poisson = cfg.poissons[cell.poisson];
        echo.model = cfg.model;
        echo.solver = solver;
        echo.output_dir = cell.dir;
        SolveOutput out;
        out.mesh = meshes[cell.mesh];
        out.trace = std::move(trace);
        out.material = material;
        out.total_time = cell.total_time;
        std::ofstream js(cell.dir + "/summary.json");
        js << summary_json(echo, out).dump(2) << "\n";
      } catch (const std::exception& err) {
        std::string what = err.what();
        for (char& c : what)
          if (c == ',' || c == '\n') c = ';';
        cell.status = "error: " + what;
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (int t = 1; t < cfg.jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  {
    std::ofstream out(cfg.output_dir + "/bench_summary.csv");
    out << "mesh,scenario,poisson,strategy,status,iters,mean_ls_iters,total_time,"
           "mean_iter_time,pct_time_direction,pct_time_linesearch,pct_time_ratio\n";
    for (const BenchCell& c : cells) {
      out << cfg.meshes[c.mesh].name << ',' << cfg.scenarios[c.scenario].first << ','
          << detail::fmt_short(cfg.poissons[c.poisson]) << ','
          << cfg.strategies[c.strategy].first << ',' << c.status << ',' << c.iters << ','
          << detail::fmt17(c.mean_ls_iters) << ',' << detail::fmt17(c.total_time) << ','
          << detail::fmt17(c.mean_iter_time) << ',' << detail::fmt17(c.pct_direction) << ','
          << detail::fmt17(c.pct_linesearch) << ',' << detail::fmt17(c.pct_ratio) << '\n';
    }
  }
  {
    int adaptive_index = -1;
    for (size_t t = 0; t < cfg.strategies.size(); ++t)
      if (cfg.strategies[t].second.kind == StrategyKind::adaptive)
        adaptive_index = static_cast<int>(t);
    std::ofstream out(cfg.output_dir + "/speedup.csv");
    out << "mesh,scenario,poisson,strategy,iters,adaptive_iters,speedup\n";
    if (adaptive_index >= 0) {
      auto find_cell = [&](int m, int s, int p, int t) -> const BenchCell* {
        for (const BenchCell& c : cells)
          if (c.mesh == m && c.scenario == s && c.poisson == p && c.strategy == t) return &c;
        return nullptr;
      };
      for (size_t m = 0; m < cfg.meshes.size(); ++m)
        for (size_t s = 0; s < cfg.scenarios.size(); ++s)
          for (size_t p = 0; p < cfg.poissons.size(); ++p) {
            const BenchCell* base = find_cell(m, s, p, adaptive_index);
            if (!base || base->iters == 0) continue;
            for (size_t t = 0; t < cfg.strategies.size(); ++t) {
              if (static_cast<int>(t) == adaptive_index) continue;
              const BenchCell* c = find_cell(m, s, p, static_cast<int>(t));
              if (!c) continue;
              out << cfg.meshes[m].name << ',' << cfg.scenarios[s].first << ','
                  << detail::fmt_short(cfg.poissons[p]) << ',' << cfg.strategies[t].first << ','
                  << c->iters << ',' << base->iters << ','
                  << detail::fmt17(double(c->iters) / double(base->iters)) << '\n';
            }
          }
    }
  }
  bool all_converged = true;
  for (const BenchCell& c : cells) {
    std::cout << c.dir << ": " << c.status << " (" << c.iters << " iters)\n";
    all_converged = all_converged && c.converged;
  }
  return all_converged ? 0 : 1;
}

// ---------------------------------------------------------------------------
// plot

namespace detail {

struct TraceSeries {
  std::string label;
  std::vector<double> energies;
};

inline TraceSeries parse_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace " + path);
  TraceSeries series;
  series.label = std::filesystem::path(path).parent_path().filename().string();
  if (series.label.empty()) series.label = std::filesystem::path(path).stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace file " + path);
  // locate the energy column from the header
  int energy_col = 1;
  {
    std::istringstream header(line);
    std::string field;
    int col = 0;
    while (std::getline(header, field, ',')) {
      if (field == "energy") energy_col = col;
      ++col;
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    int col = 0;
    bool found = false;
    while (std::getline(row, field, ',')) {
      if (col == energy_col) {
        series.energies.push_back(std::stod(field));
        found = true;
        break;
      }
      ++col;
    }
    if (!found) throw ConfigError("garbled trace row in " + path);
  }
  if (series.energies.empty()) throw ConfigError("trace has no data rows: " + path);
  return series;
}

}  // namespace detail

// plot: log-scale energy-above-minimum vs iteration, one series per trace.
// The minimum is taken across all input traces; non-positive gaps (the
// global minimizer itself) are dropped from the curve.
inline int cmd_plot(const std::vector<std::string>& trace_paths, const std::string& out_path) {
  std::vector<detail::TraceSeries> series;
  try {
    if (trace_paths.empty()) throw ConfigError("plot: no traces given");
    for (const std::string& p : trace_paths) series.push_back(detail::parse_trace_csv(p));
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  double fmin = series[0].energies[0];
  size_t max_len = 0;
  for (const auto& s : series) {
    for (double e : s.energies) fmin = std::min(fmin, e);
    max_len = std::max(max_len, s.energies.size());
  }
  double gap_min = std::numeric_limits<double>::max(), gap_max = 0;
  for (const auto& s : series)
    for (double e : s.energies) {
      const double gap = e - fmin;
      if (gap > 0) {
        gap_min = std::min(gap_min, gap);
        gap_max = std::max(gap_max, gap);
      }
    }
  if (!(gap_max > 0)) {  // completely flat input; give the axes a span
    gap_min = 1e-1;
    gap_max = 1.0;
  }
  const double y_lo = std::floor(std::log10(gap_min));
  const double y_hi = std::ceil(std::log10(gap_max) + (gap_min == gap_max ? 1 : 0));
  const double width = 860, height = 520;
  const double ml = 80, mr = 180, mt = 30, mb = 50;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;
  auto x_of = [&](double iter) {
    return ml + plot_w * (max_len > 1 ? iter / double(max_len - 1) : 0.5);
  };
  auto y_of = [&](double gap) {
    const double t = (std::log10(gap) - y_lo) / std::max(1.0, y_hi - y_lo);
    return mt + plot_h * (1.0 - t);
  };
  static const char* kColors[] = {"#2a9d8f", "#e76f51", "#4a70d8",
                                  "#b56bd1", "#958a24", "#5a5a5a"};
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "error: cannot write " << out_path << "\n";
    return 2;
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
      << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + plot_h << "\" stroke=\"black\"/>\n";
  const int y_ticks = std::min(8, std::max(2, int(y_hi - y_lo)));
  for (int k = 0; k <= y_ticks; ++k) {
    const double exp10 = y_lo + (y_hi - y_lo) * k / y_ticks;
    const double y = mt + plot_h * (1.0 - double(k) / y_ticks);
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"12\">1e" << detail::fmt_short(exp10)
        << "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double it = (max_len > 1 ? (max_len - 1) : 1) * k / 5.0;
    const double x = ml + plot_w * k / 5.0;
    out << "<line x1=\"" << x << "\" y1=\"" << mt + plot_h << "\" x2=\"" << x << "\" y2=\""
        << mt + plot_h + 4 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << mt + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"12\">" << int(it) << "</text>\n";
  }
  out << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n"
      << "<text x=\"18\" y=\"" << mt + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << mt + plot_h / 2 << ")\">energy - min</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < series[s].energies.size(); ++i) {
      const double gap = series[s].energies[i] - fmin;
      if (gap <= 0) continue;
      out << x_of(double(i)) << ',' << y_of(gap) << ' ';
    }
    out << "\"/>\n";
    const double ly = mt + 16 + 18 * s;
    out << "<line x1=\"" << ml + plot_w + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << ml + plot_w + 36 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << ml + plot_w + 42 << "\" y=\"" << ly
        << "\" font-size=\"12\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
  return 0;
}

// gen-mesh: write a generated beam as a TetGen pair.
inline int cmd_gen_mesh(const std::string& config_path) {
  try {
    const json root = detail::parse_json_file(config_path);
    detail::check_version(root, "gen-mesh config");
    json wrapper;
    wrapper["beam"] = detail::require(root, "beam", "gen-mesh");
    const MeshSource src = detail::parse_mesh_source(wrapper, "gen-mesh");
    const std::string prefix = detail::text(detail::require(root, "out_prefix", "gen-mesh"),
                                            "gen-mesh.out_prefix");
    const TetMesh mesh = generate_beam(src.divisions, src.extent);
    const auto parent = std::filesystem::path(prefix).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    write_tetgen(mesh, prefix);
    std::cout << "wrote " << prefix << ".node / .ele (" << mesh.num_vertices()
              << " vertices, " << mesh.num_tets() << " tets)\n";
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}

}  // namespace trn
