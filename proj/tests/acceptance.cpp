// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5-10 and 12 share one desk-scale beam; solves are cached
// and reused across criteria.

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "test_support.hpp"
#include "trn/cli.hpp"

using namespace trn;

namespace {

struct Checker {
  int failures = 0;
  void report(int number, const std::string& description, bool pass,
              const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", number,
                description.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The shared desk-scale beam: 2x2x8 cells over a 3x3x12 mm block, the end
// quarters pinned.
const std::array<int, 3> kDivisions = {2, 2, 8};
const Vec3 kExtent(0.003, 0.003, 0.012);
const double kFixedRegion = 0.25;
const double kYoung = 1e8;

struct Workbench {
  TetMesh mesh;
  RestData rest;
  std::map<std::string, SolveTrace> cache;

  Workbench() {
    mesh = generate_beam(kDivisions, kExtent);
    rest = precompute_rest(mesh);
  }

  const SolveTrace& solve(EnergyModel model, ScenarioKind kind, double magnitude, double nu,
                          StrategyKind strategy, double rho_eps = 0.01, double blend_w = 0.5) {
    char key[160];
    std::snprintf(key, sizeof(key), "%d|%d|%.5g|%.5g|%d|%.5g|%.5g", int(model), int(kind),
                  magnitude, nu, int(strategy), rho_eps, blend_w);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    ScenarioSpec scenario;
    scenario.kind = kind;
    scenario.magnitude = magnitude;
    scenario.fixed_region = {kFixedRegion, kFixedRegion};
    SolverConfig cfg;
    cfg.strategy.kind = strategy;
    cfg.strategy.rho_eps = rho_eps;
    cfg.strategy.blend_w = blend_w;
    const MaterialParams material = make_material(kYoung, nu);
    return cache.emplace(key, newton_solve(mesh, rest, model, material, scenario, cfg))
        .first->second;
  }
};

int iters(const SolveTrace& t) { return static_cast<int>(t.records.size()); }

bool converged(const SolveTrace& t) { return t.status == SolveStatus::converged; }

double mean_ls(const SolveTrace& t) {
  double sum = 0, n = 0;
  for (const IterationRecord& r : t.records)
    if (r.ls_iters > 0) {
      sum += r.ls_iters;
      n += 1;
    }
  return n > 0 ? sum / n : 0.0;
}

Mat12 abs_block(const Mat12& a) { return project_element(a, SpectralMode{FilterKind::abs, 1.0}); }
Mat12 clamp_block(const Mat12& a) {
  return project_element(a, SpectralMode{FilterKind::clamp, 0.5}, 0.0);
}

void criterion_1_lemmas(Checker& check) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  int bad_bound = 0, bad_identity = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto fx = trn_test::random_scatter_fixture(rng);
    const Eigen::MatrixXd a = trn_test::dense_scatter(fx, [](const Mat12& b) { return b; });
    const Eigen::MatrixXd a_abs = trn_test::dense_scatter(fx, abs_block);
    const Eigen::MatrixXd a_clamp = trn_test::dense_scatter(fx, clamp_block);
    Eigen::VectorXd x(a.rows());
    for (int i = 0; i < x.size(); ++i) x[i] = normal(rng);
    double block_norms = 0;
    for (const Mat12& b : fx.blocks) block_norms += b.norm();
    const double quad = x.dot(a * x);
    const double quad_abs = x.dot(a_abs * x);
    const double quad_clamp = x.dot(a_clamp * x);
    if (std::abs(quad) > quad_abs + 1e-10 * x.squaredNorm() * block_norms) ++bad_bound;
    if (std::abs(quad + quad_abs - 2.0 * quad_clamp) >
        1e-9 * std::max(std::abs(quad) + quad_abs, 1e-12))
      ++bad_identity;
  }
  const double dt = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "1000 trials, bound violations %d, identity violations %d, %.1fs", bad_bound,
                bad_identity, dt);
  check.report(1, "per-element scatter bound and clamp identity",
               bad_bound == 0 && bad_identity == 0 && dt < 10.0, detail);
}

void criterion_2_derivatives(Checker& check) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(202);
  const MaterialParams p = make_material(kYoung, 0.45);
  double worst_grad = 0, worst_hess = 0;
  int states = 0;
  for (EnergyModel model : {EnergyModel::stable_neo_hookean, EnergyModel::arap_vol,
                            EnergyModel::symmetric_dirichlet_vol}) {
    const double min_det = model == EnergyModel::symmetric_dirichlet_vol ? 0.05 : -1e30;
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = trn_test::random_element_state(rng, 0.3, min_det);
      const ElementQuadratics q = element_quadratics(model, p, s.x, s.dm_inv, s.volume);
      const Vec12 fd_g = fd_gradient(model, p, s.x, s.dm_inv, s.volume);
      const Mat12 fd_h = fd_hessian(model, p, s.x, s.dm_inv, s.volume);
      worst_grad = std::max(worst_grad,
                            (fd_g - q.gradient).norm() / std::max(q.gradient.norm(), 1e-300));
      worst_hess =
          std::max(worst_hess, (fd_h - q.hessian).norm() / std::max(q.hessian.norm(), 1e-300));
      ++states;
    }
  }
  const double dt = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d states, max grad err %.2e (<1e-4), max hess err %.2e (<1e-3), %.1fs",
                states, worst_grad, worst_hess, dt);
  check.report(2, "analytic derivatives match central differences",
               worst_grad < 1e-4 && worst_hess < 1e-3 && dt < 30.0, detail);
}

void criterion_3_assembly(Checker& check) {
  std::mt19937 rng(303);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0;
  const std::vector<std::pair<std::array<int, 3>, std::vector<int>>> cases = {
      {{1, 1, 1}, {}},        {{1, 1, 2}, {}},      {{1, 1, 2}, {0, 5}},
      {{2, 1, 1}, {1, 2, 3}}, {{1, 1, 3}, {0, 15}},
  };
  for (const auto& [div, fixed] : cases) {
    TetMesh mesh = generate_beam(div, Vec3(1, 1, 1));
    if (mesh.num_vertices() > 20) continue;
    DofMap map = build_dofmap(mesh.num_vertices(), fixed);
    SparsityPattern pattern = build_pattern(mesh, map);
    std::vector<ElementQuadratics> elems(mesh.num_tets());
    for (auto& q : elems) {
      q.value = normal(rng);
      for (int i = 0; i < 12; ++i) q.gradient[i] = normal(rng);
      q.hessian = trn_test::random_symmetric12(rng);
    }
    const GlobalSystem sys = assemble(elems, mesh, map, pattern);
    const auto dense = trn_test::dense_assemble(mesh, elems, map);
    worst = std::max(worst, (Eigen::MatrixXd(sys.hessian) - dense.hessian).norm() /
                                std::max(dense.hessian.norm(), 1e-300));
    worst = std::max(worst, (sys.gradient - dense.gradient).norm() /
                                std::max(dense.gradient.norm(), 1e-300));
    for (int k = 0; k < 10; ++k) {
      Eigen::VectorXd u(map.free_count);
      for (int i = 0; i < u.size(); ++i) u[i] = normal(rng);
      const double expected = u.dot(dense.hessian * u);
      worst = std::max(worst, std::abs(quadratic_form(elems, mesh, map, u) - expected) /
                                  std::max(std::abs(expected), 1e-300));
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "max relative deviation %.2e (<1e-10)", worst);
  check.report(3, "sparse assembly and quadratic form match the dense oracle", worst < 1e-10,
               detail);
}

void criterion_5_equivalence(Checker& check, Workbench& bench) {
  const SolveTrace& clamp = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                        2.0, 0.45, StrategyKind::clamp);
  const SolveTrace& half = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                       2.0, 0.45, StrategyKind::fixed_blend, 0.01, 0.5);
  const SolveTrace& abs_t = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                        2.0, 0.45, StrategyKind::abs);
  const SolveTrace& one = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                      2.0, 0.45, StrategyKind::fixed_blend, 0.01, 1.0);
  auto same = [](const SolveTrace& a, const SolveTrace& b) {
    if (a.records.size() != b.records.size() || a.status != b.status) return false;
    for (size_t i = 0; i < a.records.size(); ++i) {
      const IterationRecord &ra = a.records[i], &rb = b.records[i];
      if (ra.energy != rb.energy || ra.decrement != rb.decrement ||
          ra.ls_iters != rb.ls_iters || ra.step != rb.step)
        return false;
    }
    return true;
  };
  const bool ok = same(clamp, half) && same(abs_t, one);
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "blend(0.5) vs clamp: %s over %d records; blend(1) vs abs: %s over %d records",
                same(clamp, half) ? "exact" : "DIFFERS", iters(clamp),
                same(abs_t, one) ? "exact" : "DIFFERS", iters(abs_t));
  check.report(5, "fixed blends reproduce clamp and abs traces exactly", ok, detail);
}

void criterion_6_hard(Checker& check, Workbench& bench) {
  const auto t0 = std::chrono::steady_clock::now();
  const SolveTrace& adaptive = bench.solve(EnergyModel::stable_neo_hookean,
                                           ScenarioKind::stretch, 4.0, 0.495,
                                           StrategyKind::adaptive, 0.01);
  const SolveTrace& clamp = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                        4.0, 0.495, StrategyKind::clamp);
  const double dt = seconds_since(t0);
  const bool iter_ok =
      iters(adaptive) < iters(clamp) || clamp.status == SolveStatus::max_iters;
  const bool ls_ok = mean_ls(adaptive) <= 2.0 && mean_ls(clamp) >= 2.0 * mean_ls(adaptive);
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "adaptive %s in %d iters (ls %.2f), clamp %s in %d iters (ls %.2f), %.1fs",
                to_string(adaptive.status), iters(adaptive), mean_ls(adaptive),
                to_string(clamp.status), iters(clamp), mean_ls(clamp), dt);
  check.report(6, "hard regime (stretch x4, nu=0.495): adaptive beats clamp",
               converged(adaptive) && iter_ok && ls_ok && dt < 120.0, detail);
}

void criterion_7_easy(Checker& check, Workbench& bench) {
  const SolveTrace& adaptive = bench.solve(EnergyModel::stable_neo_hookean,
                                           ScenarioKind::stretch, 1.1, 0.3,
                                           StrategyKind::adaptive);
  const SolveTrace& clamp = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                        1.1, 0.3, StrategyKind::clamp);
  const SolveTrace& abs_t = bench.solve(EnergyModel::stable_neo_hookean, ScenarioKind::stretch,
                                        1.1, 0.3, StrategyKind::abs);
  const bool ok = converged(adaptive) && converged(clamp) && converged(abs_t) &&
                  iters(adaptive) <= iters(clamp) + 1;
  char detail[128];
  std::snprintf(detail, sizeof(detail), "adaptive %d, clamp %d, abs %d iterations",
                iters(adaptive), iters(clamp), iters(abs_t));
  check.report(7, "easy regime (stretch x1.1, nu=0.3): adaptive within one of clamp", ok,
               detail);
}

void criterion_8_sweep(Checker& check, Workbench& bench) {
  const std::vector<double> nus = {0.3, 0.4, 0.45, 0.49, 0.495};
  bool ok = true;
  std::string detail;
  for (double nu : nus) {
    const SolveTrace& adaptive = bench.solve(EnergyModel::stable_neo_hookean,
                                             ScenarioKind::stretch, 4.0, nu,
                                             StrategyKind::adaptive);
    const SolveTrace& clamp = bench.solve(EnergyModel::stable_neo_hookean,
                                          ScenarioKind::stretch, 4.0, nu, StrategyKind::clamp);
    const SolveTrace& abs_t = bench.solve(EnergyModel::stable_neo_hookean,
                                          ScenarioKind::stretch, 4.0, nu, StrategyKind::abs);
    const bool vs_abs = iters(adaptive) <= iters(abs_t) + 1;
    const bool vs_clamp = nu < 0.49 || iters(adaptive) < iters(clamp);
    ok = ok && vs_abs && vs_clamp && converged(adaptive);
    char cell[64];
    std::snprintf(cell, sizeof(cell), "nu=%.3g:[%d,%d,%d] ", nu, iters(adaptive), iters(clamp),
                  iters(abs_t));
    detail += cell;
  }
  check.report(8, "Poisson sweep (adaptive vs clamp/abs iteration counts)", ok,
               detail + "[adaptive,clamp,abs]");
}

void criterion_9_compression(Checker& check, Workbench& bench) {
  const SolveTrace& adaptive = bench.solve(EnergyModel::stable_neo_hookean,
                                           ScenarioKind::compress, 0.25, 0.495,
                                           StrategyKind::adaptive, 0.1);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "%s in %d iterations (eps=0.1)",
                to_string(adaptive.status), iters(adaptive));
  check.report(9, "compression x0.25 at nu=0.495 converges with eps=0.1",
               converged(adaptive) && iters(adaptive) < 200, detail);
}

void criterion_4_psd(Checker& check, Workbench& bench) {
  // every clamp/abs/adaptive solve performed by criteria 5-9: factorization
  // succeeded in every iteration iff no run ended not_positive_definite, and
  // the projected systems gave descent (nonnegative decrements)
  int runs = 0, npd = 0, negative_decrements = 0;
  for (const auto& [key, trace] : bench.cache) {
    ++runs;
    if (trace.status == SolveStatus::not_positive_definite) ++npd;
    for (const IterationRecord& r : trace.records)
      if (r.decrement < 0) ++negative_decrements;
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "%d solves, %d not_positive_definite, %d negative decrements", runs, npd,
                negative_decrements);
  check.report(4, "projected factorizations succeed across the bench matrix",
               runs > 0 && npd == 0 && negative_decrements == 0, detail);
}

void criterion_10_trace_structure(Checker& check, Workbench& bench) {
  int adaptive_runs = 0;
  bool ok = true;
  std::string why = "all adaptive traces well-formed";
  for (const auto& [key, trace] : bench.cache) {
    // strategy field is the 5th of the cache key
    int field = 0;
    size_t pos = 0;
    for (int k = 0; k < 4; ++k) pos = key.find('|', pos) + 1;
    field = std::stoi(key.substr(pos));
    if (field != int(StrategyKind::adaptive)) continue;
    const double eps = [&] {
      size_t p = pos;
      p = key.find('|', p) + 1;
      return std::stod(key.substr(p));
    }();
    ++adaptive_runs;
    if (trace.records.empty()) continue;
    if (trace.records[0].mode.kind != ResolvedMode::Kind::abs ||
        trace.records[0].rho.has_value()) {
      ok = false;
      why = "first iteration is not plain abs";
    }
    for (size_t i = 1; i < trace.records.size(); ++i) {
      const IterationRecord& r = trace.records[i];
      if (!r.rho.has_value()) {
        ok = false;
        why = "later iteration lacks rho";
        break;
      }
      const FilterKind expected = resolve_adaptive(*r.rho, eps).kind;
      const bool matches = (expected == FilterKind::clamp &&
                            r.mode.kind == ResolvedMode::Kind::clamp) ||
                           (expected == FilterKind::abs && r.mode.kind == ResolvedMode::Kind::abs);
      if (!matches) {
        ok = false;
        why = "mode does not follow resolve_adaptive(rho)";
        break;
      }
    }
    if (converged(trace)) {
      const IterationRecord& last = trace.records.back();
      const bool near_one = last.rho && std::abs(*last.rho - 1.0) <= 10.0 * eps;
      const bool below_tol = last.decrement < 1e-5;
      if (!(near_one || below_tol)) {
        ok = false;
        why = "converged run does not end near rho=1 or below tolerance";
      }
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%d adaptive runs checked: %s", adaptive_runs,
                why.c_str());
  check.report(10, "adaptive traces: abs start, rho-driven modes, clamp fallback",
               ok && adaptive_runs > 0, detail);
}

void criterion_11_determinism(Checker& check) {
  trn_test::TempDir dir("trn_acceptance");
  json cfg;
  cfg["version"] = 1;
  cfg["mesh"] = {{"beam",
                  {{"divisions", {kDivisions[0], kDivisions[1], kDivisions[2]}},
                   {"extent", {kExtent[0], kExtent[1], kExtent[2]}}}}};
  cfg["scenario"] = {{"kind", "stretch"},
                     {"magnitude", 4.0},
                     {"fixed_region", {kFixedRegion, kFixedRegion}}};
  cfg["material"] = {{"young", kYoung}, {"poisson", 0.495}, {"model", "stable_neo_hookean"}};
  cfg["solver"] = {{"strategy", {{"kind", "adaptive"}, {"rho_eps", 0.01}}}};
  cfg["seed"] = 7;
  auto run_once = [&](const std::string& tag) {
    cfg["output_dir"] = dir.str(tag);
    const std::string path = dir.str(tag + ".json");
    std::ofstream out(path);
    out << cfg.dump();
    out.close();
    return cmd_run(path);
  };
  const int code_a = run_once("a");
  const int code_b = run_once("b");
  auto read_rows = [&](const std::string& tag) {
    std::ifstream in(dir.str(tag + "/trace.csv"));
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
      const size_t comma = line.rfind(',');
      rows.push_back(line.substr(0, comma));  // drop wall_time
    }
    return rows;
  };
  const auto a = read_rows("a"), b = read_rows("b");
  const bool ok = code_a == 0 && code_b == 0 && !a.empty() && a == b;
  char detail[128];
  std::snprintf(detail, sizeof(detail), "two runs, %zu rows, %s", a.size(),
                a == b ? "identical modulo wall_time" : "DIFFER");
  check.report(11, "identical configs produce identical traces", ok, detail);
}

void criterion_12_variants(Checker& check, Workbench& bench) {
  bool ok = true;
  std::string detail;
  for (EnergyModel model : {EnergyModel::arap_vol, EnergyModel::symmetric_dirichlet_vol}) {
    for (double nu : {0.495, 0.3}) {
      const SolveTrace& adaptive =
          bench.solve(model, ScenarioKind::stretch, 2.0, nu, StrategyKind::adaptive);
      const SolveTrace& clamp =
          bench.solve(model, ScenarioKind::stretch, 2.0, nu, StrategyKind::clamp);
      const SolveTrace& abs_t =
          bench.solve(model, ScenarioKind::stretch, 2.0, nu, StrategyKind::abs);
      const int best = std::min(iters(clamp), iters(abs_t));
      ok = ok && converged(adaptive) && iters(adaptive) <= best + 2;
      char cell[96];
      std::snprintf(cell, sizeof(cell), "%s nu=%.3g:[%d,%d,%d] ",
                    model == EnergyModel::arap_vol ? "arap" : "symdir", nu, iters(adaptive),
                    iters(clamp), iters(abs_t));
      detail += cell;
    }
  }
  check.report(12, "energy variants (ARAP, symmetric Dirichlet) at stretch x2", ok,
               detail + "[adaptive,clamp,abs]");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker check;
  Workbench bench;

  criterion_1_lemmas(check);
  criterion_2_derivatives(check);
  criterion_3_assembly(check);
  criterion_5_equivalence(check, bench);
  criterion_6_hard(check, bench);
  criterion_7_easy(check, bench);
  criterion_8_sweep(check, bench);
  criterion_9_compression(check, bench);
  criterion_4_psd(check, bench);      // inspects every solve recorded above
  criterion_10_trace_structure(check, bench);
  criterion_11_determinism(check);
  criterion_12_variants(check, bench);

  std::printf("%d criteria failed, total %.1fs\n", check.failures, seconds_since(t0));
  return check.failures == 0 ? 0 : 1;
}
