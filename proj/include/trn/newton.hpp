#pragma once

// Projected-Newton driver for quasistatic energy minimization. Per
// iteration: evaluate raw element quadratics, resolve the spectral filter
// (the adaptive strategy switches on the trust-region ratio of the previous
// accepted step), project, assemble, factorize, solve, backtracking line
// search. Statuses are returned, never thrown, so benchmark sweeps survive
// individual failures.

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "trn/assembly.hpp"
#include "trn/parallel.hpp"
#include "trn/projection.hpp"

namespace trn {

struct SolverConfig {
  int max_iters = 200;
  double decrement_tol = 1e-5;  // absolute threshold on -0.5 g.u
  double ls_shrink = 0.8;
  double ls_armijo_c = 1e-4;    // 0 gives a pure-decrease search
  int ls_max_iters = 64;
  ProjectionStrategy strategy{};
  double rho_guard = 1e-12;     // predicted-reduction floor, relative to |f|
};

enum class SolveStatus { converged, max_iters, line_search_failed, not_positive_definite };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::line_search_failed: return "line_search_failed";
    case SolveStatus::not_positive_definite: return "not_positive_definite";
  }
  return "?";
}

// The filter actually applied in one iteration. param holds the blend
// weight, the threshold tau, or the pod diagonal shift.
struct ResolvedMode {
  enum class Kind { clamp, abs, blend, threshold_abs, unprojected, pod_shift };
  Kind kind = Kind::unprojected;
  double param = 0.0;
};

inline std::string to_string(const ResolvedMode& m) {
  char buf[64];
  switch (m.kind) {
    case ResolvedMode::Kind::clamp: return "clamp";
    case ResolvedMode::Kind::abs: return "abs";
    case ResolvedMode::Kind::blend:
      std::snprintf(buf, sizeof(buf), "blend(%.17g)", m.param);
      return buf;
    case ResolvedMode::Kind::threshold_abs:
      std::snprintf(buf, sizeof(buf), "threshold_abs(%.17g)", m.param);
      return buf;
    case ResolvedMode::Kind::unprojected: return "unprojected";
    case ResolvedMode::Kind::pod_shift:
      std::snprintf(buf, sizeof(buf), "pod_shift(%.17g)", m.param);
      return buf;
  }
  return "?";
}

struct IterationRecord {
  int iter = 0;
  double energy = 0;     // f at the iterate this iteration started from
  double decrement = 0;  // -0.5 g.u
  std::optional<double> rho;
  ResolvedMode mode;
  int ls_iters = 0;      // energy evaluations spent in the line search
  double step = 0;
  double wall_time = 0;
  // phase seconds: direction (quadratics + projection + assembly + solve),
  // line search, trust-region ratio bookkeeping
  double t_direction = 0;
  double t_linesearch = 0;
  double t_ratio = 0;
};

struct SolveTrace {
  std::vector<IterationRecord> records;
  SolveStatus status = SolveStatus::max_iters;
  std::vector<Vec3> final_positions;
};

inline double newton_decrement(const Eigen::VectorXd& g, const Eigen::VectorXd& u) {
  return -0.5 * g.dot(u);
}

// rho = (f(x) - f(x+u)) / (ftilde(x) - ftilde(x+u)) with the raw Hessian in
// the quadratic model. When the predicted reduction is below the guard the
// model is indistinguishable from the function at this resolution: rho = 1.
inline double trust_region_ratio(double f_prev, double f_cur, const Eigen::VectorXd& g_prev,
                                 const Eigen::VectorXd& u, double uHu, double guard) {
  const double predicted = -(g_prev.dot(u) + 0.5 * uHu);
  if (std::abs(predicted) < guard * std::max(1.0, std::abs(f_prev))) return 1.0;
  return (f_prev - f_cur) / predicted;
}

struct LineSearchResult {
  double step = 0;
  int ls_iters = 0;
  bool success = false;
  double f_new = 0;
};

// Backtracking from step 1 by cfg.ls_shrink until the Armijo condition
// holds. Infinite trial energies simply fail the condition. objective(step)
// evaluates f(x + step * u).
template <class Objective>
LineSearchResult line_search(Objective&& objective, double f0, double g_dot_u,
                             const SolverConfig& cfg) {
  LineSearchResult result;
  double step = 1.0;
  for (int k = 0; k < cfg.ls_max_iters; ++k) {
    const double f_try = objective(step);
    ++result.ls_iters;
    if (f_try <= f0 + cfg.ls_armijo_c * step * g_dot_u) {
      result.step = step;
      result.f_new = f_try;
      result.success = true;
      return result;
    }
    step *= cfg.ls_shrink;
  }
  return result;
}

struct PodShiftResult {
  bool success = false;
  double delta = 0;
};

// Factorize the raw Hessian, adding a growing uniform diagonal shift on
// failure: delta = 0, then 1e-8 * trace(H)/n growing by cfg growth until the
// factorization succeeds or the shift passes 1e8 * trace(H)/n. Mutates h in
// place; on success h holds H + delta I and solver holds its factorization.
inline PodShiftResult resolve_pod_shift(LinearSolver& solver, SparseMat& h,
                                        const SparsityPattern& pattern, double growth) {
  if (solver.factorize(h)) return {true, 0.0};
  const int n = static_cast<int>(h.rows());
  double* vals = h.valuePtr();
  std::vector<double> diag0(n);
  double trace = 0;
  for (int d = 0; d < n; ++d) {
    diag0[d] = pattern.diag[d] >= 0 ? vals[pattern.diag[d]] : 0.0;
    trace += diag0[d];
  }
  double base = trace / std::max(1, n);
  if (!(base > 0)) base = 1.0;  // indefinite traces would stall the growth
  const double limit = 1e8 * base;
  for (double delta = 1e-8 * base; delta <= limit; delta *= growth) {
    for (int d = 0; d < n; ++d)
      if (pattern.diag[d] >= 0) vals[pattern.diag[d]] = diag0[d] + delta;
    if (solver.factorize(h)) return {true, delta};
  }
  return {false, 0.0};
}

namespace detail {

inline std::array<Vec3, 4> gather_element(const std::vector<Vec3>& x,
                                          const std::array<int, 4>& tet) {
  return {x[tet[0]], x[tet[1]], x[tet[2]], x[tet[3]]};
}

inline void scatter_add(std::vector<Vec3>& x, const DofMap& dofmap, const Eigen::VectorXd& u,
                        double scale) {
  for (size_t v = 0; v < x.size(); ++v) {
    const int f = dofmap.free_index[v];
    if (f >= 0) x[v] += scale * Vec3(u.segment<3>(3 * f));
  }
}

inline double total_energy(const TetMesh& mesh, const RestData& rest, EnergyModel model,
                           const MaterialParams& params, const std::vector<Vec3>& x,
                           std::vector<double>& buffer) {
  const int ne = mesh.num_tets();
  buffer.resize(ne);
  parallel_for(ne, [&](int e) {
    const Mat3 f = deformation_gradient(gather_element(x, mesh.tets[e]), rest.dm_inv[e]);
    buffer[e] = rest.volume[e] * energy_density(model, params, f);
  });
  double total = 0;
  for (int e = 0; e < ne; ++e) total += buffer[e];
  return total;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Minimize the total energy over the free vertices starting from x0.
inline SolveTrace minimize(const TetMesh& mesh, const RestData& rest, EnergyModel model,
                           const MaterialParams& params, const std::vector<Vec3>& x0,
                           const std::vector<int>& fixed, const SolverConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const int ne = mesh.num_tets();
  const ProjectionStrategy& strategy = cfg.strategy;
  if (strategy.kind == StrategyKind::threshold_abs && !(strategy.tau > 0))
    throw ParameterError("threshold_abs strategy requires tau > 0");
  if (strategy.kind == StrategyKind::fixed_blend &&
      !(strategy.blend_w >= 0 && strategy.blend_w <= 1))
    throw ParameterError("fixed_blend weight must lie in [0, 1]");

  SolveTrace trace;
  std::vector<Vec3> x = x0;
  const DofMap dofmap = build_dofmap(mesh.num_vertices(), fixed);
  if (dofmap.free_count == 0) {
    trace.status = SolveStatus::converged;
    trace.final_positions = x;
    return trace;
  }
  const SparsityPattern pattern = build_pattern(mesh, dofmap);
  LinearSolver solver;
  solver.analyze(pattern.zeros);

  std::vector<ElementQuadratics> elems(ne), projected(ne);
  std::vector<double> energy_buffer;
  std::vector<Vec3> x_trial(x.size());

  const bool adaptive = strategy.kind == StrategyKind::adaptive;
  bool have_prev_step = false;
  double f_prev = 0, uHu_prev = 0;
  Eigen::VectorXd g_prev, u_accepted;

  trace.status = SolveStatus::max_iters;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto iter_t0 = clock::now();
    IterationRecord rec;
    rec.iter = iter;
    double ratio_seconds = 0;

    // --- Newton direction: quadratics, filter, assembly, factor, solve
    const auto dir_t0 = clock::now();
    parallel_for(ne, [&](int e) {
      elems[e] = element_quadratics(model, params, detail::gather_element(x, mesh.tets[e]),
                                    rest.dm_inv[e], rest.volume[e]);
    });
    double f = 0;
    for (int e = 0; e < ne; ++e) f += elems[e].value;

    std::optional<double> rho;
    ResolvedMode mode;
    switch (strategy.kind) {
      case StrategyKind::unprojected:
        mode = {ResolvedMode::Kind::unprojected, 0};
        break;
      case StrategyKind::clamp:
        mode = {ResolvedMode::Kind::clamp, strategy.clamp_floor};
        break;
      case StrategyKind::abs:
        mode = {ResolvedMode::Kind::abs, 0};
        break;
      case StrategyKind::fixed_blend:
        mode = {ResolvedMode::Kind::blend, strategy.blend_w};
        break;
      case StrategyKind::threshold_abs:
        mode = {ResolvedMode::Kind::threshold_abs, strategy.tau};
        break;
      case StrategyKind::pod_shift:
        mode = {ResolvedMode::Kind::pod_shift, 0};
        break;
      case StrategyKind::adaptive:
        // abs in the first iteration; afterwards the ratio of the previous
        // accepted step picks the filter.
        if (!have_prev_step) {
          mode = {ResolvedMode::Kind::abs, 0};
        } else {
          const auto ratio_t0 = clock::now();
          rho = trust_region_ratio(f_prev, f, g_prev, u_accepted, uHu_prev, cfg.rho_guard);
          const SpectralMode spectral = resolve_adaptive(*rho, strategy.rho_eps);
          mode = {spectral.kind == FilterKind::clamp ? ResolvedMode::Kind::clamp
                                                     : ResolvedMode::Kind::abs,
                  0};
          ratio_seconds += detail::seconds_since(ratio_t0);
        }
        break;
    }

    const bool spectral_mode = mode.kind == ResolvedMode::Kind::clamp ||
                               mode.kind == ResolvedMode::Kind::abs ||
                               mode.kind == ResolvedMode::Kind::blend ||
                               mode.kind == ResolvedMode::Kind::threshold_abs;
    const std::vector<ElementQuadratics>* system_elems = &elems;
    if (spectral_mode) {
      const double clamp_floor =
          mode.kind == ResolvedMode::Kind::clamp ? mode.param : 0.0;
      const SpectralMode spectral{mode.kind == ResolvedMode::Kind::abs ? FilterKind::abs
                                  : mode.kind == ResolvedMode::Kind::blend
                                      ? FilterKind::blend
                                      : FilterKind::clamp,
                                  mode.param};
      parallel_for(ne, [&](int e) {
        projected[e].value = elems[e].value;
        projected[e].gradient = elems[e].gradient;
        projected[e].hessian =
            mode.kind == ResolvedMode::Kind::threshold_abs
                ? project_element_threshold(elems[e].hessian, strategy.tau)
                : project_element(elems[e].hessian, spectral, clamp_floor);
      });
      system_elems = &projected;
    }

    GlobalSystem system = assemble(*system_elems, mesh, dofmap, pattern);
    if (mode.kind == ResolvedMode::Kind::pod_shift) {
      const PodShiftResult pod =
          resolve_pod_shift(solver, system.hessian, pattern, strategy.shift_growth);
      if (!pod.success) {
        trace.status = SolveStatus::not_positive_definite;
        break;
      }
      mode.param = pod.delta;
    } else if (!solver.factorize(system.hessian)) {
      trace.status = SolveStatus::not_positive_definite;
      break;
    }
    const Eigen::VectorXd direction =
        solver.solve_refined(system.hessian, Eigen::VectorXd(-system.gradient));
    const double decrement = newton_decrement(system.gradient, direction);
    rec.t_direction = detail::seconds_since(dir_t0) - ratio_seconds;
    rec.energy = f;
    rec.decrement = decrement;
    rec.rho = rho;
    rec.mode = mode;

    if (decrement < cfg.decrement_tol) {
      rec.t_ratio = ratio_seconds;
      rec.wall_time = detail::seconds_since(iter_t0);
      trace.records.push_back(rec);
      trace.status = SolveStatus::converged;
      break;
    }

    // --- line search along the projected Newton direction
    const auto ls_t0 = clock::now();
    const double g_dot_u = system.gradient.dot(direction);
    auto objective = [&](double step) {
      x_trial = x;
      detail::scatter_add(x_trial, dofmap, direction, step);
      return detail::total_energy(mesh, rest, model, params, x_trial, energy_buffer);
    };
    const LineSearchResult ls = line_search(objective, f, g_dot_u, cfg);
    rec.t_linesearch = detail::seconds_since(ls_t0);
    rec.ls_iters = ls.ls_iters;
    if (!ls.success) {
      rec.t_ratio = ratio_seconds;
      rec.wall_time = detail::seconds_since(iter_t0);
      trace.records.push_back(rec);
      trace.status = SolveStatus::line_search_failed;
      break;
    }
    rec.step = ls.step;
    detail::scatter_add(x, dofmap, direction, ls.step);

    if (adaptive) {
      // bookkeeping for the next iteration's ratio, against the raw Hessian
      const auto ratio_t0 = clock::now();
      u_accepted = ls.step * direction;
      uHu_prev = quadratic_form(elems, mesh, dofmap, u_accepted);
      g_prev = system.gradient;
      f_prev = f;
      have_prev_step = true;
      ratio_seconds += detail::seconds_since(ratio_t0);
    }
    rec.t_ratio = ratio_seconds;
    rec.wall_time = detail::seconds_since(iter_t0);
    trace.records.push_back(rec);
  }

  trace.final_positions = std::move(x);
  return trace;
}

// Apply the scenario (initial deformation + end-slab pinning), merge any
// explicit fixed vertices carried by the mesh, and minimize.
inline SolveTrace newton_solve(const TetMesh& mesh, const RestData& rest, EnergyModel model,
                               const MaterialParams& params, const ScenarioSpec& scenario,
                               const SolverConfig& cfg) {
  ScenarioResult sc = apply_scenario(mesh, scenario);
  std::vector<int> fixed = sc.fixed;
  fixed.insert(fixed.end(), mesh.fixed_vertices.begin(), mesh.fixed_vertices.end());
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
  return minimize(mesh, rest, model, params, sc.positions, fixed, cfg);
}

}  // namespace trn
