#pragma once

// Scatter of per-element quadratics into the free-DOF global system.
// Dirichlet vertices are eliminated (rows and columns dropped); the sparsity
// pattern is built once per solve and reused, so assembly is a flat pass
// over precomputed value offsets and iterations share one symbolic
// factorization.

#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "trn/core.hpp"
#include "trn/energy.hpp"
#include "trn/mesh.hpp"

namespace trn {

using SparseMat = Eigen::SparseMatrix<double>;

struct DofMap {
  std::vector<int> free_index;  // per vertex: index among free vertices, -1 if fixed
  int free_count = 0;           // 3 x number of free vertices
};

inline DofMap build_dofmap(int num_vertices, const std::vector<int>& fixed) {
  DofMap map;
  map.free_index.assign(num_vertices, 0);
  std::vector<char> is_fixed(num_vertices, 0);
  for (int v : fixed) {
    if (v < 0 || v >= num_vertices)
      throw MeshError("fixed vertex " + std::to_string(v) + " out of range");
    is_fixed[v] = 1;
  }
  int next = 0;
  for (int v = 0; v < num_vertices; ++v) map.free_index[v] = is_fixed[v] ? -1 : next++;
  map.free_count = 3 * next;
  return map;
}

struct SparsityPattern {
  SparseMat zeros;            // compressed structure with zero values
  std::vector<int> scatter;   // tets * 144 offsets into the value array, -1 = dropped
  std::vector<int> diag;      // value offset of each diagonal entry, -1 if absent
};

inline SparsityPattern build_pattern(const TetMesh& mesh, const DofMap& dofmap) {
  const int n = dofmap.free_count;
  SparsityPattern pattern;
  pattern.zeros.resize(n, n);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<size_t>(mesh.num_tets()) * 144);
  for (const auto& t : mesh.tets) {
    for (int a = 0; a < 4; ++a) {
      const int fa = dofmap.free_index[t[a]];
      if (fa < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int fb = dofmap.free_index[t[b]];
        if (fb < 0) continue;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) triplets.emplace_back(3 * fa + r, 3 * fb + c, 0.0);
      }
    }
  }
  pattern.zeros.setFromTriplets(triplets.begin(), triplets.end());
  pattern.zeros.makeCompressed();

  auto value_offset = [&](int row, int col) -> int {
    const int* outer = pattern.zeros.outerIndexPtr();
    const int* inner = pattern.zeros.innerIndexPtr();
    const int* begin = inner + outer[col];
    const int* end = inner + outer[col + 1];
    const int* it = std::lower_bound(begin, end, row);
    if (it == end || *it != row) return -1;
    return static_cast<int>(it - inner);
  };

  pattern.scatter.assign(static_cast<size_t>(mesh.num_tets()) * 144, -1);
  for (int e = 0; e < mesh.num_tets(); ++e) {
    const auto& t = mesh.tets[e];
    int* off = &pattern.scatter[static_cast<size_t>(e) * 144];
    for (int j = 0; j < 12; ++j) {
      const int fb = dofmap.free_index[t[j / 3]];
      if (fb < 0) continue;
      const int col = 3 * fb + j % 3;
      for (int i = 0; i < 12; ++i) {
        const int fa = dofmap.free_index[t[i / 3]];
        if (fa < 0) continue;
        off[j * 12 + i] = value_offset(3 * fa + i % 3, col);
      }
    }
  }
  pattern.diag.resize(n);
  for (int d = 0; d < n; ++d) pattern.diag[d] = value_offset(d, d);
  return pattern;
}

struct GlobalSystem {
  double energy = 0;
  Eigen::VectorXd gradient;
  SparseMat hessian;
};

// Serial merge in element-index order: results are identical across runs and
// thread counts for the same inputs.
inline GlobalSystem assemble(const std::vector<ElementQuadratics>& elems, const TetMesh& mesh,
                             const DofMap& dofmap, const SparsityPattern& pattern) {
  if (static_cast<int>(elems.size()) != mesh.num_tets())
    throw AssemblyError("one quadratics entry per element required");
  GlobalSystem sys;
  sys.gradient = Eigen::VectorXd::Zero(dofmap.free_count);
  sys.hessian = pattern.zeros;
  double* vals = sys.hessian.valuePtr();
  for (int e = 0; e < mesh.num_tets(); ++e) {
    const ElementQuadratics& q = elems[e];
    if (!std::isfinite(q.value) || !q.gradient.allFinite() || !q.hessian.allFinite())
      throw AssemblyError("non-finite quadratics at element " + std::to_string(e));
    sys.energy += q.value;
    const auto& t = mesh.tets[e];
    for (int a = 0; a < 4; ++a) {
      const int fa = dofmap.free_index[t[a]];
      if (fa < 0) continue;
      sys.gradient.segment<3>(3 * fa) += q.gradient.segment<3>(3 * a);
    }
    const int* off = &pattern.scatter[static_cast<size_t>(e) * 144];
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 12; ++i) {
        const int o = off[j * 12 + i];
        if (o >= 0) vals[o] += q.hessian(i, j);
      }
  }
  return sys;
}

// u^T H u with the raw per-element Hessians, element by element; no second
// global matrix is formed. Fixed DOFs contribute zero displacement.
inline double quadratic_form(const std::vector<ElementQuadratics>& elems, const TetMesh& mesh,
                             const DofMap& dofmap, const Eigen::VectorXd& u) {
  double total = 0;
  for (int e = 0; e < mesh.num_tets(); ++e) {
    const auto& t = mesh.tets[e];
    Vec12 ue = Vec12::Zero();
    bool any = false;
    for (int a = 0; a < 4; ++a) {
      const int fa = dofmap.free_index[t[a]];
      if (fa < 0) continue;
      ue.segment<3>(3 * a) = u.segment<3>(3 * fa);
      any = true;
    }
    if (any) total += ue.dot(elems[e].hessian * ue);
  }
  return total;
}

// Symmetric positive-definite (Cholesky) factorization with the symbolic
// analysis shared across numeric refactorizations.
class LinearSolver {
 public:
  void analyze(const SparseMat& pattern) {
    llt_.analyzePattern(pattern);
    analyzed_ = true;
  }

  bool factorize(const SparseMat& h) {
    if (!analyzed_) analyze(h);
    llt_.factorize(h);
    return llt_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }

  // One step of iterative refinement when the plain solve misses the
  // 1e-8-relative residual target.
  Eigen::VectorXd solve_refined(const SparseMat& h, const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = llt_.solve(rhs);
    const double target = 1e-8 * rhs.norm();
    Eigen::VectorXd r = rhs - h * x;
    if (r.norm() > target) x += llt_.solve(r);
    return x;
  }

 private:
  Eigen::SimplicialLLT<SparseMat, Eigen::Lower> llt_;
  bool analyzed_ = false;
};

inline Eigen::VectorXd factor_solve(const GlobalSystem& system, const Eigen::VectorXd& rhs) {
  if (system.hessian.rows() == 0) throw Error("factor_solve: zero-dimensional system");
  LinearSolver solver;
  if (!solver.factorize(system.hessian)) throw NotPositiveDefiniteError();
  return solver.solve_refined(system.hessian, rhs);
}

}  // namespace trn
