#pragma once

// Tetrahedral meshes: TetGen (.node/.ele) and MSH v2 loaders, a procedural
// beam generator, rest-state precomputation, initial-deformation scenarios,
// and legacy-VTK output (plus a reader for round-trip checks).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trn/core.hpp"

namespace trn {

struct TetMesh {
  std::vector<Vec3> rest_positions;
  std::vector<std::array<int, 4>> tets;
  std::vector<int> fixed_vertices;  // sorted, unique

  int num_vertices() const { return static_cast<int>(rest_positions.size()); }
  int num_tets() const { return static_cast<int>(tets.size()); }
};

struct RestData {
  std::vector<Mat3> dm_inv;    // inverse rest-shape matrix per element
  std::vector<double> volume;  // rest volume per element, > 0
};

enum class MeshFormat { tetgen, msh };

enum class ScenarioKind { stretch, compress, bend, twist, identity };

// Initial-deformation recipe. magnitude is the axial scale factor for
// stretch/compress and the total angle in radians for twist/bend.
// fixed_region gives the slab fraction pinned at each axial end.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::identity;
  double magnitude = 1.0;
  Vec3 axis = Vec3(0, 0, 1);
  std::array<double, 2> fixed_region = {0.05, 0.05};
};

struct ScenarioResult {
  std::vector<Vec3> positions;
  std::vector<int> fixed;  // sorted, unique
};

inline double tet_shape_det(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a);
}

inline double bbox_diagonal(const std::vector<Vec3>& pts) {
  if (pts.empty()) return 0.0;
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

namespace detail {

// Shared by loaders and generators: index checks, reorientation of inverted
// rest tets (swap two indices), degenerate-element rejection at
// |det Dm| <= 1e-12 * h^3 with h the bounding-box diagonal.
inline void finalize_mesh(TetMesh& mesh) {
  const int nv = mesh.num_vertices();
  if (nv < 4) throw MeshError("mesh has fewer than 4 vertices");
  if (mesh.tets.empty()) throw MeshError("mesh has no tetrahedra");
  for (size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    for (int k = 0; k < 4; ++k) {
      if (t[k] < 0 || t[k] >= nv)
        throw MeshError("tet " + std::to_string(e) + " references vertex " +
                        std::to_string(t[k]) + " outside [0, " + std::to_string(nv) + ")");
    }
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        if (t[a] == t[b])
          throw MeshError("tet " + std::to_string(e) + " repeats vertex " + std::to_string(t[a]));
  }
  const double h = bbox_diagonal(mesh.rest_positions);
  const double det_eps = 1e-12 * h * h * h;
  for (size_t e = 0; e < mesh.tets.size(); ++e) {
    auto& t = mesh.tets[e];
    const double det = tet_shape_det(mesh.rest_positions[t[0]], mesh.rest_positions[t[1]],
                                     mesh.rest_positions[t[2]], mesh.rest_positions[t[3]]);
    if (std::abs(det) <= det_eps)
      throw MeshError("degenerate rest tet " + std::to_string(e));
    if (det < 0) std::swap(t[2], t[3]);
  }
  std::sort(mesh.fixed_vertices.begin(), mesh.fixed_vertices.end());
  mesh.fixed_vertices.erase(std::unique(mesh.fixed_vertices.begin(), mesh.fixed_vertices.end()),
                            mesh.fixed_vertices.end());
  for (int v : mesh.fixed_vertices)
    if (v < 0 || v >= nv) throw MeshError("fixed vertex " + std::to_string(v) + " out of range");
}

inline std::vector<std::string> significant_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

inline std::string strip_tetgen_suffix(const std::string& path) {
  for (const char* suffix : {".node", ".ele"}) {
    const std::string s(suffix);
    if (path.size() > s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0)
      return path.substr(0, path.size() - s.size());
  }
  return path;
}

inline TetMesh load_tetgen(const std::string& path) {
  const std::string prefix = strip_tetgen_suffix(path);
  const auto node_lines = significant_lines(prefix + ".node");
  const auto ele_lines = significant_lines(prefix + ".ele");
  if (node_lines.empty() || ele_lines.empty())
    throw MeshError("empty TetGen file for " + prefix);

  TetMesh mesh;
  {
    std::istringstream header(node_lines[0]);
    long count = 0, dim = 0;
    if (!(header >> count >> dim) || count <= 0 || dim != 3)
      throw MeshError("garbled .node header in " + prefix + ".node");
    if (static_cast<long>(node_lines.size()) < count + 1)
      throw MeshError("truncated .node file " + prefix + ".node");
    long base = 0;
    for (long i = 0; i < count; ++i) {
      std::istringstream row(node_lines[1 + i]);
      long idx;
      double x, y, z;
      if (!(row >> idx >> x >> y >> z))
        throw MeshError("garbled .node row " + std::to_string(i) + " in " + prefix + ".node");
      if (i == 0) {
        base = idx;  // 0- or 1-based, auto-detected from the first index
        if (base != 0 && base != 1)
          throw MeshError("unsupported node numbering base " + std::to_string(base));
      } else if (idx != base + i) {
        throw MeshError("non-consecutive node index in " + prefix + ".node");
      }
      mesh.rest_positions.emplace_back(x, y, z);
    }
    std::istringstream eh(ele_lines[0]);
    long ecount = 0, per_tet = 0;
    if (!(eh >> ecount >> per_tet) || ecount <= 0 || per_tet != 4)
      throw MeshError("garbled .ele header in " + prefix + ".ele (only 4-node tets supported)");
    if (static_cast<long>(ele_lines.size()) < ecount + 1)
      throw MeshError("truncated .ele file " + prefix + ".ele");
    for (long i = 0; i < ecount; ++i) {
      std::istringstream row(ele_lines[1 + i]);
      long idx, v[4];
      if (!(row >> idx >> v[0] >> v[1] >> v[2] >> v[3]))
        throw MeshError("garbled .ele row " + std::to_string(i) + " in " + prefix + ".ele");
      std::array<int, 4> t;
      for (int k = 0; k < 4; ++k) t[k] = static_cast<int>(v[k] - base);
      mesh.tets.push_back(t);
    }
  }
  finalize_mesh(mesh);
  return mesh;
}

inline TetMesh load_msh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path);
  TetMesh mesh;
  std::map<long, int> node_index;
  bool saw_nodes = false, saw_elements = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("$Nodes", 0) == 0) {
      saw_nodes = true;
      long count = 0;
      if (!(in >> count) || count <= 0) throw MeshError("garbled $Nodes count in " + path);
      for (long i = 0; i < count; ++i) {
        long id;
        double x, y, z;
        if (!(in >> id >> x >> y >> z)) throw MeshError("garbled node row in " + path);
        node_index[id] = static_cast<int>(mesh.rest_positions.size());
        mesh.rest_positions.emplace_back(x, y, z);
      }
    } else if (line.rfind("$Elements", 0) == 0) {
      saw_elements = true;
      long count = 0;
      if (!(in >> count) || count < 0) throw MeshError("garbled $Elements count in " + path);
      std::getline(in, line);  // rest of the count line
      for (long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw MeshError("truncated $Elements in " + path);
        std::istringstream row(line);
        long idx, type, ntags;
        if (!(row >> idx >> type >> ntags)) throw MeshError("garbled element row in " + path);
        long tag;
        for (long t = 0; t < ntags; ++t)
          if (!(row >> tag)) throw MeshError("garbled element tags in " + path);
        if (type != 4) continue;  // only linear tets
        long v[4];
        if (!(row >> v[0] >> v[1] >> v[2] >> v[3]))
          throw MeshError("garbled tet row in " + path);
        std::array<int, 4> t;
        for (int k = 0; k < 4; ++k) {
          auto it = node_index.find(v[k]);
          if (it == node_index.end())
            throw MeshError("tet references unknown node " + std::to_string(v[k]) + " in " + path);
          t[k] = it->second;
        }
        mesh.tets.push_back(t);
      }
    }
  }
  if (!saw_nodes || !saw_elements)
    throw MeshError("missing $Nodes or $Elements section in " + path);
  finalize_mesh(mesh);
  return mesh;
}

}  // namespace detail

inline TetMesh load_mesh(const std::string& path, MeshFormat format) {
  return format == MeshFormat::tetgen ? detail::load_tetgen(path) : detail::load_msh(path);
}

// Axis-aligned box split into divisions cells, each cell split into the six
// tets around the (0,0,0)-(1,1,1) cell diagonal. The same diagonal is used in
// every cell, so repeated runs produce bit-identical meshes.
inline TetMesh generate_beam(const std::array<int, 3>& divisions, const Vec3& extent) {
  for (int k = 0; k < 3; ++k) {
    if (divisions[k] < 1) throw MeshError("beam divisions must be >= 1");
    if (!(extent[k] > 0)) throw MeshError("beam extent must be positive");
  }
  const int nx = divisions[0], ny = divisions[1], nz = divisions[2];
  TetMesh mesh;
  mesh.rest_positions.reserve(static_cast<size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        mesh.rest_positions.emplace_back(extent[0] * (double(i) / nx),
                                         extent[1] * (double(j) / ny),
                                         extent[2] * (double(k) / nz));
  auto vid = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
  // The six monotone index paths from corner (0,0,0) to corner (1,1,1).
  static constexpr int kPaths[6][2][3] = {
      {{1, 0, 0}, {1, 1, 0}}, {{1, 0, 0}, {1, 0, 1}}, {{0, 1, 0}, {1, 1, 0}},
      {{0, 1, 0}, {0, 1, 1}}, {{0, 0, 1}, {1, 0, 1}}, {{0, 0, 1}, {0, 1, 1}}};
  mesh.tets.reserve(static_cast<size_t>(6) * nx * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (const auto& path : kPaths)
          mesh.tets.push_back({vid(i, j, k),
                               vid(i + path[0][0], j + path[0][1], k + path[0][2]),
                               vid(i + path[1][0], j + path[1][1], k + path[1][2]),
                               vid(i + 1, j + 1, k + 1)});
  detail::finalize_mesh(mesh);
  return mesh;
}

inline RestData precompute_rest(const TetMesh& mesh) {
  RestData rest;
  rest.dm_inv.resize(mesh.num_tets());
  rest.volume.resize(mesh.num_tets());
  const double h = bbox_diagonal(mesh.rest_positions);
  const double det_eps = 1e-12 * h * h * h;
  for (int e = 0; e < mesh.num_tets(); ++e) {
    const auto& t = mesh.tets[e];
    Mat3 dm;
    for (int k = 0; k < 3; ++k)
      dm.col(k) = mesh.rest_positions[t[k + 1]] - mesh.rest_positions[t[0]];
    const double det = dm.determinant();
    if (std::abs(det) <= det_eps)
      throw MeshError("degenerate element " + std::to_string(e) + " in precompute_rest");
    rest.dm_inv[e] = dm.inverse();
    rest.volume[e] = det / 6.0;
  }
  return rest;
}

inline ScenarioResult apply_scenario(const TetMesh& mesh, const ScenarioSpec& spec) {
  if ((spec.kind == ScenarioKind::stretch || spec.kind == ScenarioKind::compress) &&
      !(spec.magnitude > 0))
    throw ScenarioError("stretch/compress magnitude must be positive");
  for (double f : spec.fixed_region)
    if (!(f >= 0.0 && f < 0.5)) throw ScenarioError("fixed_region fractions must lie in [0, 0.5)");
  if (!(spec.axis.norm() > 1e-12)) throw ScenarioError("scenario axis is zero");

  const Vec3 axis = spec.axis.normalized();
  // Orthonormal frame (axis, n, b).
  Vec3 seed = std::abs(axis[0]) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  const Vec3 n = (seed - seed.dot(axis) * axis).normalized();
  const Vec3 b = axis.cross(n);

  const int nv = mesh.num_vertices();
  std::vector<double> s(nv);
  double s0 = std::numeric_limits<double>::max(), s1 = std::numeric_limits<double>::lowest();
  for (int v = 0; v < nv; ++v) {
    s[v] = axis.dot(mesh.rest_positions[v]);
    s0 = std::min(s0, s[v]);
    s1 = std::max(s1, s[v]);
  }
  const double length = s1 - s0;
  if (!(length > 1e-12 * std::max(1.0, bbox_diagonal(mesh.rest_positions))))
    throw ScenarioError("degenerate axial extent along scenario axis");

  Vec3 center = Vec3::Zero();
  {
    Vec3 lo = mesh.rest_positions[0], hi = mesh.rest_positions[0];
    for (const Vec3& p : mesh.rest_positions) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    center = 0.5 * (lo + hi);
  }
  const double s_mid = 0.5 * (s0 + s1);

  ScenarioResult result;
  result.positions.resize(nv);
  for (int v = 0; v < nv; ++v) {
    const Vec3& p = mesh.rest_positions[v];
    switch (spec.kind) {
      case ScenarioKind::identity:
        result.positions[v] = p;
        break;
      case ScenarioKind::stretch:
      case ScenarioKind::compress:
        // scale the axial coordinate about the axial mid-plane
        result.positions[v] = p + axis * ((s[v] - s_mid) * (spec.magnitude - 1.0));
        break;
      case ScenarioKind::twist: {
        const double angle = spec.magnitude * (s[v] - s0) / length;
        const Vec3 on_axis = center + axis * (s[v] - axis.dot(center));
        const Vec3 radial = p - on_axis;
        result.positions[v] =
            on_axis + radial * std::cos(angle) + axis.cross(radial) * std::sin(angle);
        break;
      }
      case ScenarioKind::bend: {
        if (std::abs(spec.magnitude) < 1e-12) {
          result.positions[v] = p;
          break;
        }
        // map the axis segment onto a circular arc of total angle magnitude,
        // carrying cross-sections rigidly with the rotating tangent frame
        const double radius = length / spec.magnitude;
        const double phi = (s[v] - s0) / radius;
        const Vec3 start = center + axis * (s0 - axis.dot(center));
        const Vec3 arc_center = start + radius * n;
        const Vec3 arc_point = arc_center + radius * (std::sin(phi) * axis - std::cos(phi) * n);
        const Vec3 m = -std::sin(phi) * axis + std::cos(phi) * n;  // rotated n
        const Vec3 on_axis = center + axis * (s[v] - axis.dot(center));
        const Vec3 radial = p - on_axis;
        result.positions[v] = arc_point + n.dot(radial) * m + b.dot(radial) * b;
        break;
      }
    }
  }

  const double tol = 1e-12;
  std::vector<int> lo_set, hi_set;
  for (int v = 0; v < nv; ++v) {
    const double rel = (s[v] - s0) / length;
    if (rel <= spec.fixed_region[0] + tol) lo_set.push_back(v);
    if (rel >= 1.0 - spec.fixed_region[1] - tol) hi_set.push_back(v);
  }
  if (lo_set.empty() || hi_set.empty())
    throw ScenarioError("empty fixed set at an axial end (unconstrained solve)");
  result.fixed = lo_set;
  result.fixed.insert(result.fixed.end(), hi_set.begin(), hi_set.end());
  std::sort(result.fixed.begin(), result.fixed.end());
  result.fixed.erase(std::unique(result.fixed.begin(), result.fixed.end()), result.fixed.end());
  return result;
}

inline void export_vtk(const TetMesh& mesh, const std::vector<Vec3>& positions,
                       const std::string& path) {
  if (static_cast<int>(positions.size()) != mesh.num_vertices())
    throw MeshError("export_vtk: positions length does not match vertex count");
  if (mesh.tets.empty()) throw MeshError("export_vtk: mesh has no tets");
  std::ofstream out(path);
  if (!out) throw MeshError("export_vtk: cannot write " + path);
  out << "# vtk DataFile Version 2.0\n"
      << "tet mesh\n"
      << "ASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n"
      << "POINTS " << positions.size() << " double\n";
  char buf[128];
  for (const Vec3& p : positions) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  out << "CELLS " << mesh.num_tets() << " " << 5 * mesh.num_tets() << "\n";
  for (const auto& t : mesh.tets)
    out << "4 " << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
  out << "CELL_TYPES " << mesh.num_tets() << "\n";
  for (int e = 0; e < mesh.num_tets(); ++e) out << "10\n";
  if (!out) throw MeshError("export_vtk: write failure on " + path);
}

// Reads legacy ASCII unstructured grids written by export_vtk.
inline std::pair<std::vector<Vec3>, std::vector<std::array<int, 4>>> read_vtk(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("read_vtk: cannot open " + path);
  std::vector<Vec3> points;
  std::vector<std::array<int, 4>> cells;
  std::string token;
  while (in >> token) {
    if (token == "POINTS") {
      long count = 0;
      std::string type;
      if (!(in >> count >> type) || count <= 0) throw MeshError("read_vtk: garbled POINTS");
      points.resize(count);
      for (long i = 0; i < count; ++i)
        if (!(in >> points[i][0] >> points[i][1] >> points[i][2]))
          throw MeshError("read_vtk: truncated POINTS");
    } else if (token == "CELLS") {
      long count = 0, total = 0;
      if (!(in >> count >> total)) throw MeshError("read_vtk: garbled CELLS");
      cells.resize(count);
      for (long i = 0; i < count; ++i) {
        int npts;
        if (!(in >> npts) || npts != 4) throw MeshError("read_vtk: only tetrahedra supported");
        for (int k = 0; k < 4; ++k)
          if (!(in >> cells[i][k])) throw MeshError("read_vtk: truncated CELLS");
      }
    } else if (token == "CELL_TYPES") {
      long count = 0;
      if (!(in >> count)) throw MeshError("read_vtk: garbled CELL_TYPES");
      for (long i = 0; i < count; ++i) {
        int type;
        if (!(in >> type) || type != 10)
          throw MeshError("read_vtk: unsupported cell type");
      }
    }
  }
  if (points.empty() || cells.empty()) throw MeshError("read_vtk: no grid in " + path);
  return {points, cells};
}

// TetGen pair writer (1-based indices, as tetgen itself emits).
inline void write_tetgen(const TetMesh& mesh, const std::string& prefix) {
  std::ofstream node(prefix + ".node");
  if (!node) throw MeshError("cannot write " + prefix + ".node");
  node << mesh.num_vertices() << " 3 0 0\n";
  char buf[160];
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Vec3& p = mesh.rest_positions[v];
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g\n", v + 1, p[0], p[1], p[2]);
    node << buf;
  }
  std::ofstream ele(prefix + ".ele");
  if (!ele) throw MeshError("cannot write " + prefix + ".ele");
  ele << mesh.num_tets() << " 4 0\n";
  for (int e = 0; e < mesh.num_tets(); ++e) {
    const auto& t = mesh.tets[e];
    ele << e + 1 << " " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << " " << t[3] + 1
        << "\n";
  }
  if (!node || !ele) throw MeshError("write failure on TetGen pair " + prefix);
}

}  // namespace trn
