#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "trn/mesh.hpp"

using namespace trn;
using trn_test::TempDir;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

double total_volume(const TetMesh& mesh) {
  double v = 0;
  for (const auto& t : mesh.tets)
    v += tet_shape_det(mesh.rest_positions[t[0]], mesh.rest_positions[t[1]],
                       mesh.rest_positions[t[2]], mesh.rest_positions[t[3]]) /
         6.0;
  return v;
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("tetgen loader reads a unit corner tet") {
  TempDir dir("trn_mesh");
  write_file(dir.str("one.node"),
             "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n");
  write_file(dir.str("one.ele"), "1 4 0\n0 0 1 2 3\n");
  TetMesh mesh = load_mesh(dir.str("one.node"), MeshFormat::tetgen);
  CHECK(mesh.num_vertices() == 4);
  CHECK(mesh.num_tets() == 1);
  CHECK(total_volume(mesh) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("tetgen loader accepts 1-based files and path prefixes") {
  TempDir dir("trn_mesh");
  write_file(dir.str("one.node"),
             "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n");
  write_file(dir.str("one.ele"), "1 4 0\n1 1 2 3 4\n");
  TetMesh mesh = load_mesh(dir.str("one"), MeshFormat::tetgen);
  CHECK(mesh.num_tets() == 1);
  CHECK(mesh.tets[0] == std::array<int, 4>{0, 1, 2, 3});
}

TEST_CASE("negative orientation is fixed by swapping two indices") {
  TempDir dir("trn_mesh");
  write_file(dir.str("neg.node"),
             "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n");
  write_file(dir.str("neg.ele"), "1 4 0\n0 0 2 1 3\n");  // inverted
  TetMesh mesh = load_mesh(dir.str("neg.node"), MeshFormat::tetgen);
  CHECK(total_volume(mesh) > 0);
  std::sort(mesh.tets[0].begin(), mesh.tets[0].end());
  CHECK(mesh.tets[0] == std::array<int, 4>{0, 1, 2, 3});
}

TEST_CASE("loader errors: out-of-range index, missing and garbled files") {
  TempDir dir("trn_mesh");
  write_file(dir.str("bad.node"),
             "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n");
  write_file(dir.str("bad.ele"), "1 4 0\n0 0 1 2 9\n");
  CHECK_THROWS_AS(load_mesh(dir.str("bad.node"), MeshFormat::tetgen), MeshError);
  CHECK_THROWS_AS(load_mesh(dir.str("nothere.node"), MeshFormat::tetgen), MeshError);
  write_file(dir.str("garbled.node"), "not a header\n");
  write_file(dir.str("garbled.ele"), "1 4 0\n0 0 1 2 3\n");
  CHECK_THROWS_AS(load_mesh(dir.str("garbled.node"), MeshFormat::tetgen), MeshError);
}

TEST_CASE("loader rejects a zero-volume rest tet") {
  TempDir dir("trn_mesh");
  write_file(dir.str("flat.node"),
             "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 1 1 0\n");  // coplanar
  write_file(dir.str("flat.ele"), "1 4 0\n0 0 1 2 3\n");
  CHECK_THROWS_AS(load_mesh(dir.str("flat.node"), MeshFormat::tetgen), MeshError);
}

TEST_CASE("msh v2 loader keeps type-4 elements only") {
  TempDir dir("trn_mesh");
  write_file(dir.str("one.msh"),
             "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
             "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n"
             "$Elements\n2\n1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4\n$EndElements\n");
  TetMesh mesh = load_mesh(dir.str("one.msh"), MeshFormat::msh);
  CHECK(mesh.num_vertices() == 4);
  CHECK(mesh.num_tets() == 1);
  CHECK(total_volume(mesh) == doctest::Approx(1.0 / 6.0));

  write_file(dir.str("empty.msh"), "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
  CHECK_THROWS_AS(load_mesh(dir.str("empty.msh"), MeshFormat::msh), MeshError);
}

TEST_CASE("generate_beam basic counts and volumes") {
  TetMesh unit = generate_beam({1, 1, 1}, Vec3(1, 1, 1));
  CHECK(unit.num_vertices() == 8);
  CHECK(unit.num_tets() == 6);
  CHECK(total_volume(unit) == doctest::Approx(1.0).epsilon(1e-10));

  TetMesh beam = generate_beam({2, 2, 8}, Vec3(1, 1, 4));
  CHECK(beam.num_vertices() == 81);  // (2+1)(2+1)(8+1)
  CHECK(beam.num_tets() == 192);     // 6 * 2 * 2 * 8

  CHECK_THROWS_AS(generate_beam({0, 1, 1}, Vec3(1, 1, 1)), MeshError);
  CHECK_THROWS_AS(generate_beam({1, 1, 1}, Vec3(1, -1, 1)), MeshError);
}

TEST_CASE("generated beams partition the box volume") {
  const std::array<std::array<int, 3>, 3> divs = {{{1, 2, 3}, {3, 1, 4}, {2, 2, 2}}};
  const std::array<Vec3, 3> exts = {Vec3(0.4, 1.5, 2.0), Vec3(2, 0.7, 0.3), Vec3(1, 1, 1)};
  for (int k = 0; k < 3; ++k) {
    TetMesh mesh = generate_beam(divs[k], exts[k]);
    const double expected = exts[k][0] * exts[k][1] * exts[k][2];
    CHECK(total_volume(mesh) == doctest::Approx(expected).epsilon(1e-10));
    double min_vol = 1e300;
    for (const auto& t : mesh.tets)
      min_vol = std::min(min_vol,
                         tet_shape_det(mesh.rest_positions[t[0]], mesh.rest_positions[t[1]],
                                       mesh.rest_positions[t[2]], mesh.rest_positions[t[3]]) /
                             6.0);
    CHECK(min_vol > 0);
  }
}

TEST_CASE("precompute_rest on the unit corner tet") {
  TetMesh mesh;
  mesh.rest_positions = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  mesh.tets = {{0, 1, 2, 3}};
  RestData rest = precompute_rest(mesh);
  CHECK(rest.volume[0] == doctest::Approx(1.0 / 6.0));
  CHECK((rest.dm_inv[0] - Mat3::Identity()).norm() < 1e-14);

  // uniform scaling: volumes x8, dm_inv x0.5
  TetMesh big = mesh;
  for (auto& p : big.rest_positions) p *= 2.0;
  RestData rest2 = precompute_rest(big);
  CHECK(rest2.volume[0] == doctest::Approx(8.0 / 6.0));
  CHECK((rest2.dm_inv[0] - 0.5 * Mat3::Identity()).norm() < 1e-14);
}

TEST_CASE("precompute_rest rejects flat tets and inverts Dm exactly") {
  TetMesh flat;
  flat.rest_positions = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0.5, 0.5, 0)};
  flat.tets = {{0, 1, 2, 3}};
  CHECK_THROWS_AS(precompute_rest(flat), MeshError);

  TetMesh beam = generate_beam({2, 1, 2}, Vec3(1.3, 0.7, 2.1));
  RestData rest = precompute_rest(beam);
  for (int e = 0; e < beam.num_tets(); ++e) {
    Mat3 dm;
    for (int k = 0; k < 3; ++k)
      dm.col(k) = beam.rest_positions[beam.tets[e][k + 1]] - beam.rest_positions[beam.tets[e][0]];
    CHECK((rest.dm_inv[e] * dm - Mat3::Identity()).norm() < 1e-12);
    CHECK(rest.volume[e] > 0);
  }
}

TEST_CASE("apply_scenario: stretch x4 scales the axial extent exactly") {
  TetMesh beam = generate_beam({2, 2, 6}, Vec3(1, 1, 3));
  ScenarioSpec spec;
  spec.kind = ScenarioKind::stretch;
  spec.magnitude = 4.0;
  ScenarioResult res = apply_scenario(beam, spec);
  double lo = 1e300, hi = -1e300;
  for (const Vec3& p : res.positions) {
    lo = std::min(lo, p[2]);
    hi = std::max(hi, p[2]);
  }
  CHECK(hi - lo == doctest::Approx(12.0).epsilon(1e-12));
  // cross-section coordinates are untouched
  for (int v = 0; v < beam.num_vertices(); ++v) {
    CHECK(res.positions[v][0] == beam.rest_positions[v][0]);
    CHECK(res.positions[v][1] == beam.rest_positions[v][1]);
  }
}

TEST_CASE("apply_scenario: identity is the rest state and pins like any kind") {
  TetMesh beam = generate_beam({1, 1, 4}, Vec3(1, 1, 2));
  ScenarioSpec id;
  id.kind = ScenarioKind::identity;
  ScenarioResult a = apply_scenario(beam, id);
  for (int v = 0; v < beam.num_vertices(); ++v)
    CHECK((a.positions[v] - beam.rest_positions[v]).norm() == 0.0);

  ScenarioResult again = apply_scenario(beam, id);
  CHECK(a.positions == again.positions);  // idempotent
  ScenarioSpec st = id;
  st.kind = ScenarioKind::stretch;
  st.magnitude = 2.0;
  CHECK(apply_scenario(beam, st).fixed == a.fixed);
  CHECK(!a.fixed.empty());
}

TEST_CASE("apply_scenario: twist rotates cross-sections linearly") {
  TetMesh beam = generate_beam({2, 2, 4}, Vec3(1, 1, 2));
  ScenarioSpec spec;
  spec.kind = ScenarioKind::twist;
  spec.magnitude = M_PI;
  ScenarioResult res = apply_scenario(beam, spec);
  const Vec3 center(0.5, 0.5, 1.0);
  for (int v = 0; v < beam.num_vertices(); ++v) {
    const Vec3& p = beam.rest_positions[v];
    const Vec3& q = res.positions[v];
    const double angle = M_PI * p[2] / 2.0;
    const Vec3 r0(p[0] - 0.5, p[1] - 0.5, 0.0);
    const Vec3 expected =
        Vec3(0.5, 0.5, p[2]) + Vec3(r0[0] * std::cos(angle) - r0[1] * std::sin(angle),
                                    r0[0] * std::sin(angle) + r0[1] * std::cos(angle), 0.0);
    CHECK((q - expected).norm() < 1e-12);
    // distance to the axis is preserved
    const double d_rest = (Vec3(p[0], p[1], 0) - Vec3(0.5, 0.5, 0)).norm();
    const double d_def = (Vec3(q[0], q[1], 0) - Vec3(0.5, 0.5, 0)).norm();
    CHECK(std::abs(d_rest - d_def) < 1e-12);
  }
}

TEST_CASE("apply_scenario: bend carries cross-sections rigidly") {
  TetMesh beam = generate_beam({1, 1, 6}, Vec3(0.5, 0.5, 3));
  ScenarioSpec spec;
  spec.kind = ScenarioKind::bend;
  spec.magnitude = M_PI / 2;
  ScenarioResult res = apply_scenario(beam, spec);
  // vertices sharing a cross-section keep their pairwise distances
  for (int a = 0; a < beam.num_vertices(); ++a)
    for (int b = a + 1; b < beam.num_vertices(); ++b) {
      if (beam.rest_positions[a][2] != beam.rest_positions[b][2]) continue;
      const double rest_d = (beam.rest_positions[a] - beam.rest_positions[b]).norm();
      const double def_d = (res.positions[a] - res.positions[b]).norm();
      CHECK(def_d == doctest::Approx(rest_d).epsilon(1e-10));
    }
  // a bend resolves to the identity at zero angle
  spec.magnitude = 0.0;
  ScenarioResult flat = apply_scenario(beam, spec);
  for (int v = 0; v < beam.num_vertices(); ++v)
    CHECK((flat.positions[v] - beam.rest_positions[v]).norm() == 0.0);
}

TEST_CASE("apply_scenario validates its inputs") {
  TetMesh beam = generate_beam({1, 1, 2}, Vec3(1, 1, 1));
  ScenarioSpec spec;
  spec.kind = ScenarioKind::stretch;
  spec.magnitude = 0.0;
  CHECK_THROWS_AS(apply_scenario(beam, spec), ScenarioError);
  spec.magnitude = 2.0;
  spec.fixed_region = {0.5, 0.1};
  CHECK_THROWS_AS(apply_scenario(beam, spec), ScenarioError);
  spec.fixed_region = {0.1, 0.1};
  spec.axis = Vec3(0, 0, 0);
  CHECK_THROWS_AS(apply_scenario(beam, spec), ScenarioError);
}

TEST_CASE("vtk export and read round trip") {
  TempDir dir("trn_vtk");
  TetMesh mesh = generate_beam({1, 1, 2}, Vec3(0.9, 1.1, 2.3));
  export_vtk(mesh, mesh.rest_positions, dir.str("out.vtk"));
  {
    std::ifstream in(dir.str("out.vtk"));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("CELL_TYPES") != std::string::npos);
    CHECK(text.find("\n10\n") != std::string::npos);
  }
  auto [points, cells] = read_vtk(dir.str("out.vtk"));
  REQUIRE(points.size() == mesh.rest_positions.size());
  REQUIRE(cells.size() == mesh.tets.size());
  for (size_t v = 0; v < points.size(); ++v)
    CHECK((points[v] - mesh.rest_positions[v]).norm() < 1e-9);
  for (size_t e = 0; e < cells.size(); ++e) CHECK(cells[e] == mesh.tets[e]);

  TetMesh empty;
  empty.rest_positions = mesh.rest_positions;
  CHECK_THROWS_AS(export_vtk(empty, empty.rest_positions, dir.str("bad.vtk")), MeshError);
  std::vector<Vec3> short_positions(2);
  CHECK_THROWS_AS(export_vtk(mesh, short_positions, dir.str("bad.vtk")), MeshError);
}

TEST_CASE("tetgen writer round trips through the loader") {
  TempDir dir("trn_mesh");
  TetMesh mesh = generate_beam({2, 1, 3}, Vec3(1, 0.5, 1.5));
  write_tetgen(mesh, dir.str("beam"));
  TetMesh back = load_mesh(dir.str("beam.node"), MeshFormat::tetgen);
  REQUIRE(back.num_vertices() == mesh.num_vertices());
  REQUIRE(back.num_tets() == mesh.num_tets());
  for (int v = 0; v < mesh.num_vertices(); ++v)
    CHECK((back.rest_positions[v] - mesh.rest_positions[v]).norm() == 0.0);
  CHECK(back.tets == mesh.tets);
}

}  // TEST_SUITE
