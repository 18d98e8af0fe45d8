// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include "cml/error.hpp"
#include "cml/mesh.hpp"
#include "doctest.h"

using namespace cml;
namespace fs = std::filesystem;

namespace
{

fs::path scratch()
{
  const auto d = fs::temp_directory_path() / "cml_test_mesh";
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path &p, const std::string &text)
{
  std::ofstream(p) << text;
}

void check_invariants(const Mesh2D &m)
{
  CHECK(m.n_nodes() == m.n_edges() - m.n_cells() + 1);
  double area = 0.0;
  for (double a : m.cell_areas())
  {
    CHECK(a > 0.0);
    area += a;
  }
  (void)area;
  for (int e = 0; e < m.n_edges(); e++)
  {
    const auto [c0, c1] = m.edge_cells()[e];
    const auto n = m.edge_normals()[e];
    CHECK(std::abs(std::hypot(n[0], n[1]) - 1.0) < 1e-14);
    const auto &nodes = m.nodes();
    const auto [a, b] = m.edges()[e];
    const double tx = nodes[b][0] - nodes[a][0], ty = nodes[b][1] - nodes[a][1];
    CHECK(std::abs(tx * n[0] + ty * n[1]) < 1e-13);
    if (c1 >= 0)
    {
      CHECK(m.incidence(c0, e) * m.incidence(c1, e) == -1);
      CHECK(c0 < c1);
      CHECK(m.incidence(c0, e) == 1);  // normal leaves the lower-indexed cell
    }
    else
    {
      CHECK(m.incidence(c0, e) == 1);  // outward on the boundary
    }
  }
}

}  // namespace

TEST_CASE("structured unit square entity counts")
{
  for (int n = 1; n <= 32; n++)
  {
    const Mesh2D m = structured_unit_square(n);
    CHECK(m.n_nodes() == (n + 1) * (n + 1));
    CHECK(m.n_cells() == 2 * n * n);
    CHECK(m.n_edges() == 3 * n * n + 2 * n);
    CHECK(m.n_nodes() == m.n_edges() - m.n_cells() + 1);
    CHECK(static_cast<int>(m.boundary_edges().size()) == 4 * n);
    double area = 0.0;
    for (double a : m.cell_areas())
    {
      area += a;
    }
    CHECK(std::abs(area - 1.0) < 1e-12);
  }
  const Mesh2D m1 = structured_unit_square(1);
  CHECK(m1.n_nodes() == 4);
  CHECK(m1.n_cells() == 2);
  CHECK(m1.n_edges() == 5);
  const Mesh2D m16 = structured_unit_square(16);
  CHECK(m16.n_nodes() == 289);
  CHECK(m16.n_cells() == 512);
  CHECK(m16.n_edges() == 800);
  const Mesh2D m32 = structured_unit_square(32);
  CHECK(m32.n_cells() == 2048);
  CHECK(m32.n_edges() == 3136);
  CHECK(m32.n_nodes() == 1089);
  check_invariants(structured_unit_square(5));
  CHECK_THROWS_AS(structured_unit_square(0), InvalidArgument);
}

TEST_CASE("published unstructured counts satisfy the Euler relation")
{
  const int cells = 2400, faces = 3664, nodes = 1265;
  CHECK(nodes == faces - cells + 1);
}

TEST_CASE("diagonal runs from lower left to upper right")
{
  const Mesh2D m = structured_unit_square(1);
  bool found = false;
  for (const auto &[a, b] : m.edges())
  {
    const auto pa = m.nodes()[a], pb = m.nodes()[b];
    if (pa[0] != pb[0] && pa[1] != pb[1])
    {
      CHECK((pb[0] - pa[0]) * (pb[1] - pa[1]) > 0.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("load_mesh matches the structured mesh up to permutation")
{
  const auto p = scratch() / "two.mesh";
  write_file(p, "mesh2d 4 2\n1 1\n0 0\n1 0\n0 1\n1 2 0\n3 0 1\n");
  const Mesh2D m = load_mesh(p.string());
  const Mesh2D s = structured_unit_square(1);
  CHECK(m.n_nodes() == s.n_nodes());
  CHECK(m.n_cells() == s.n_cells());
  CHECK(m.n_edges() == s.n_edges());
  std::set<std::pair<std::array<double, 2>, std::array<double, 2>>> em, es;
  for (const auto &[a, b] : m.edges())
  {
    em.insert(std::minmax(m.nodes()[a], m.nodes()[b]));
  }
  for (const auto &[a, b] : s.edges())
  {
    es.insert(std::minmax(s.nodes()[a], s.nodes()[b]));
  }
  CHECK(em == es);
  check_invariants(m);
}

TEST_CASE("clockwise cells are reoriented")
{
  const Mesh2D m = Mesh2D::FromCells({{0, 0}, {1, 0}, {0, 1}}, {{0, 2, 1}});
  CHECK(m.cell_areas()[0] == doctest::Approx(0.5));
  check_invariants(m);
}

TEST_CASE("malformed and invalid mesh files")
{
  const auto dir = scratch();
  write_file(dir / "degenerate.mesh", "mesh2d 3 1\n0 0\n1 0\n2 0\n0 1 2\n");
  CHECK_THROWS_AS(load_mesh((dir / "degenerate.mesh").string()), ValidationError);

  write_file(dir / "bad_header.mesh", "mesh 3 1\n");
  try
  {
    load_mesh((dir / "bad_header.mesh").string());
    FAIL("expected a parse error");
  }
  catch (const ParseError &e)
  {
    CHECK(e.line() == 1);
  }

  write_file(dir / "bad_coord.mesh", "mesh2d 3 1\n0 0\n1 x\n0 1\n0 1 2\n");
  try
  {
    load_mesh((dir / "bad_coord.mesh").string());
    FAIL("expected a parse error");
  }
  catch (const ParseError &e)
  {
    CHECK(e.line() == 3);
  }

  write_file(dir / "bad_index.mesh", "mesh2d 3 1\n0 0\n1 0\n0 1\n0 1 3\n");
  CHECK_THROWS_AS(load_mesh((dir / "bad_index.mesh").string()), ParseError);

  // Three triangles sharing one edge.
  write_file(dir / "nonmanifold.mesh",
             "mesh2d 5 3\n0 0\n1 0\n0.5 1\n0.5 -1\n0.5 2\n0 1 2\n1 0 3\n0 1 4\n");
  CHECK_THROWS_AS(load_mesh((dir / "nonmanifold.mesh").string()), ValidationError);
  CHECK_THROWS_AS(load_mesh((dir / "missing.mesh").string()), Error);
}

TEST_CASE("save and load round trip")
{
  const Mesh2D m = structured_unit_square(8);
  const auto p = scratch() / "rt.mesh";
  save_mesh(m, p.string());
  const Mesh2D r = load_mesh(p.string());
  CHECK(r.nodes() == m.nodes());
  CHECK(r.cells() == m.cells());
  CHECK(r.edges() == m.edges());
  CHECK(r.edge_cells() == m.edge_cells());
  CHECK(r.cell_signs() == m.cell_signs());
  CHECK(r.hash() == m.hash());
  CHECK(r.hash() != structured_unit_square(7).hash());
}

TEST_CASE("L-shaped unstructured mesh satisfies the invariants")
{
  // Unit square minus its upper-right quarter, fan-triangulated around an interior node.
  const Mesh2D m = Mesh2D::FromCells(
      {{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}, {0.3, 0.3}},
      {{0, 1, 6}, {1, 2, 6}, {2, 3, 6}, {3, 4, 6}, {4, 5, 6}, {5, 0, 6}});
  check_invariants(m);
  double area = 0.0;
  for (double a : m.cell_areas())
  {
    area += a;
  }
  CHECK(area == doctest::Approx(0.75));
}
