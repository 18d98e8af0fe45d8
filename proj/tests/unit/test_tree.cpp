// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <set>
#include "cml/error.hpp"
#include "cml/fom.hpp"
#include "cml/tree.hpp"
#include "doctest.h"

using namespace cml;

namespace
{

double inf_norm(const Vector &v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vector random_vector(Rng &rng, int n)
{
  Vector v(n);
  for (int i = 0; i < n; i++)
  {
    v[i] = rng.Normal();
  }
  return v;
}

Vector areas(const Mesh2D &m)
{
  return Eigen::Map<const Vector>(m.cell_areas().data(), m.n_cells());
}

// Union-find check that J minus the root forms a spanning tree of the cell-adjacency graph.
bool spans(const Mesh2D &m, const TreeSolver &t)
{
  std::vector<int> parent(m.n_cells());
  for (int i = 0; i < m.n_cells(); i++)
  {
    parent[i] = i;
  }
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  int merges = 0;
  for (int e : t.tree_edges())
  {
    if (e == t.root_edge())
    {
      continue;
    }
    const auto [a, b] = m.edge_cells()[e];
    if (b < 0 || find(a) == find(b))
    {
      return false;
    }
    parent[find(a)] = find(b);
    merges++;
  }
  return merges == m.n_cells() - 1;
}

}  // namespace

TEST_CASE("single triangle")
{
  const auto ops = assemble_operators(Mesh2D::FromCells({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}));
  const TreeSolver t = TreeSolver::Build(ops);
  REQUIRE(t.tree_edges().size() == 1u);
  CHECK(t.tree_edges()[0] == t.root_edge());
  CHECK(std::abs(t.reduced_matrix().coeff(0, 0)) == 1.0);
  Vector f(1);
  f << 0.7;
  const Vector q = t.Apply(f);
  for (int e = 0; e < 3; e++)
  {
    CHECK(std::abs(q[e]) == doctest::Approx(e == t.root_edge() ? 0.7 : 0.0));
  }
  CHECK(inf_norm(ops.B.Mult(q) - f) == 0.0);
}

TEST_CASE("reduced matrix is triangular under the elimination order")
{
  for (int n : {2, 7})
  {
    const auto ops = assemble_operators(structured_unit_square(n));
    const TreeSolver t = TreeSolver::Build(ops);
    const int nc = ops.mesh->n_cells();
    CHECK(static_cast<int>(t.tree_edges().size()) == nc);
    CHECK(spans(*ops.mesh, t));
    const auto &ord = t.elimination_order();
    const Eigen::MatrixXd T = t.reduced_matrix().ToDense();
    Eigen::MatrixXd P(nc, nc);
    for (int i = 0; i < nc; i++)
    {
      for (int j = 0; j < nc; j++)
      {
        P(i, j) = T(ord.rows[i], ord.cols[j]);
      }
    }
    CHECK(P.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < nc; i++)
    {
      CHECK(std::abs(P(i, i)) == 1.0);
    }
    // The root cell is eliminated last.
    CHECK(ord.rows.back() == t.bfs_order().front());
  }
}

TEST_CASE("build cost is linear in the mesh size")
{
  std::vector<double> ratio;
  for (int n : {8, 16, 32})
  {
    const auto ops = assemble_operators(structured_unit_square(n));
    const TreeSolver t = TreeSolver::Build(ops);
    ratio.push_back(static_cast<double>(t.build_operations()) /
                    (ops.mesh->n_cells() + ops.mesh->n_edges()));
  }
  CHECK(ratio[2] <= 1.1 * ratio[0]);
  CHECK(ratio[2] < 10.0);
}

TEST_CASE("S_I is a right inverse of B")
{
  const auto ops = assemble_operators(structured_unit_square(8));
  const TreeSolver t = TreeSolver::Build(ops);
  CHECK(inf_norm(t.Apply(Vector(Vector::Zero(ops.mesh->n_cells())))) == 0.0);
  const Vector f = areas(*ops.mesh);
  const Vector q = t.Apply(f);
  CHECK(inf_norm(ops.B.Mult(q) - f) <= 1e-13);
  // Support restricted to tree edges.
  const std::set<int> J(t.tree_edges().begin(), t.tree_edges().end());
  for (int e = 0; e < q.size(); e++)
  {
    if (!J.count(e))
    {
      CHECK(q[e] == 0.0);
    }
  }
  Rng rng(1);
  for (int k = 0; k < 100; k++)
  {
    const Vector g = random_vector(rng, ops.mesh->n_cells());
    CHECK(inf_norm(ops.B.Mult(t.Apply(g)) - g) <= 1e-12 * (1.0 + inf_norm(g)));
  }
  const Vector f1 = random_vector(rng, ops.mesh->n_cells()), f2 = random_vector(rng, ops.mesh->n_cells());
  CHECK(inf_norm(t.Apply(Vector(2.0 * f1 - 3.0 * f2)) - (2.0 * t.Apply(f1) - 3.0 * t.Apply(f2))) <= 1e-12);
}

TEST_CASE("adjoint identity")
{
  const auto ops = assemble_operators(structured_unit_square(6));
  Rng rng(2);
  const AveragedSolver avg = AveragedSolver::Build(ops, rng, 4);
  const TreeSolver &t = avg.trees()[1];
  CHECK(inf_norm(t.ApplyAdjoint(Vector(Vector::Zero(ops.mesh->n_edges())))) == 0.0);
  for (int k = 0; k < 20; k++)
  {
    const Vector f = random_vector(rng, ops.mesh->n_cells()), r = random_vector(rng, ops.mesh->n_edges());
    const double lhs = t.Apply(f).dot(r), rhs = f.dot(t.ApplyAdjoint(r));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));
    const double alhs = avg.Apply(f).dot(r), arhs = f.dot(avg.ApplyAdjoint(r));
    CHECK(std::abs(alhs - arhs) <= 1e-12 * (1.0 + std::abs(alhs)));
  }
}

TEST_CASE("projection and kernel laws")
{
  const auto ops = assemble_operators(structured_unit_square(8));
  const TreeSolver t = TreeSolver::Build(ops);
  auto P = [&](const Vector &x) { return Vector(x - t.Apply(ops.B.Mult(x))); };
  Rng rng(3);
  for (int k = 0; k < 20; k++)
  {
    const Vector x = random_vector(rng, ops.mesh->n_edges());
    const Vector px = P(x);
    CHECK(inf_norm(P(px) - px) <= 1e-12 * (1.0 + inf_norm(px)));
    CHECK(inf_norm(P(t.Apply(ops.B.Mult(x)))) <= 1e-12 * (1.0 + inf_norm(x)));
    CHECK(inf_norm(ops.B.Mult(px)) <= 1e-12 * (1.0 + inf_norm(px)));
  }
}

TEST_CASE("averaged solver")
{
  const auto ops = assemble_operators(structured_unit_square(8));
  const Vector f = areas(*ops.mesh);
  Rng rng(4);
  const AveragedSolver one = AveragedSolver::Build(ops, rng, 1);
  const TreeSolver same = TreeSolver::Build(ops, one.recipes()[0].root_edge, one.recipes()[0].shuffle_seed);
  CHECK(one.Apply(f) == same.Apply(f));

  const AveragedSolver ten = AveragedSolver::Build(ops, rng, 10);
  CHECK(ten.n_trees() == 10);
  std::set<int> roots;
  for (const auto &r : ten.recipes())
  {
    roots.insert(r.root_edge);
    CHECK(ops.mesh->is_boundary_edge(r.root_edge));
  }
  CHECK(roots.size() == 10u);
  const Vector q = ten.Apply(f);
  CHECK(inf_norm(ops.B.Mult(q) - f) <= 1e-12 * (1.0 + inf_norm(f)));
  auto support = [](const Vector &v) { return (v.array() != 0.0).count(); };
  for (const auto &t : ten.trees())
  {
    CHECK(support(q) >= support(t.Apply(f)));
  }
  CHECK(support(q) > support(ten.trees()[0].Apply(f)));

  const Vector half = 0.5 * ten.trees()[0].Apply(f) + 0.5 * ten.trees()[1].Apply(f);
  CHECK(inf_norm(ops.B.Mult(half) - f) <= 1e-13);

  // Block application agrees with column-wise application.
  Eigen::MatrixXd F(ops.mesh->n_cells(), 3);
  for (int j = 0; j < 3; j++)
  {
    F.col(j) = random_vector(rng, ops.mesh->n_cells());
  }
  const Eigen::MatrixXd Q = ten.Apply(F);
  Eigen::MatrixXd R(ops.mesh->n_edges(), 3);
  for (int j = 0; j < 3; j++)
  {
    R.col(j) = random_vector(rng, ops.mesh->n_edges());
  }
  const Eigen::MatrixXd P = ten.ApplyAdjoint(R);
  for (int j = 0; j < 3; j++)
  {
    CHECK(inf_norm(Q.col(j) - ten.Apply(Vector(F.col(j)))) <= 1e-14);
    CHECK(inf_norm(P.col(j) - ten.ApplyAdjoint(Vector(R.col(j)))) <= 1e-14);
  }
  CHECK_THROWS_AS(AveragedSolver::Build(ops, rng, 0), InvalidArgument);
}

TEST_CASE("more trees than boundary edges reuses roots with new traversal seeds")
{
  const auto ops = assemble_operators(structured_unit_square(1));  // 4 boundary edges
  Rng rng(5);
  const AveragedSolver s = AveragedSolver::Build(ops, rng, 6);
  CHECK(s.n_trees() == 6);
  std::set<std::pair<int, std::uint64_t>> ids;
  for (const auto &r : s.recipes())
  {
    ids.insert({r.root_edge, r.shuffle_seed.value_or(~0ull)});
  }
  CHECK(ids.size() == 6u);
  Vector f(2);
  f << 1.0, -2.0;
  CHECK(inf_norm(ops.B.Mult(s.Apply(f)) - f) <= 1e-12);
  const AveragedSolver r = AveragedSolver::FromRecipes(ops, s.recipes());
  CHECK(r.Apply(f) == s.Apply(f));
}

TEST_CASE("invalid roots and disconnected meshes")
{
  const auto ops = assemble_operators(structured_unit_square(2));
  int interior = -1;
  for (int e = 0; e < ops.mesh->n_edges(); e++)
  {
    if (!ops.mesh->is_boundary_edge(e))
    {
      interior = e;
      break;
    }
  }
  CHECK_THROWS_AS(TreeSolver::Build(ops, interior), InvalidArgument);

  // A disconnected domain fails the Euler relation, so no tree is ever built on it.
  CHECK_THROWS_AS(Mesh2D::FromCells({{0, 0}, {1, 0}, {0, 1}, {2, 0}, {3, 0}, {2, 1}},
                                    {{0, 1, 2}, {3, 4, 5}}),
                  ValidationError);
}

TEST_CASE("tree files round trip and detect tampering")
{
  const auto ops = assemble_operators(structured_unit_square(4));
  Rng rng(6);
  const AveragedSolver s = AveragedSolver::Build(ops, rng, 3);
  const auto dir = std::filesystem::temp_directory_path() / "cml_test_trees";
  std::filesystem::remove_all(dir);
  write_trees(dir.string(), s);
  verify_trees(dir.string(), s);
  Rng other(7);
  CHECK_THROWS_AS(verify_trees(dir.string(), AveragedSolver::Build(ops, other, 3)), ValidationError);
  std::filesystem::remove_all(dir);
}
