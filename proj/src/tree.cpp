// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/tree.hpp"

#include <algorithm>
#include <filesystem>
#include <queue>
#include "cml/error.hpp"

namespace cml
{

TreeSolver TreeSolver::Build(const OperatorSet &ops, int root_edge,
                             std::optional<std::uint64_t> shuffle_seed)
{
  const Mesh2D &mesh = *ops.mesh;
  const int nc = mesh.n_cells();
  if (root_edge < 0 || root_edge >= mesh.n_edges() || !mesh.is_boundary_edge(root_edge))
  {
    throw InvalidArgument("tree root must be a boundary edge (got " + std::to_string(root_edge) +
                          ")");
  }
  TreeSolver t;
  t.root_edge_ = root_edge;
  t.shuffle_seed_ = shuffle_seed;
  t.n_edges_ = mesh.n_edges();
  t.tree_edges_.assign(nc, -1);
  t.bfs_order_.reserve(nc);

  std::optional<Rng> rng;
  if (shuffle_seed)
  {
    rng.emplace(*shuffle_seed);
  }
  const int root_cell = mesh.edge_cells()[root_edge][0];
  std::vector<char> visited(nc, 0);
  std::queue<int> queue;
  visited[root_cell] = 1;
  t.tree_edges_[root_cell] = root_edge;
  queue.push(root_cell);
  std::vector<std::pair<int, int>> nbrs;  // (cell, edge)
  while (!queue.empty())
  {
    const int c = queue.front();
    queue.pop();
    t.bfs_order_.push_back(c);
    nbrs.clear();
    for (int k = 0; k < 3; k++)
    {
      const int e = mesh.cell_edges()[c][k];
      const auto &ec = mesh.edge_cells()[e];
      const int other = ec[0] == c ? ec[1] : ec[0];
      t.build_ops_++;
      if (other >= 0)
      {
        nbrs.emplace_back(other, e);
      }
    }
    std::sort(nbrs.begin(), nbrs.end());
    if (rng)
    {
      rng->Shuffle(nbrs);
    }
    for (const auto &[other, e] : nbrs)
    {
      t.build_ops_++;
      if (!visited[other])
      {
        visited[other] = 1;
        t.tree_edges_[other] = e;
        queue.push(other);
      }
    }
  }
  if (static_cast<int>(t.bfs_order_.size()) != nc)
  {
    throw StructuralError("cell-adjacency graph is disconnected: BFS reached " +
                          std::to_string(t.bfs_order_.size()) + " of " + std::to_string(nc) +
                          " cells");
  }

  // T = B Πᵀ: T[c][k] = B[c][J[k]]. Each J[k] touches at most two cells.
  std::vector<Triplet> trip;
  trip.reserve(2 * nc);
  for (int k = 0; k < nc; k++)
  {
    const int e = t.tree_edges_[k];
    for (int side = 0; side < 2; side++)
    {
      const int c = mesh.edge_cells()[e][side];
      t.build_ops_++;
      if (c >= 0)
      {
        trip.push_back({c, k, static_cast<double>(mesh.incidence(c, e))});
      }
    }
  }
  t.T_ = SparseMatrix::FromTriplets(nc, nc, std::move(trip));
  t.Tt_ = t.T_.Transpose();
  t.order_.rows.assign(t.bfs_order_.rbegin(), t.bfs_order_.rend());
  t.order_.cols = t.order_.rows;
  t.adjoint_order_.rows = t.bfs_order_;
  t.adjoint_order_.cols = t.bfs_order_;
  return t;
}

TreeSolver TreeSolver::Build(const OperatorSet &ops)
{
  if (ops.mesh->boundary_edges().empty())
  {
    throw StructuralError("mesh has no boundary edge to root the tree");
  }
  return Build(ops, ops.mesh->boundary_edges().front());
}

Vector TreeSolver::Apply(const Vector &f) const
{
  if (f.size() != n_cells())
  {
    throw InvalidArgument("S_I: expected a vector of length n_cells");
  }
  const Vector x = solve_permuted_triangular(T_, order_, f);
  Vector q = Vector::Zero(n_edges_);
  for (int c = 0; c < n_cells(); c++)
  {
    q[tree_edges_[c]] = x[c];
  }
  return q;
}

Vector TreeSolver::ApplyAdjoint(const Vector &r) const
{
  if (r.size() != n_edges_)
  {
    throw InvalidArgument("S_I adjoint: expected a vector of length n_edges");
  }
  Vector pr(n_cells());
  for (int c = 0; c < n_cells(); c++)
  {
    pr[c] = r[tree_edges_[c]];
  }
  return solve_permuted_triangular(Tt_, adjoint_order_, pr);
}

Eigen::MatrixXd TreeSolver::Apply(const Eigen::MatrixXd &F) const
{
  if (F.rows() != n_cells())
  {
    throw InvalidArgument("S_I: expected blocks with n_cells rows");
  }
  const Eigen::MatrixXd X = solve_permuted_triangular(T_, order_, F);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n_edges_, F.cols());
  for (Eigen::Index j = 0; j < F.cols(); j++)
  {
    for (int c = 0; c < n_cells(); c++)
    {
      Q(tree_edges_[c], j) = X(c, j);
    }
  }
  return Q;
}

Eigen::MatrixXd TreeSolver::ApplyAdjoint(const Eigen::MatrixXd &R) const
{
  if (R.rows() != n_edges_)
  {
    throw InvalidArgument("S_I adjoint: expected blocks with n_edges rows");
  }
  Eigen::MatrixXd PR(n_cells(), R.cols());
  for (Eigen::Index j = 0; j < R.cols(); j++)
  {
    for (int c = 0; c < n_cells(); c++)
    {
      PR(c, j) = R(tree_edges_[c], j);
    }
  }
  return solve_permuted_triangular(Tt_, adjoint_order_, PR);
}

AveragedSolver AveragedSolver::Build(const OperatorSet &ops, Rng &rng, int n_trees)
{
  if (n_trees < 1)
  {
    throw InvalidArgument("averaged tree solver needs at least one tree");
  }
  std::vector<int> roots = ops.mesh->boundary_edges();
  if (roots.empty())
  {
    throw StructuralError("mesh has no boundary edge to root the trees");
  }
  rng.Shuffle(roots);
  std::vector<TreeRecipe> recipes;
  for (int i = 0; i < n_trees; i++)
  {
    const int nb = static_cast<int>(roots.size());
    TreeRecipe r{roots[i % nb], std::nullopt};
    if (i >= nb)
    {
      r.shuffle_seed = rng.NextU64();
    }
    recipes.push_back(r);
  }
  return FromRecipes(ops, recipes);
}

AveragedSolver AveragedSolver::FromRecipes(const OperatorSet &ops,
                                           const std::vector<TreeRecipe> &recipes)
{
  if (recipes.empty())
  {
    throw InvalidArgument("averaged tree solver needs at least one tree");
  }
  AveragedSolver s;
  for (const auto &r : recipes)
  {
    s.trees_.push_back(TreeSolver::Build(ops, r.root_edge, r.shuffle_seed));
  }
  return s;
}

AveragedSolver AveragedSolver::Single(TreeSolver tree)
{
  AveragedSolver s;
  s.trees_.push_back(std::move(tree));
  return s;
}

std::vector<TreeRecipe> AveragedSolver::recipes() const
{
  std::vector<TreeRecipe> r;
  for (const auto &t : trees_)
  {
    r.push_back({t.root_edge(), t.shuffle_seed()});
  }
  return r;
}

Vector AveragedSolver::Apply(const Vector &f) const
{
  Vector q = trees_.front().Apply(f);
  for (std::size_t i = 1; i < trees_.size(); i++)
  {
    q += trees_[i].Apply(f);
  }
  return q / static_cast<double>(trees_.size());
}

Vector AveragedSolver::ApplyAdjoint(const Vector &r) const
{
  Vector p = trees_.front().ApplyAdjoint(r);
  for (std::size_t i = 1; i < trees_.size(); i++)
  {
    p += trees_[i].ApplyAdjoint(r);
  }
  return p / static_cast<double>(trees_.size());
}

Vector AveragedSolver::ApplyAdjointFirst(const Vector &r) const
{
  return trees_.front().ApplyAdjoint(r);
}

Eigen::MatrixXd AveragedSolver::Apply(const Eigen::MatrixXd &F) const
{
  Eigen::MatrixXd Q = trees_.front().Apply(F);
  for (std::size_t i = 1; i < trees_.size(); i++)
  {
    Q += trees_[i].Apply(F);
  }
  return Q / static_cast<double>(trees_.size());
}

Eigen::MatrixXd AveragedSolver::ApplyAdjoint(const Eigen::MatrixXd &R) const
{
  Eigen::MatrixXd P = trees_.front().ApplyAdjoint(R);
  for (std::size_t i = 1; i < trees_.size(); i++)
  {
    P += trees_[i].ApplyAdjoint(R);
  }
  return P / static_cast<double>(trees_.size());
}

void write_trees(const std::string &dir, const AveragedSolver &solver)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int i = 0; i < solver.n_trees(); i++)
  {
    const auto &t = solver.trees()[i];
    DenseMatrix D(3, t.n_cells());
    for (int c = 0; c < t.n_cells(); c++)
    {
      D(0, c) = t.tree_edges()[c];
      D(1, c) = t.elimination_order().rows[c];
      D(2, c) = t.root_edge();
    }
    write_dense((fs::path(dir) / ("tree_" + std::to_string(i))).string(), D);
  }
}

void verify_trees(const std::string &dir, const AveragedSolver &solver)
{
  namespace fs = std::filesystem;
  for (int i = 0; i < solver.n_trees(); i++)
  {
    const auto &t = solver.trees()[i];
    const DenseMatrix D = read_dense((fs::path(dir) / ("tree_" + std::to_string(i))).string());
    bool ok = D.rows() == 3 && D.cols() == t.n_cells();
    for (int c = 0; ok && c < t.n_cells(); c++)
    {
      ok = D(0, c) == t.tree_edges()[c] && D(1, c) == t.elimination_order().rows[c] &&
           D(2, c) == t.root_edge();
    }
    if (!ok)
    {
      throw ValidationError("stored spanning tree " + std::to_string(i) +
                            " does not match the rebuilt tree");
    }
  }
}

}  // namespace cml
