// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_TREE_HPP
#define CML_TREE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>
#include "cml/fem.hpp"

namespace cml
{

//
// Spanning-tree right-inverse of the divergence, S_I = Πᵀ (B Πᵀ)⁻¹.
//
// The cell-adjacency graph (cells as vertices, interior edges as graph edges) is traversed
// breadth-first from the cell behind a boundary root edge j₀. Every cell c is assigned one
// flux dof J[c]: j₀ for the root cell, the edge to its BFS parent otherwise. B Πᵀ is then
// lower triangular when rows and columns are both taken in reverse discovery order, so
// S_I f is obtained by eliminating from the leaves towards the root in O(n_cells).
//
class TreeSolver
{
public:
  // root_edge must be a boundary edge. When shuffle_seed is set, the neighbour visit order of
  // each cell is shuffled (otherwise ascending cell index).
  static TreeSolver Build(const OperatorSet &ops, int root_edge,
                          std::optional<std::uint64_t> shuffle_seed = std::nullopt);
  // Deterministic default: first boundary edge, ascending visit order.
  static TreeSolver Build(const OperatorSet &ops);

  // q_f with B q_f = f, supported on the edges of J.
  Vector Apply(const Vector &f) const;
  // S_Iᵀ r = (B Πᵀ)⁻ᵀ Π r.
  Vector ApplyAdjoint(const Vector &r) const;
  // Column-wise versions.
  Eigen::MatrixXd Apply(const Eigen::MatrixXd &F) const;
  Eigen::MatrixXd ApplyAdjoint(const Eigen::MatrixXd &R) const;

  int root_edge() const { return root_edge_; }
  std::optional<std::uint64_t> shuffle_seed() const { return shuffle_seed_; }
  // J indexed by cell.
  const std::vector<int> &tree_edges() const { return tree_edges_; }
  const std::vector<int> &bfs_order() const { return bfs_order_; }
  // B Πᵀ with column c carrying edge J[c].
  const SparseMatrix &reduced_matrix() const { return T_; }
  const TriangularOrder &elimination_order() const { return order_; }
  // Adjacency entries scanned while building; linear in cells + edges.
  std::size_t build_operations() const { return build_ops_; }

  int n_cells() const { return static_cast<int>(tree_edges_.size()); }
  int n_edges() const { return n_edges_; }

private:
  int root_edge_ = -1;
  std::optional<std::uint64_t> shuffle_seed_;
  int n_edges_ = 0;
  std::vector<int> tree_edges_;
  std::vector<int> bfs_order_;
  SparseMatrix T_, Tt_;
  TriangularOrder order_, adjoint_order_;
  std::size_t build_ops_ = 0;
};

// One tree's identity: enough to rebuild it deterministically.
struct TreeRecipe
{
  int root_edge;
  std::optional<std::uint64_t> shuffle_seed;
};

//
// Average of N_t spanning-tree right-inverses; still a right-inverse since the set
// {S : B S = I} is convex.
//
class AveragedSolver
{
public:
  // Roots are drawn without replacement from the boundary edges. When the boundary has fewer
  // than N_t edges, roots are reused with distinct traversal shuffle seeds.
  static AveragedSolver Build(const OperatorSet &ops, Rng &rng, int n_trees);
  static AveragedSolver FromRecipes(const OperatorSet &ops, const std::vector<TreeRecipe> &r);
  static AveragedSolver Single(TreeSolver tree);

  Vector Apply(const Vector &f) const;
  Vector ApplyAdjoint(const Vector &r) const;
  // Adjoint of the first tree only.
  Vector ApplyAdjointFirst(const Vector &r) const;

  // Column-wise application to a block.
  Eigen::MatrixXd Apply(const Eigen::MatrixXd &F) const;
  Eigen::MatrixXd ApplyAdjoint(const Eigen::MatrixXd &R) const;

  int n_trees() const { return static_cast<int>(trees_.size()); }
  const std::vector<TreeSolver> &trees() const { return trees_; }
  std::vector<TreeRecipe> recipes() const;

private:
  std::vector<TreeSolver> trees_;
};

// Writes each tree as a 3 × n_cells dense matrix (row 0: J by cell, row 1: elimination
// order, row 2: root edge repeated) named tree_<i>.
void write_trees(const std::string &dir, const AveragedSolver &solver);
// Checks that the stored trees match the given solver.
void verify_trees(const std::string &dir, const AveragedSolver &solver);

}  // namespace cml

#endif  // CML_TREE_HPP
