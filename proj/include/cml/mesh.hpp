// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_MESH_HPP
#define CML_MESH_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cml
{

using Point2 = std::array<double, 2>;

//
// Conforming triangulation of a planar polygonal domain with the connectivity needed by
// RT0/P0/P1 assembly and by the cell-adjacency graph of the spanning-tree solver.
//
// Orientation conventions:
//   - cells are stored counter-clockwise (positive signed area);
//   - local edge k of a cell is the edge opposite local vertex k;
//   - each edge carries one global unit normal, pointing from the lower-indexed incident
//     cell to the higher-indexed one, or outward on the boundary;
//   - cell_signs[c][k] = +1 iff that global normal points out of cell c.
//
// Immutable after construction.
//
class Mesh2D
{
public:
  // Derives edges, incidences and geometric data from node coordinates and triangles, then
  // validates all invariants. Clockwise triangles are reoriented; degenerate ones are
  // rejected.
  static Mesh2D FromCells(std::vector<Point2> nodes, std::vector<std::array<int, 3>> cells);

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  int n_edges() const { return static_cast<int>(edges_.size()); }

  const std::vector<Point2> &nodes() const { return nodes_; }
  const std::vector<std::array<int, 3>> &cells() const { return cells_; }
  // Node pair (lower index first).
  const std::vector<std::array<int, 2>> &edges() const { return edges_; }
  const std::vector<Point2> &edge_normals() const { return edge_normals_; }
  // Incident cells; second entry is -1 on the boundary.
  const std::vector<std::array<int, 2>> &edge_cells() const { return edge_cells_; }
  const std::vector<std::array<int, 3>> &cell_edges() const { return cell_edges_; }
  const std::vector<std::array<int, 3>> &cell_signs() const { return cell_signs_; }
  const std::vector<int> &boundary_edges() const { return boundary_edges_; }
  const std::vector<double> &edge_lengths() const { return edge_lengths_; }
  const std::vector<double> &cell_areas() const { return cell_areas_; }

  bool is_boundary_edge(int e) const { return edge_cells_[e][1] < 0; }
  Point2 edge_midpoint(int e) const;
  Point2 cell_centroid(int c) const;
  // Sign of edge e relative to cell c (0 if not incident).
  int incidence(int c, int e) const;

  // Content hash over coordinates and cell lists.
  std::uint64_t hash() const;

  // Re-checks every structural invariant; throws ValidationError naming the first failure.
  void Validate() const;

private:
  std::vector<Point2> nodes_;
  std::vector<std::array<int, 3>> cells_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<Point2> edge_normals_;
  std::vector<std::array<int, 2>> edge_cells_;
  std::vector<std::array<int, 3>> cell_edges_;
  std::vector<std::array<int, 3>> cell_signs_;
  std::vector<int> boundary_edges_;
  std::vector<double> edge_lengths_;
  std::vector<double> cell_areas_;
};

// Unit square split into n×n squares, each cut along its lower-left to upper-right diagonal:
// (n+1)² nodes, 2n² cells, 3n² + 2n edges.
Mesh2D structured_unit_square(int n);

// Text format: "mesh2d <n_nodes> <n_cells>", then one "x y" line per node, then one "i j k"
// line per cell (0-based). Connectivity is never serialized.
Mesh2D load_mesh(const std::string &path);
void save_mesh(const Mesh2D &mesh, const std::string &path);

}  // namespace cml

#endif  // CML_MESH_HPP
