// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_FEM_HPP
#define CML_FEM_HPP

#include <functional>
#include <memory>
#include "cml/mesh.hpp"
#include "cml/numerics.hpp"

namespace cml
{

enum class Space
{
  RT0,  // one dof per edge: integrated normal flux along the global edge normal
  P0,   // one dof per cell: cell value
  P1    // one dof per node: nodal value
};

int space_dim(const Mesh2D &mesh, Space space);

// Coefficient vector tagged with the space it lives in.
struct DofField
{
  Space space;
  Vector values;
  std::shared_ptr<const Mesh2D> mesh;

  DofField(Space s, Vector v, std::shared_ptr<const Mesh2D> m);
};

//
// Discrete operators of the RT0 × P0 mixed method and the P1 → RT0 rotated gradient.
//
// With flux dofs defined as integrated normal fluxes, B is the signed cell/edge incidence
// matrix ((B q)_c = Σ_e sign(c,e) q_e = ∫_c div q) and Curl is the signed edge/node incidence
// (dof_e(∇⊥r) = r(head) - r(tail)), so B·Curl vanishes entry by entry.
//
struct OperatorSet
{
  std::shared_ptr<const Mesh2D> mesh;
  SparseMatrix B;     // n_cells × n_edges
  SparseMatrix Bt;    // transpose, cached
  SparseMatrix Mq;    // RT0 mass (unit coefficient)
  SparseMatrix Mp;    // P0 mass, diag(|c|)
  SparseMatrix M1;    // P1 mass
  SparseMatrix Curl;  // n_edges × n_nodes
  SparseMatrix Hdiv;  // Mq + Bᵀ Mp⁻¹ B, the H(div) quadratic form on RT0

  const Mesh2D &mesh_ref() const { return *mesh; }
};

OperatorSet assemble_operators(std::shared_ptr<const Mesh2D> mesh);
OperatorSet assemble_operators(const Mesh2D &mesh);

// RT0 mass with a piecewise-constant scalar coefficient (one weight per cell).
SparseMatrix assemble_flux_mass(const Mesh2D &mesh, const std::vector<double> &cell_weights);

// Local RT0 basis function of cell c, local edge k, evaluated at x (global orientation).
Point2 rt0_basis(const Mesh2D &mesh, int c, int k, const Point2 &x);
// Evaluates an RT0 field at a point of cell c.
Point2 rt0_eval(const Mesh2D &mesh, const Vector &q, int c, const Point2 &x);
// |q| at each cell centroid.
std::vector<double> rt0_centroid_magnitude(const Mesh2D &mesh, const Vector &q);

using ScalarFn = std::function<double(const Point2 &)>;
using VectorFn = std::function<Point2(const Point2 &)>;

// (∫_c f dx)_c with the 3-point edge-midpoint rule.
Vector project_source(const Mesh2D &mesh, const ScalarFn &f);

// (∫_Ω g·v dx − ∮_∂Ω p_bc v·ν ds)_v over the RT0 basis: pressure Dirichlet data imposed
// naturally on the whole boundary.
Vector assemble_rhs_g(const Mesh2D &mesh, const VectorFn &g, const ScalarFn &p_bc);

// RT0 interpolant: dof_e = ∫_e v·ν_e ds (3-point Gauss on each edge).
Vector interpolate_rt0(const Mesh2D &mesh, const VectorFn &v);

// P0 interpolant by centroid values.
Vector interpolate_p0(const Mesh2D &mesh, const ScalarFn &f);

struct FluxNorms
{
  double l2;
  double hdiv;
};

// L2 = sqrt(qᵀ Mq q); H(div) adds Σ_c |c| d_c² with d_c = (B q)_c / |c|.
FluxNorms norms(const OperatorSet &ops, const Vector &q);
FluxNorms norms(const OperatorSet &ops, const DofField &q);

// L2 norm of a P0 field.
double pressure_l2(const OperatorSet &ops, const Vector &p);

}  // namespace cml

#endif  // CML_FEM_HPP
