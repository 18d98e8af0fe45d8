// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/fem.hpp"

#include <cmath>
#include "cml/error.hpp"

namespace cml
{

namespace
{

// 3-point Gauss–Legendre on [0, 1].
constexpr double kGaussX[3] = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr double kGaussW[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

std::array<Point2, 3> cell_vertices(const Mesh2D &mesh, int c)
{
  const auto &t = mesh.cells()[c];
  return {mesh.nodes()[t[0]], mesh.nodes()[t[1]], mesh.nodes()[t[2]]};
}

std::array<Point2, 3> edge_midpoints(const std::array<Point2, 3> &v)
{
  return {Point2{0.5 * (v[1][0] + v[2][0]), 0.5 * (v[1][1] + v[2][1])},
          Point2{0.5 * (v[2][0] + v[0][0]), 0.5 * (v[2][1] + v[0][1])},
          Point2{0.5 * (v[0][0] + v[1][0]), 0.5 * (v[0][1] + v[1][1])}};
}

// Local RT0 mass of cell c (before applying the global signs): ∫(x - P_k)·(x - P_l) / (4|T|²).
std::array<std::array<double, 3>, 3> local_mass(const Mesh2D &mesh, int c)
{
  const auto v = cell_vertices(mesh, c);
  const auto mid = edge_midpoints(v);
  const double area = mesh.cell_areas()[c];
  std::array<std::array<double, 3>, 3> m{};
  for (int k = 0; k < 3; k++)
  {
    for (int l = 0; l < 3; l++)
    {
      double s = 0.0;
      for (const auto &x : mid)
      {
        s += (x[0] - v[k][0]) * (x[0] - v[l][0]) + (x[1] - v[k][1]) * (x[1] - v[l][1]);
      }
      m[k][l] = s * (area / 3.0) / (4.0 * area * area);
    }
  }
  return m;
}

}  // namespace

int space_dim(const Mesh2D &mesh, Space space)
{
  switch (space)
  {
    case Space::RT0:
      return mesh.n_edges();
    case Space::P0:
      return mesh.n_cells();
    case Space::P1:
      return mesh.n_nodes();
  }
  return 0;
}

DofField::DofField(Space s, Vector v, std::shared_ptr<const Mesh2D> m)
  : space(s), values(std::move(v)), mesh(std::move(m))
{
  if (!mesh || values.size() != space_dim(*mesh, space))
  {
    throw InvalidArgument("DofField: coefficient length does not match the space dimension");
  }
}

SparseMatrix assemble_flux_mass(const Mesh2D &mesh, const std::vector<double> &cell_weights)
{
  if (static_cast<int>(cell_weights.size()) != mesh.n_cells())
  {
    throw InvalidArgument("assemble_flux_mass: one weight per cell required");
  }
  std::vector<Triplet> t;
  t.reserve(9 * mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); c++)
  {
    const auto m = local_mass(mesh, c);
    const auto &e = mesh.cell_edges()[c];
    const auto &s = mesh.cell_signs()[c];
    for (int k = 0; k < 3; k++)
    {
      for (int l = 0; l < 3; l++)
      {
        t.push_back({e[k], e[l], cell_weights[c] * s[k] * s[l] * m[k][l]});
      }
    }
  }
  return SparseMatrix::FromTriplets(mesh.n_edges(), mesh.n_edges(), std::move(t));
}

OperatorSet assemble_operators(std::shared_ptr<const Mesh2D> mesh_ptr)
{
  const Mesh2D &mesh = *mesh_ptr;
  OperatorSet ops;
  ops.mesh = mesh_ptr;
  const int nc = mesh.n_cells(), ne = mesh.n_edges(), nn = mesh.n_nodes();

  std::vector<Triplet> tb;
  tb.reserve(3 * nc);
  for (int c = 0; c < nc; c++)
  {
    for (int k = 0; k < 3; k++)
    {
      tb.push_back({c, mesh.cell_edges()[c][k], static_cast<double>(mesh.cell_signs()[c][k])});
    }
  }
  ops.B = SparseMatrix::FromTriplets(nc, ne, std::move(tb));
  ops.Bt = ops.B.Transpose();

  ops.Mq = assemble_flux_mass(mesh, std::vector<double>(nc, 1.0));

  std::vector<Triplet> tp;
  for (int c = 0; c < nc; c++)
  {
    tp.push_back({c, c, mesh.cell_areas()[c]});
  }
  ops.Mp = SparseMatrix::FromTriplets(nc, nc, std::move(tp));

  std::vector<Triplet> t1;
  for (int c = 0; c < nc; c++)
  {
    const auto &t = mesh.cells()[c];
    const double a = mesh.cell_areas()[c];
    for (int k = 0; k < 3; k++)
    {
      for (int l = 0; l < 3; l++)
      {
        t1.push_back({t[k], t[l], a * (k == l ? 2.0 : 1.0) / 12.0});
      }
    }
  }
  ops.M1 = SparseMatrix::FromTriplets(nn, nn, std::move(t1));

  // dof_e(∇⊥r) = ∫_e ∇r · τ ds with τ = ν rotated by +90°, i.e. r(head) - r(tail).
  std::vector<Triplet> tc;
  tc.reserve(2 * ne);
  for (int e = 0; e < ne; e++)
  {
    const auto &nu = mesh.edge_normals()[e];
    const int a = mesh.edges()[e][0], b = mesh.edges()[e][1];
    const Point2 &pa = mesh.nodes()[a], &pb = mesh.nodes()[b];
    const double along = (pb[0] - pa[0]) * (-nu[1]) + (pb[1] - pa[1]) * nu[0];
    const int head = along > 0.0 ? b : a, tail = along > 0.0 ? a : b;
    tc.push_back({e, head, 1.0});
    tc.push_back({e, tail, -1.0});
  }
  ops.Curl = SparseMatrix::FromTriplets(ne, nn, std::move(tc));

  // Hdiv = Mq + Bᵀ diag(1/|c|) B.
  std::vector<Triplet> th;
  for (int i = 0; i < ops.Mq.rows(); i++)
  {
    for (int k = ops.Mq.row_ptr()[i]; k < ops.Mq.row_ptr()[i + 1]; k++)
    {
      th.push_back({i, ops.Mq.col_idx()[k], ops.Mq.values()[k]});
    }
  }
  for (int c = 0; c < nc; c++)
  {
    const double w = 1.0 / mesh.cell_areas()[c];
    for (int k = 0; k < 3; k++)
    {
      for (int l = 0; l < 3; l++)
      {
        th.push_back({mesh.cell_edges()[c][k], mesh.cell_edges()[c][l],
                      w * mesh.cell_signs()[c][k] * mesh.cell_signs()[c][l]});
      }
    }
  }
  ops.Hdiv = SparseMatrix::FromTriplets(ne, ne, std::move(th));
  return ops;
}

OperatorSet assemble_operators(const Mesh2D &mesh)
{
  return assemble_operators(std::make_shared<const Mesh2D>(mesh));
}

Point2 rt0_basis(const Mesh2D &mesh, int c, int k, const Point2 &x)
{
  const auto &t = mesh.cells()[c];
  const Point2 &p = mesh.nodes()[t[k]];
  const double w = mesh.cell_signs()[c][k] / (2.0 * mesh.cell_areas()[c]);
  return {w * (x[0] - p[0]), w * (x[1] - p[1])};
}

Point2 rt0_eval(const Mesh2D &mesh, const Vector &q, int c, const Point2 &x)
{
  Point2 v{0.0, 0.0};
  for (int k = 0; k < 3; k++)
  {
    const Point2 phi = rt0_basis(mesh, c, k, x);
    const double qe = q[mesh.cell_edges()[c][k]];
    v[0] += qe * phi[0];
    v[1] += qe * phi[1];
  }
  return v;
}

std::vector<double> rt0_centroid_magnitude(const Mesh2D &mesh, const Vector &q)
{
  std::vector<double> mag(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); c++)
  {
    const Point2 v = rt0_eval(mesh, q, c, mesh.cell_centroid(c));
    mag[c] = std::hypot(v[0], v[1]);
  }
  return mag;
}

Vector project_source(const Mesh2D &mesh, const ScalarFn &f)
{
  Vector out(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); c++)
  {
    const auto mid = edge_midpoints(cell_vertices(mesh, c));
    out[c] = mesh.cell_areas()[c] / 3.0 * (f(mid[0]) + f(mid[1]) + f(mid[2]));
  }
  return out;
}

Vector assemble_rhs_g(const Mesh2D &mesh, const VectorFn &g, const ScalarFn &p_bc)
{
  Vector rhs = Vector::Zero(mesh.n_edges());
  if (g)
  {
    for (int c = 0; c < mesh.n_cells(); c++)
    {
      const auto mid = edge_midpoints(cell_vertices(mesh, c));
      const double w = mesh.cell_areas()[c] / 3.0;
      for (const auto &x : mid)
      {
        const Point2 gx = g(x);
        for (int k = 0; k < 3; k++)
        {
          const Point2 phi = rt0_basis(mesh, c, k, x);
          rhs[mesh.cell_edges()[c][k]] += w * (gx[0] * phi[0] + gx[1] * phi[1]);
        }
      }
    }
  }
  if (p_bc)
  {
    // On a boundary edge the global basis has constant outward normal component 1/|e|.
    for (int e : mesh.boundary_edges())
    {
      const Point2 &a = mesh.nodes()[mesh.edges()[e][0]], &b = mesh.nodes()[mesh.edges()[e][1]];
      double mean = 0.0;
      for (int i = 0; i < 3; i++)
      {
        const double s = kGaussX[i];
        mean += kGaussW[i] * p_bc({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
      }
      rhs[e] -= mean;
    }
  }
  return rhs;
}

Vector interpolate_rt0(const Mesh2D &mesh, const VectorFn &v)
{
  Vector q(mesh.n_edges());
  for (int e = 0; e < mesh.n_edges(); e++)
  {
    const Point2 &a = mesh.nodes()[mesh.edges()[e][0]], &b = mesh.nodes()[mesh.edges()[e][1]];
    const auto &nu = mesh.edge_normals()[e];
    double s = 0.0;
    for (int i = 0; i < 3; i++)
    {
      const double t = kGaussX[i];
      const Point2 vx = v({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
      s += kGaussW[i] * (vx[0] * nu[0] + vx[1] * nu[1]);
    }
    q[e] = s * mesh.edge_lengths()[e];
  }
  return q;
}

Vector interpolate_p0(const Mesh2D &mesh, const ScalarFn &f)
{
  Vector p(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); c++)
  {
    p[c] = f(mesh.cell_centroid(c));
  }
  return p;
}

FluxNorms norms(const OperatorSet &ops, const Vector &q)
{
  const double l2sq = q.dot(ops.Mq.Mult(q));
  const Vector div = ops.B.Mult(q);
  double divsq = 0.0;
  const auto &areas = ops.mesh->cell_areas();
  for (int c = 0; c < div.size(); c++)
  {
    divsq += div[c] * div[c] / areas[c];
  }
  return {std::sqrt(std::max(l2sq, 0.0)), std::sqrt(std::max(l2sq, 0.0) + divsq)};
}

FluxNorms norms(const OperatorSet &ops, const DofField &q)
{
  if (q.space != Space::RT0)
  {
    throw InvalidArgument("norms: field is not in RT0");
  }
  return norms(ops, q.values);
}

double pressure_l2(const OperatorSet &ops, const Vector &p)
{
  return std::sqrt(p.dot(ops.Mp.Mult(p)));
}

}  // namespace cml
