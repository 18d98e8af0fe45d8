// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/mesh.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include "cml/error.hpp"
#include "cml/numerics.hpp"

namespace cml
{

namespace
{

double signed_area(const Point2 &a, const Point2 &b, const Point2 &c)
{
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

}  // namespace

Mesh2D Mesh2D::FromCells(std::vector<Point2> nodes, std::vector<std::array<int, 3>> cells)
{
  Mesh2D m;
  m.nodes_ = std::move(nodes);
  m.cells_ = std::move(cells);
  const int nn = m.n_nodes(), nc = m.n_cells();
  if (nc == 0)
  {
    throw ValidationError("mesh has no cells");
  }

  double scale = 0.0;
  for (const auto &p : m.nodes_)
  {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
    {
      throw ValidationError("non-finite node coordinate");
    }
    scale = std::max({scale, std::abs(p[0]), std::abs(p[1])});
  }

  m.cell_areas_.resize(nc);
  for (int c = 0; c < nc; c++)
  {
    auto &t = m.cells_[c];
    for (int v : t)
    {
      if (v < 0 || v >= nn)
      {
        throw ValidationError("cell " + std::to_string(c) + " references node " +
                              std::to_string(v) + " out of range");
      }
    }
    double a = signed_area(m.nodes_[t[0]], m.nodes_[t[1]], m.nodes_[t[2]]);
    if (!(std::abs(a) > 1e-14 * std::max(scale * scale, 1e-300)))
    {
      throw ValidationError("positive cell area: cell " + std::to_string(c) + " is degenerate");
    }
    if (a < 0.0)
    {
      std::swap(t[1], t[2]);
      a = -a;
    }
    m.cell_areas_[c] = a;
  }

  std::unordered_map<std::uint64_t, int> edge_id;
  edge_id.reserve(3 * nc);
  m.cell_edges_.resize(nc);
  m.cell_signs_.resize(nc);
  for (int c = 0; c < nc; c++)
  {
    const auto &t = m.cells_[c];
    for (int k = 0; k < 3; k++)
    {
      int a = t[(k + 1) % 3], b = t[(k + 2) % 3];
      if (a > b)
      {
        std::swap(a, b);
      }
      const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<unsigned>(b);
      auto [it, inserted] = edge_id.try_emplace(key, m.n_edges());
      const int e = it->second;
      if (inserted)
      {
        m.edges_.push_back({a, b});
        m.edge_cells_.push_back({c, -1});
      }
      else if (m.edge_cells_[e][1] < 0 && m.edge_cells_[e][0] != c)
      {
        m.edge_cells_[e][1] = c;
      }
      else
      {
        throw ValidationError("edge manifoldness: edge (" + std::to_string(a) + "," +
                              std::to_string(b) + ") is shared by more than two cells");
      }
      m.cell_edges_[c][k] = e;
    }
  }

  const int ne = m.n_edges();
  m.edge_lengths_.resize(ne);
  m.edge_normals_.resize(ne);
  for (int e = 0; e < ne; e++)
  {
    const Point2 &a = m.nodes_[m.edges_[e][0]], &b = m.nodes_[m.edges_[e][1]];
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len = std::hypot(dx, dy);
    m.edge_lengths_[e] = len;
    Point2 n{dy / len, -dx / len};
    // Orient out of the lower-indexed incident cell (cells were visited in index order, so
    // that is edge_cells_[e][0]).
    const int c0 = m.edge_cells_[e][0];
    const auto &t = m.cells_[c0];
    int opp = -1;
    for (int k = 0; k < 3; k++)
    {
      if (m.cell_edges_[c0][k] == e)
      {
        opp = t[k];
      }
    }
    const Point2 &o = m.nodes_[opp];
    if ((o[0] - a[0]) * n[0] + (o[1] - a[1]) * n[1] > 0.0)
    {
      n = {-n[0], -n[1]};
    }
    m.edge_normals_[e] = n;
    if (m.edge_cells_[e][1] < 0)
    {
      m.boundary_edges_.push_back(e);
    }
  }
  for (int c = 0; c < nc; c++)
  {
    for (int k = 0; k < 3; k++)
    {
      m.cell_signs_[c][k] = (m.edge_cells_[m.cell_edges_[c][k]][0] == c) ? 1 : -1;
    }
  }

  m.Validate();
  return m;
}

void Mesh2D::Validate() const
{
  const int nc = n_cells(), ne = n_edges();
  for (int c = 0; c < nc; c++)
  {
    const auto &t = cells_[c];
    if (!(signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]) > 0.0))
    {
      throw ValidationError("positive cell area: cell " + std::to_string(c));
    }
  }
  std::vector<int> seen(ne, 0), sign_product(ne, 1);
  for (int c = 0; c < nc; c++)
  {
    for (int k = 0; k < 3; k++)
    {
      seen[cell_edges_[c][k]]++;
      sign_product[cell_edges_[c][k]] *= cell_signs_[c][k];
    }
  }
  for (int e = 0; e < ne; e++)
  {
    const bool boundary = edge_cells_[e][1] < 0;
    if (seen[e] != (boundary ? 1 : 2))
    {
      throw ValidationError("edge incidence count: edge " + std::to_string(e));
    }
    if (!boundary && sign_product[e] != -1)
    {
      throw ValidationError("opposite incidence signs: edge " + std::to_string(e));
    }
    const auto &n = edge_normals_[e];
    const Point2 &a = nodes_[edges_[e][0]], &b = nodes_[edges_[e][1]];
    const double dot = n[0] * (b[0] - a[0]) + n[1] * (b[1] - a[1]);
    if (std::abs(std::hypot(n[0], n[1]) - 1.0) > 1e-12 ||
        std::abs(dot) > 1e-12 * edge_lengths_[e])
    {
      throw ValidationError("unit edge normal: edge " + std::to_string(e));
    }
  }
  if (n_nodes() != ne - (nc - 1))
  {
    throw ValidationError("euler relation: nodes (" + std::to_string(n_nodes()) +
                          ") != edges - (cells - 1) (" + std::to_string(ne - (nc - 1)) + ")");
  }
}

Point2 Mesh2D::edge_midpoint(int e) const
{
  const Point2 &a = nodes_[edges_[e][0]], &b = nodes_[edges_[e][1]];
  return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
}

Point2 Mesh2D::cell_centroid(int c) const
{
  const auto &t = cells_[c];
  return {(nodes_[t[0]][0] + nodes_[t[1]][0] + nodes_[t[2]][0]) / 3.0,
          (nodes_[t[0]][1] + nodes_[t[1]][1] + nodes_[t[2]][1]) / 3.0};
}

int Mesh2D::incidence(int c, int e) const
{
  for (int k = 0; k < 3; k++)
  {
    if (cell_edges_[c][k] == e)
    {
      return cell_signs_[c][k];
    }
  }
  return 0;
}

std::uint64_t Mesh2D::hash() const
{
  std::uint64_t h = fnv1a(std::as_bytes(std::span(nodes_)));
  return fnv1a(std::as_bytes(std::span(cells_)), h);
}

Mesh2D structured_unit_square(int n)
{
  if (n < 1)
  {
    throw InvalidArgument("structured_unit_square: n must be >= 1");
  }
  std::vector<Point2> nodes;
  nodes.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; j++)
  {
    for (int i = 0; i <= n; i++)
    {
      nodes.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
    }
  }
  std::vector<std::array<int, 3>> cells;
  cells.reserve(2 * n * n);
  for (int j = 0; j < n; j++)
  {
    for (int i = 0; i < n; i++)
    {
      const int ll = j * (n + 1) + i, lr = ll + 1, ul = ll + n + 1, ur = ul + 1;
      cells.push_back({ll, lr, ur});
      cells.push_back({ll, ur, ul});
    }
  }
  return Mesh2D::FromCells(std::move(nodes), std::move(cells));
}

namespace
{

template <typename T>
T parse_token(std::istringstream &is, int line, const char *what)
{
  std::string tok;
  if (!(is >> tok))
  {
    throw ParseError(std::string("expected ") + what, line);
  }
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
  {
    throw ParseError(std::string("invalid ") + what + " '" + tok + "'", line);
  }
  return v;
}

void expect_end(std::istringstream &is, int line)
{
  std::string extra;
  if (is >> extra)
  {
    throw ParseError("unexpected trailing token '" + extra + "'", line);
  }
}

}  // namespace

Mesh2D load_mesh(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw Error("cannot open mesh file " + path);
  }
  std::string text;
  int line_no = 0;
  auto next_line = [&](const char *what) -> std::istringstream
  {
    while (std::getline(in, text))
    {
      line_no++;
      if (text.find_first_not_of(" \t\r") != std::string::npos)
      {
        return std::istringstream(text);
      }
    }
    throw ParseError(std::string("unexpected end of file, expected ") + what, line_no + 1);
  };

  auto header = next_line("header");
  std::string tag;
  header >> tag;
  if (tag != "mesh2d")
  {
    throw ParseError("expected header 'mesh2d <n_nodes> <n_cells>'", line_no);
  }
  const int nn = parse_token<int>(header, line_no, "node count");
  const int nc = parse_token<int>(header, line_no, "cell count");
  expect_end(header, line_no);
  if (nn < 3 || nc < 1)
  {
    throw ParseError("mesh needs at least 3 nodes and 1 cell", line_no);
  }

  std::vector<Point2> nodes(nn);
  for (auto &p : nodes)
  {
    auto ls = next_line("node line");
    p[0] = parse_token<double>(ls, line_no, "x coordinate");
    p[1] = parse_token<double>(ls, line_no, "y coordinate");
    expect_end(ls, line_no);
  }
  std::vector<std::array<int, 3>> cells(nc);
  for (auto &t : cells)
  {
    auto ls = next_line("cell line");
    for (auto &v : t)
    {
      v = parse_token<int>(ls, line_no, "node index");
      if (v < 0 || v >= nn)
      {
        throw ParseError("node index " + std::to_string(v) + " out of range", line_no);
      }
    }
    expect_end(ls, line_no);
  }
  return Mesh2D::FromCells(std::move(nodes), std::move(cells));
}

void save_mesh(const Mesh2D &mesh, const std::string &path)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out)
  {
    throw Error("cannot open " + path + " for writing");
  }
  out << "mesh2d " << mesh.n_nodes() << ' ' << mesh.n_cells() << '\n';
  char buf[64];
  for (const auto &p : mesh.nodes())
  {
    // Shortest representation that round-trips exactly.
    auto r = std::to_chars(buf, buf + sizeof(buf), p[0]);
    out.write(buf, r.ptr - buf);
    out << ' ';
    r = std::to_chars(buf, buf + sizeof(buf), p[1]);
    out.write(buf, r.ptr - buf);
    out << '\n';
  }
  for (const auto &t : mesh.cells())
  {
    out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
  if (!out)
  {
    throw Error("write failed: " + path);
  }
}

}  // namespace cml
