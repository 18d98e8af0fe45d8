// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/fom.hpp"

#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>
#include "cml/error.hpp"

namespace cml
{

namespace
{

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string format_mu(const Vector &mu)
{
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (Eigen::Index i = 0; i < mu.size(); i++)
  {
    os << (i ? ", " : "") << mu[i];
  }
  os << ']';
  return os.str();
}

}  // namespace

std::string to_string(CaseTag tag)
{
  return tag == CaseTag::Sines2D ? "sines2d" : "forchheimer2d";
}

CaseTag case_from_string(const std::string &name)
{
  if (name == "sines2d")
  {
    return CaseTag::Sines2D;
  }
  if (name == "forchheimer2d")
  {
    return CaseTag::Forchheimer2D;
  }
  throw InvalidArgument("unknown case '" + name + "' (expected sines2d or forchheimer2d)");
}

ProblemSpec ProblemSpec::Sines2D()
{
  ProblemSpec s;
  s.tag_ = CaseTag::Sines2D;
  s.bounds_ = {{1.0, 4.0}, {1.0, 4.0}};
  return s;
}

ProblemSpec ProblemSpec::Forchheimer2D()
{
  ProblemSpec s;
  s.tag_ = CaseTag::Forchheimer2D;
  s.bounds_ = {{0.0, 1.0}, {0.0, 1.0}, {-2.0, 1.0}, {0.0, 2.0}};
  return s;
}

ProblemSpec ProblemSpec::FromTag(CaseTag tag)
{
  return tag == CaseTag::Sines2D ? Sines2D() : Forchheimer2D();
}

void ProblemSpec::Validate(const Vector &mu) const
{
  if (mu.size() != n_params())
  {
    throw DomainError("expected " + std::to_string(n_params()) + " parameters, got " +
                      std::to_string(mu.size()));
  }
  for (int i = 0; i < n_params(); i++)
  {
    if (!(mu[i] >= bounds_[i][0] && mu[i] <= bounds_[i][1]))
    {
      throw DomainError("parameter " + std::to_string(i) + " = " + std::to_string(mu[i]) +
                        " outside [" + std::to_string(bounds_[i][0]) + ", " +
                        std::to_string(bounds_[i][1]) + "]");
    }
  }
}

void ProblemSpec::Restrict(const Bounds &bounds)
{
  if (static_cast<int>(bounds.size()) != n_params())
  {
    throw InvalidArgument("bounds: expected " + std::to_string(n_params()) + " intervals, got " +
                          std::to_string(bounds.size()));
  }
  const Bounds full = FromTag(tag_).bounds();
  for (int i = 0; i < n_params(); i++)
  {
    const auto &b = bounds[i];
    if (!(b[0] < b[1]) || b[0] < full[i][0] || b[1] > full[i][1])
    {
      throw InvalidArgument("bounds[" + std::to_string(i) + "] = [" + std::to_string(b[0]) +
                            ", " + std::to_string(b[1]) + "] must be a non-empty subinterval of [" +
                            std::to_string(full[i][0]) + ", " + std::to_string(full[i][1]) + "]");
    }
  }
  bounds_ = bounds;
}

ScalarFn ProblemSpec::source(const Vector &mu) const
{
  Validate(mu);
  if (tag_ == CaseTag::Sines2D)
  {
    const double a = mu[0], b = mu[1];
    return [a, b](const Point2 &x)
    { return std::sin(a * kTwoPi * x[0]) * std::sin(b * kTwoPi * x[1]); };
  }
  const double w = mu[0];
  return [w](const Point2 &x)
  { return w * std::sin(kTwoPi * x[0]) + (1.0 - w) * std::sin(kTwoPi * x[1]); };
}

VectorFn ProblemSpec::vector_source(const Vector &mu) const
{
  Validate(mu);
  if (tag_ == CaseTag::Sines2D)
  {
    return [](const Point2 &) { return Point2{1.0, 0.0}; };
  }
  return {};
}

ScalarFn ProblemSpec::pressure_bc(const Vector &mu) const
{
  Validate(mu);
  if (tag_ == CaseTag::Sines2D)
  {
    return {};
  }
  const double s = mu[1];
  return [s](const Point2 &x) { return s * x[0] * x[1]; };
}

double ProblemSpec::kappa0(const Vector &mu) const
{
  return tag_ == CaseTag::Forchheimer2D ? std::pow(10.0, mu[2]) : 1.0;
}

double ProblemSpec::kappa1(const Vector &mu) const
{
  return tag_ == CaseTag::Forchheimer2D ? std::pow(10.0, mu[3])
                                        : std::numeric_limits<double>::infinity();
}

std::vector<double> ProblemSpec::flux_coefficients(const Mesh2D &mesh, const Vector &mu,
                                                   const Vector &q) const
{
  if (tag_ == CaseTag::Sines2D)
  {
    return std::vector<double>(mesh.n_cells(), 1.0);
  }
  return forchheimer_coefficients(mesh, q, kappa0(mu), kappa1(mu));
}

Vector ProblemSpec::source_vector(const Mesh2D &mesh, const Vector &mu) const
{
  return project_source(mesh, source(mu));
}

Vector ProblemSpec::rhs_vector(const Mesh2D &mesh, const Vector &mu) const
{
  return assemble_rhs_g(mesh, vector_source(mu), pressure_bc(mu));
}

DarcySystem::DarcySystem(const OperatorSet &ops, const SparseMatrix &A)
  : ops_(&ops),
    K_(
      [&]
      {
        const int ne = ops.B.cols(), nc = ops.B.rows();
        std::vector<Triplet> t;
        t.reserve(A.nnz() + 2 * ops.B.nnz());
        for (int i = 0; i < ne; i++)
        {
          for (int k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; k++)
          {
            t.push_back({i, A.col_idx()[k], A.values()[k]});
          }
        }
        for (int c = 0; c < nc; c++)
        {
          for (int k = ops.B.row_ptr()[c]; k < ops.B.row_ptr()[c + 1]; k++)
          {
            const int e = ops.B.col_idx()[k];
            const double v = ops.B.values()[k];
            t.push_back({ne + c, e, v});
            t.push_back({e, ne + c, -v});
          }
        }
        return SparseMatrix::FromTriplets(ne + nc, ne + nc, std::move(t));
      }()),
    lu_(K_)
{
}

FlowSolution DarcySystem::Solve(const Vector &f_vec, const Vector &g_vec) const
{
  const int ne = ops_->B.cols(), nc = ops_->B.rows();
  if (f_vec.size() != nc || g_vec.size() != ne)
  {
    throw InvalidArgument("Darcy solve: right-hand side dimension mismatch");
  }
  Vector rhs(ne + nc);
  rhs << g_vec, f_vec;
  const Vector x = lu_.Solve(rhs);
  const double res = (K_.Mult(x) - rhs).lpNorm<Eigen::Infinity>();
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  if (!(res <= 1e-10 * scale))
  {
    throw NumericalError("saddle-point residual " + std::to_string(res / scale) +
                         " exceeds 1e-10");
  }
  FlowSolution out;
  out.q = x.head(ne);
  out.p = x.tail(nc);
  out.residual = res / scale;
  return out;
}

FlowSolution solve_darcy(const OperatorSet &ops, const Vector &f_vec, const Vector &g_vec)
{
  return DarcySystem(ops, ops.Mq).Solve(f_vec, g_vec);
}

std::vector<double> forchheimer_coefficients(const Mesh2D &mesh, const Vector &q, double kappa0,
                                             double kappa1)
{
  std::vector<double> w = rt0_centroid_magnitude(mesh, q);
  for (double &v : w)
  {
    v = (1.0 + v / kappa1) / kappa0;
  }
  return w;
}

double forchheimer_residual(const OperatorSet &ops, const Vector &q, const Vector &p,
                            const Vector &f_vec, const Vector &g_vec, double kappa0,
                            double kappa1)
{
  const SparseMatrix A =
    assemble_flux_mass(*ops.mesh, forchheimer_coefficients(*ops.mesh, q, kappa0, kappa1));
  const Vector Aq = A.Mult(q), Btp = ops.Bt.Mult(p);
  const double r1 = (Aq - Btp - g_vec).lpNorm<Eigen::Infinity>();
  const double r2 = (ops.B.Mult(q) - f_vec).lpNorm<Eigen::Infinity>();
  const double scale =
    std::max({Aq.lpNorm<Eigen::Infinity>(), Btp.lpNorm<Eigen::Infinity>(),
              g_vec.lpNorm<Eigen::Infinity>(), f_vec.lpNorm<Eigen::Infinity>()});
  const double r = std::max(r1, r2);
  return scale > 0.0 ? r / scale : r;
}

FlowSolution solve_forchheimer(const OperatorSet &ops, const Vector &f_vec, const Vector &g_vec,
                               double kappa0, double kappa1, const PicardOptions &opt)
{
  if (!(kappa0 > 0.0) || !(kappa1 > 0.0))
  {
    throw InvalidArgument("Forchheimer: permeabilities must be positive");
  }
  const Mesh2D &mesh = *ops.mesh;
  Vector q = Vector::Zero(ops.B.cols());
  Vector p = Vector::Zero(ops.B.rows());
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_iterations; it++)
  {
    const auto w = forchheimer_coefficients(mesh, q, kappa0, kappa1);
    const FlowSolution frozen =
      DarcySystem(ops, assemble_flux_mass(mesh, w)).Solve(f_vec, g_vec);

    // Relaxation ω = (1 + r)/(1 + 2r), r = max |q|/κ₁: plain Picard in the Darcy limit,
    // and a contraction factor below 1/2 in the inertia-dominated regime where the
    // undamped map contracts only with factor r/(1 + r).
    double r = 0.0;
    for (double c : w)
    {
      r = std::max(r, c * kappa0 - 1.0);
    }
    const double omega = (1.0 + r) / (1.0 + 2.0 * r);
    const Vector q_next = (1.0 - omega) * q + omega * frozen.q;
    const Vector dq = q_next - q;
    const double step = std::sqrt(std::max(dq.dot(ops.Mq.Mult(dq)), 0.0));
    const double qn = std::sqrt(std::max(q_next.dot(ops.Mq.Mult(q_next)), 0.0));
    q = q_next;
    p = frozen.p;
    if (step <= opt.step_tol * (1.0 + qn))
    {
      residual = forchheimer_residual(ops, q, p, f_vec, g_vec, kappa0, kappa1);
      if (residual <= opt.residual_tol)
      {
        return {q, p, it, residual};
      }
    }
  }
  residual = forchheimer_residual(ops, q, p, f_vec, g_vec, kappa0, kappa1);
  throw ConvergenceError("Picard iteration did not converge in " +
                           std::to_string(opt.max_iterations) +
                           " iterations (last residual " + std::to_string(residual) + ")",
                         residual);
}

double conservation_residual(const OperatorSet &ops, const Vector &q, const Vector &f_vec)
{
  return (ops.B.Mult(q) - f_vec).lpNorm<Eigen::Infinity>();
}

namespace
{

Snapshot solve_with(const ProblemSpec &spec, const OperatorSet &ops, const Vector &mu,
                    const DarcySystem *linear, const PicardOptions &opt)
{
  Snapshot s;
  s.mu = mu;
  s.f_vec = spec.source_vector(*ops.mesh, mu);
  s.g_vec = spec.rhs_vector(*ops.mesh, mu);
  FlowSolution sol;
  if (spec.nonlinear())
  {
    sol = solve_forchheimer(ops, s.f_vec, s.g_vec, spec.kappa0(mu), spec.kappa1(mu), opt);
  }
  else
  {
    sol = linear ? linear->Solve(s.f_vec, s.g_vec) : solve_darcy(ops, s.f_vec, s.g_vec);
  }
  s.q = std::move(sol.q);
  s.p = std::move(sol.p);
  s.iterations = sol.iterations;
  const double res = conservation_residual(ops, s.q, s.f_vec);
  if (!(res <= 1e-10 * (1.0 + s.f_vec.lpNorm<Eigen::Infinity>())))
  {
    throw NumericalError("FOM flux violates conservation (residual " + std::to_string(res) +
                         ")");
  }
  return s;
}

}  // namespace

Snapshot solve_problem(const ProblemSpec &spec, const OperatorSet &ops, const Vector &mu,
                       const PicardOptions &opt)
{
  return solve_with(spec, ops, mu, nullptr, opt);
}

std::vector<Snapshot> generate_snapshots(const ProblemSpec &spec, const OperatorSet &ops,
                                         Rng &rng, int n, int threads, const PicardOptions &opt)
{
  if (n < 1)
  {
    throw InvalidArgument("generate_snapshots: n must be >= 1");
  }
  const auto mus = latin_hypercube(rng, n, spec.bounds());
  std::optional<DarcySystem> linear;
  if (!spec.nonlinear())
  {
    linear.emplace(ops, ops.Mq);
  }
  std::vector<Snapshot> out(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](int worker, int n_workers)
  {
    for (int i = worker; i < n; i += n_workers)
    {
      try
      {
        out[i] = solve_with(spec, ops, mus[i], linear ? &*linear : nullptr, opt);
      }
      catch (const std::exception &e)
      {
        errors[i] = std::make_exception_ptr(
          NumericalError("snapshot " + std::to_string(i) + " at mu = " + format_mu(mus[i]) +
                         ": " + e.what()));
      }
    }
  };
  threads = std::max(1, std::min(threads, n));
  if (threads == 1)
  {
    work(0, 1);
  }
  else
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; w++)
    {
      pool.emplace_back(work, w, threads);
    }
  }
  for (const auto &e : errors)
  {
    if (e)
    {
      std::rethrow_exception(e);
    }
  }
  return out;
}

namespace
{

DenseMatrix stack_rows(const std::vector<Snapshot> &s, Vector Snapshot::*field)
{
  DenseMatrix M(s.size(), s.empty() ? 0 : (s[0].*field).size());
  for (std::size_t i = 0; i < s.size(); i++)
  {
    M.row(i) = (s[i].*field).transpose();
  }
  return M;
}

}  // namespace

void write_archive(const std::string &dir, const SnapshotArchive &archive)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto &s = archive.snapshots;
  write_dense((fs::path(dir) / "params").string(), stack_rows(s, &Snapshot::mu));
  write_dense((fs::path(dir) / "flux").string(), stack_rows(s, &Snapshot::q));
  write_dense((fs::path(dir) / "pressure").string(), stack_rows(s, &Snapshot::p));
  write_dense((fs::path(dir) / "source").string(), stack_rows(s, &Snapshot::f_vec));
  write_dense((fs::path(dir) / "rhs_g").string(), stack_rows(s, &Snapshot::g_vec));
  nlohmann::json meta = archive.metadata;
  std::vector<int> iters;
  for (const auto &x : s)
  {
    iters.push_back(x.iterations);
  }
  meta["n_samples"] = s.size();
  meta["iterations"] = iters;
  std::ofstream os(fs::path(dir) / "metadata.json", std::ios::trunc);
  os << meta.dump(2) << '\n';
  if (!os)
  {
    throw Error("cannot write archive metadata in " + dir);
  }
}

SnapshotArchive read_archive(const std::string &dir)
{
  namespace fs = std::filesystem;
  SnapshotArchive a;
  std::ifstream is(fs::path(dir) / "metadata.json");
  if (!is)
  {
    throw Error("missing archive metadata in " + dir);
  }
  try
  {
    a.metadata = nlohmann::json::parse(is);
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ValidationError("archive metadata in " + dir + " is not valid JSON: " + e.what());
  }
  const DenseMatrix mu = read_dense((fs::path(dir) / "params").string());
  const DenseMatrix q = read_dense((fs::path(dir) / "flux").string());
  const DenseMatrix p = read_dense((fs::path(dir) / "pressure").string());
  const DenseMatrix f = read_dense((fs::path(dir) / "source").string());
  const DenseMatrix g = read_dense((fs::path(dir) / "rhs_g").string());
  const auto n = mu.rows();
  if (q.rows() != n || p.rows() != n || f.rows() != n || g.rows() != n)
  {
    throw ValidationError("archive " + dir + " has inconsistent sample counts");
  }
  const auto iters = a.metadata.value("iterations", std::vector<int>(n, 1));
  a.snapshots.resize(n);
  for (Eigen::Index i = 0; i < n; i++)
  {
    auto &s = a.snapshots[i];
    s.mu = mu.row(i).transpose();
    s.q = q.row(i).transpose();
    s.p = p.row(i).transpose();
    s.f_vec = f.row(i).transpose();
    s.g_vec = g.row(i).transpose();
    s.iterations = i < static_cast<Eigen::Index>(iters.size()) ? iters[i] : 1;
  }
  return a;
}

}  // namespace cml
