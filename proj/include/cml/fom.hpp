// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_FOM_HPP
#define CML_FOM_HPP

#include <optional>
#include <string>
#include <vector>
#include <nlohmann/json.hpp>
#include "cml/fem.hpp"

namespace cml
{

enum class CaseTag
{
  Sines2D,       // linear Darcy, sinusoidal source, g = [1, 0], p = 0 on ∂Ω
  Forchheimer2D  // Darcy–Forchheimer, p = μ₁ x₀ x₁ on ∂Ω
};

std::string to_string(CaseTag tag);
CaseTag case_from_string(const std::string &name);

//
// Parametrized problem catalog. Closures are pure functions of μ.
//
class ProblemSpec
{
public:
  static ProblemSpec Sines2D();
  static ProblemSpec Forchheimer2D();
  static ProblemSpec FromTag(CaseTag tag);

  CaseTag tag() const { return tag_; }
  const Bounds &bounds() const { return bounds_; }
  int n_params() const { return static_cast<int>(bounds_.size()); }
  bool nonlinear() const { return tag_ == CaseTag::Forchheimer2D; }

  // Throws DomainError when μ is outside the parameter box.
  void Validate(const Vector &mu) const;

  // Shrinks the parameter box. Each interval must be non-empty and inside the case's box;
  // throws InvalidArgument naming the offending parameter otherwise.
  void Restrict(const Bounds &bounds);

  ScalarFn source(const Vector &mu) const;
  VectorFn vector_source(const Vector &mu) const;
  ScalarFn pressure_bc(const Vector &mu) const;

  // κ₀ = 10^μ₂ and κ₁ = 10^μ₃ for Forchheimer; 1 and +∞ (no inertial term) for Darcy.
  double kappa0(const Vector &mu) const;
  double kappa1(const Vector &mu) const;

  // Cellwise coefficient of A_q evaluated at the flux q (|q| at cell centroids).
  std::vector<double> flux_coefficients(const Mesh2D &mesh, const Vector &mu,
                                        const Vector &q) const;

  // P0-dual source and RT0-dual right-hand side for μ.
  Vector source_vector(const Mesh2D &mesh, const Vector &mu) const;
  Vector rhs_vector(const Mesh2D &mesh, const Vector &mu) const;

private:
  CaseTag tag_ = CaseTag::Sines2D;
  Bounds bounds_;
};

struct Snapshot
{
  Vector mu;
  Vector q;      // RT0
  Vector p;      // P0
  Vector f_vec;  // P0-dual
  Vector g_vec;  // RT0-dual
  int iterations = 1;
};

struct FlowSolution
{
  Vector q, p;
  int iterations = 1;
  double residual = 0.0;
};

//
// Factorized saddle-point system [A, -Bᵀ; B, 0] for a fixed flux operator A. Reusable across
// right-hand sides, shareable read-only between threads.
//
class DarcySystem
{
public:
  DarcySystem(const OperatorSet &ops, const SparseMatrix &A);

  FlowSolution Solve(const Vector &f_vec, const Vector &g_vec) const;

private:
  const OperatorSet *ops_;
  SparseMatrix K_;
  SparseLu lu_;
};

// Linear Darcy solve with unit coefficient (A = Mq).
FlowSolution solve_darcy(const OperatorSet &ops, const Vector &f_vec, const Vector &g_vec);

struct PicardOptions
{
  int max_iterations = 200;
  double step_tol = 1e-8;
  double residual_tol = 1e-8;
};

// Relative residual of the full nonlinear system at (q, p), scaled by the largest of
// ‖A(q)q‖∞, ‖Bᵀp‖∞, ‖g‖∞, ‖f‖∞.
double forchheimer_residual(const OperatorSet &ops, const Vector &q, const Vector &p,
                            const Vector &f_vec, const Vector &g_vec, double kappa0,
                            double kappa1);

// Cellwise κ₀⁻¹(1 + |q|/κ₁).
std::vector<double> forchheimer_coefficients(const Mesh2D &mesh, const Vector &q, double kappa0,
                                             double kappa1);

// Relaxed Picard iteration on the frozen-coefficient Darcy system.
FlowSolution solve_forchheimer(const OperatorSet &ops, const Vector &f_vec, const Vector &g_vec,
                               double kappa0, double kappa1, const PicardOptions &opt = {});

// Solves the problem at μ with the appropriate solver.
Snapshot solve_problem(const ProblemSpec &spec, const OperatorSet &ops, const Vector &mu,
                       const PicardOptions &opt = {});

// n Latin-hypercube samples from rng, each solved. Work is split over `threads` workers;
// results do not depend on the thread count.
std::vector<Snapshot> generate_snapshots(const ProblemSpec &spec, const OperatorSet &ops,
                                         Rng &rng, int n, int threads = 1,
                                         const PicardOptions &opt = {});

// ‖B q − f‖∞.
double conservation_residual(const OperatorSet &ops, const Vector &q, const Vector &f_vec);

//
// Snapshot archive: a directory holding params, flux, pressure, source, rhs_g (binary matrix
// format, one row per sample) and metadata.json.
//
struct SnapshotArchive
{
  std::vector<Snapshot> snapshots;
  nlohmann::json metadata;
};

void write_archive(const std::string &dir, const SnapshotArchive &archive);
SnapshotArchive read_archive(const std::string &dir);

}  // namespace cml

#endif  // CML_FOM_HPP
