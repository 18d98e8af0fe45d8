// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_KERNELMAPS_HPP
#define CML_KERNELMAPS_HPP

#include <memory>
#include <string>
#include <vector>
#include "cml/fom.hpp"
#include "cml/tree.hpp"

namespace cml
{

//
// POD basis of the homogeneous snapshots, computed by the method of snapshots in the
// Mq inner product.
//
struct PodBasis
{
  Eigen::MatrixXd V;        // n_edges × n, Mq-orthonormal columns in Ker(B)
  Vector eigenvalues;       // all N_s Gram eigenvalues, descending
  double truncation_energy = 0.0;  // Σ_{i>n} λᵢ

  int n() const { return static_cast<int>(V.cols()); }
  int n_edges() const { return static_cast<int>(V.rows()); }

  // Coefficients Vᵀ Mq q for each column of Q.
  Eigen::MatrixXd Project(const OperatorSet &ops, const Eigen::MatrixXd &Q) const;
};

// q₀ = (I − S_I B) q.
Vector homogeneous_part(const OperatorSet &ops, const AveragedSolver &solver, const Vector &q);
// Homogeneous parts of all snapshot fluxes, one column per snapshot.
Eigen::MatrixXd homogeneous_snapshots(const OperatorSet &ops, const AveragedSolver &solver,
                                      const std::vector<Snapshot> &snapshots);

// Columns of Q0 must already be divergence-free. When solver is given, the basis is
// re-projected onto Ker(B) to remove roundoff. Throws InvalidArgument for n outside
// [1, N_s] and NumericalError when λ_n < 1e-14 λ₁.
PodBasis build_pod(const OperatorSet &ops, const Eigen::MatrixXd &Q0, int n,
                   const AveragedSolver *solver = nullptr);
PodBasis build_pod(const std::vector<Snapshot> &snapshots, const AveragedSolver &solver,
                   const OperatorSet &ops, int n);

// Σᵢ ‖q₀ⁱ − V Vᵀ Mq q₀ⁱ‖²_Mq.
double pod_reconstruction_error(const OperatorSet &ops, const PodBasis &pod,
                                const Eigen::MatrixXd &Q0);

// Stored as <prefix>_V and <prefix>_eigenvalues.
void write_pod(const std::string &prefix, const PodBasis &pod);
PodBasis read_pod(const std::string &prefix);

enum class KernelVariant
{
  Projection,  // I − S_I B on RT0 potentials
  Pod,         // V on POD coefficients
  Curl         // rotated nodal gradient on P1 potentials
};

std::string to_string(KernelVariant v);

//
// Linear map S₀ from a potential space into Ker(B).
//
class KernelMap
{
public:
  static KernelMap Projection(std::shared_ptr<const OperatorSet> ops,
                              std::shared_ptr<const AveragedSolver> solver);
  static KernelMap Pod(std::shared_ptr<const OperatorSet> ops,
                       std::shared_ptr<const PodBasis> pod);
  static KernelMap Curl(std::shared_ptr<const OperatorSet> ops);

  KernelVariant variant() const { return variant_; }
  int potential_dim() const;
  int n_edges() const { return ops_->mesh->n_edges(); }

  Vector Apply(const Vector &r) const;
  // S₀ᵀ y.
  Vector ApplyTranspose(const Vector &y) const;
  // Column-wise versions.
  Eigen::MatrixXd Apply(const Eigen::MatrixXd &R) const;
  Eigen::MatrixXd ApplyTranspose(const Eigen::MatrixXd &Y) const;

  const PodBasis *pod() const { return pod_.get(); }
  const AveragedSolver *solver() const { return solver_.get(); }

private:
  KernelVariant variant_ = KernelVariant::Projection;
  std::shared_ptr<const OperatorSet> ops_;
  std::shared_ptr<const AveragedSolver> solver_;
  std::shared_ptr<const PodBasis> pod_;
};

}  // namespace cml

#endif  // CML_KERNELMAPS_HPP
