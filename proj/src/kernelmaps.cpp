// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/kernelmaps.hpp"

#include <cmath>
#include "cml/error.hpp"

namespace cml
{

Eigen::MatrixXd PodBasis::Project(const OperatorSet &ops, const Eigen::MatrixXd &Q) const
{
  return V.transpose() * ops.Mq.Mult(Q);
}

Vector homogeneous_part(const OperatorSet &ops, const AveragedSolver &solver, const Vector &q)
{
  return q - solver.Apply(ops.B.Mult(q));
}

Eigen::MatrixXd homogeneous_snapshots(const OperatorSet &ops, const AveragedSolver &solver,
                                      const std::vector<Snapshot> &snapshots)
{
  Eigen::MatrixXd Q0(ops.mesh->n_edges(), snapshots.size());
  for (std::size_t i = 0; i < snapshots.size(); i++)
  {
    Q0.col(i) = homogeneous_part(ops, solver, snapshots[i].q);
  }
  return Q0;
}

PodBasis build_pod(const OperatorSet &ops, const Eigen::MatrixXd &Q0, int n,
                   const AveragedSolver *solver)
{
  const int ns = static_cast<int>(Q0.cols());
  if (ns < 1)
  {
    throw InvalidArgument("POD needs at least one snapshot");
  }
  if (n < 1 || n > ns)
  {
    throw InvalidArgument("POD dimension n = " + std::to_string(n) + " must lie in [1, " +
                          std::to_string(ns) + "]");
  }
  if (Q0.rows() != ops.mesh->n_edges())
  {
    throw InvalidArgument("POD snapshots must be RT0 fields");
  }
  const Eigen::MatrixXd MQ = ops.Mq.Mult(Q0);
  const Eigen::MatrixXd G = Q0.transpose() * MQ;
  const SymEig eig = sym_eig(G);
  const double l1 = eig.values[0];
  if (!(l1 > 0.0))
  {
    throw NumericalError("POD: all homogeneous snapshots vanish");
  }
  if (eig.values[n - 1] < 1e-14 * l1)
  {
    throw NumericalError("POD: eigenvalue " + std::to_string(n) + " is below 1e-14 λ₁ (" +
                         std::to_string(eig.values[n - 1]) + "); the snapshot set has rank < " +
                         std::to_string(n) + ", use a smaller n");
  }

  PodBasis pod;
  pod.eigenvalues = eig.values;
  Eigen::MatrixXd W = eig.vectors.leftCols(n);
  for (int k = 0; k < n; k++)
  {
    W.col(k) /= std::sqrt(eig.values[k]);
  }
  pod.V = Q0 * W;

  if (solver)
  {
    pod.V -= solver->Apply(ops.B.Mult(pod.V));
  }
  // Λ^{-1/2} amplifies roundoff in the trailing modes; two passes of modified Gram–Schmidt in
  // the Mq inner product restore orthonormality without changing the nested spans.
  for (int pass = 0; pass < 2; pass++)
  {
    for (int k = 0; k < n; k++)
    {
      for (int j = 0; j < k; j++)
      {
        const Vector mj = ops.Mq.Mult(Vector(pod.V.col(j)));
        pod.V.col(k) -= mj.dot(pod.V.col(k)) * pod.V.col(j);
      }
      const double nk = std::sqrt(pod.V.col(k).dot(ops.Mq.Mult(Vector(pod.V.col(k)))));
      pod.V.col(k) /= nk;
    }
  }

  pod.truncation_energy = 0.0;
  for (int i = n; i < ns; i++)
  {
    pod.truncation_energy += eig.values[i];
  }
  return pod;
}

PodBasis build_pod(const std::vector<Snapshot> &snapshots, const AveragedSolver &solver,
                   const OperatorSet &ops, int n)
{
  return build_pod(ops, homogeneous_snapshots(ops, solver, snapshots), n, &solver);
}

double pod_reconstruction_error(const OperatorSet &ops, const PodBasis &pod,
                                const Eigen::MatrixXd &Q0)
{
  const Eigen::MatrixXd R = Q0 - pod.V * pod.Project(ops, Q0);
  return (R.array() * ops.Mq.Mult(R).array()).sum();
}

void write_pod(const std::string &prefix, const PodBasis &pod)
{
  write_dense(prefix + "_V", DenseMatrix(pod.V));
  DenseMatrix ev(1, pod.eigenvalues.size() + 1);
  ev(0, 0) = pod.truncation_energy;
  for (Eigen::Index i = 0; i < pod.eigenvalues.size(); i++)
  {
    ev(0, i + 1) = pod.eigenvalues[i];
  }
  write_dense(prefix + "_eigenvalues", ev);
}

PodBasis read_pod(const std::string &prefix)
{
  PodBasis pod;
  pod.V = read_dense(prefix + "_V");
  const DenseMatrix ev = read_dense(prefix + "_eigenvalues");
  if (ev.rows() != 1 || ev.cols() < 1)
  {
    throw ValidationError("POD eigenvalue file has the wrong shape");
  }
  pod.truncation_energy = ev(0, 0);
  pod.eigenvalues = ev.row(0).tail(ev.cols() - 1).transpose();
  return pod;
}

std::string to_string(KernelVariant v)
{
  switch (v)
  {
    case KernelVariant::Projection:
      return "projection";
    case KernelVariant::Pod:
      return "pod";
    case KernelVariant::Curl:
      return "curl";
  }
  return "?";
}

KernelMap KernelMap::Projection(std::shared_ptr<const OperatorSet> ops,
                                std::shared_ptr<const AveragedSolver> solver)
{
  KernelMap k;
  k.variant_ = KernelVariant::Projection;
  k.ops_ = std::move(ops);
  k.solver_ = std::move(solver);
  return k;
}

KernelMap KernelMap::Pod(std::shared_ptr<const OperatorSet> ops,
                         std::shared_ptr<const PodBasis> pod)
{
  if (pod->n_edges() != ops->mesh->n_edges())
  {
    throw InvalidArgument("POD basis does not match the mesh");
  }
  KernelMap k;
  k.variant_ = KernelVariant::Pod;
  k.ops_ = std::move(ops);
  k.pod_ = std::move(pod);
  return k;
}

KernelMap KernelMap::Curl(std::shared_ptr<const OperatorSet> ops)
{
  KernelMap k;
  k.variant_ = KernelVariant::Curl;
  k.ops_ = std::move(ops);
  return k;
}

int KernelMap::potential_dim() const
{
  switch (variant_)
  {
    case KernelVariant::Projection:
      return ops_->mesh->n_edges();
    case KernelVariant::Pod:
      return pod_->n();
    case KernelVariant::Curl:
      return ops_->mesh->n_nodes();
  }
  return 0;
}

Vector KernelMap::Apply(const Vector &r) const
{
  if (r.size() != potential_dim())
  {
    throw InvalidArgument("S0: potential has length " + std::to_string(r.size()) +
                          ", expected " + std::to_string(potential_dim()));
  }
  switch (variant_)
  {
    case KernelVariant::Projection:
      return r - solver_->Apply(ops_->B.Mult(r));
    case KernelVariant::Pod:
      return pod_->V * r;
    case KernelVariant::Curl:
      return ops_->Curl.Mult(r);
  }
  return {};
}

Vector KernelMap::ApplyTranspose(const Vector &y) const
{
  if (y.size() != n_edges())
  {
    throw InvalidArgument("S0 transpose: expected an RT0-dual vector");
  }
  switch (variant_)
  {
    case KernelVariant::Projection:
      return y - ops_->Bt.Mult(solver_->ApplyAdjoint(y));
    case KernelVariant::Pod:
      return pod_->V.transpose() * y;
    case KernelVariant::Curl:
      return ops_->Curl.MultTranspose(y);
  }
  return {};
}

Eigen::MatrixXd KernelMap::Apply(const Eigen::MatrixXd &R) const
{
  if (R.rows() != potential_dim())
  {
    throw InvalidArgument("S0: potential block has the wrong number of rows");
  }
  switch (variant_)
  {
    case KernelVariant::Projection:
      return R - solver_->Apply(ops_->B.Mult(R));
    case KernelVariant::Pod:
      return pod_->V * R;
    case KernelVariant::Curl:
      return ops_->Curl.Mult(R);
  }
  return {};
}

Eigen::MatrixXd KernelMap::ApplyTranspose(const Eigen::MatrixXd &Y) const
{
  if (Y.rows() != n_edges())
  {
    throw InvalidArgument("S0 transpose: block has the wrong number of rows");
  }
  switch (variant_)
  {
    case KernelVariant::Projection:
      return Y - ops_->Bt.Mult(solver_->ApplyAdjoint(Y));
    case KernelVariant::Pod:
      return pod_->V.transpose() * Y;
    case KernelVariant::Curl:
      return ops_->Curl.MultTranspose(Y);
  }
  return {};
}

}  // namespace cml
