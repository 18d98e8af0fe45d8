// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_NUMERICS_HPP
#define CML_NUMERICS_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>
#include <Eigen/Core>

namespace cml
{

using Vector = Eigen::VectorXd;
// Row-major dense storage, matching the on-disk layout.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Triplet
{
  int row, col;
  double value;
};

//
// Compressed sparse row matrix. Column indices are strictly increasing within each row and
// no explicit zeros are stored once built through FromTriplets or Compress.
//
class SparseMatrix
{
public:
  SparseMatrix() = default;
  SparseMatrix(int n_rows, int n_cols);
  SparseMatrix(int n_rows, int n_cols, std::vector<int> row_ptr, std::vector<int> col_idx,
               std::vector<double> values);

  // Duplicates are summed; resulting zeros are dropped.
  static SparseMatrix FromTriplets(int n_rows, int n_cols, std::vector<Triplet> triplets);
  static SparseMatrix Identity(int n);

  int rows() const { return n_rows_; }
  int cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<int> &row_ptr() const { return row_ptr_; }
  const std::vector<int> &col_idx() const { return col_idx_; }
  const std::vector<double> &values() const { return values_; }

  // Entry lookup by binary search; zero when absent.
  double coeff(int i, int j) const;

  SparseMatrix Transpose() const;
  // Removes stored zeros.
  void Compress();

  // y = A x, accumulated in stored index order.
  Vector Mult(const Vector &x) const;
  // y = Aᵀ x.
  Vector MultTranspose(const Vector &x) const;
  // Y = A X for a dense block of columns.
  Eigen::MatrixXd Mult(const Eigen::MatrixXd &X) const;
  Eigen::MatrixXd MultTranspose(const Eigen::MatrixXd &X) const;

  Eigen::MatrixXd ToDense() const;

  friend bool operator==(const SparseMatrix &, const SparseMatrix &) = default;

private:
  int n_rows_ = 0, n_cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

Vector spmv(const SparseMatrix &A, const Vector &x);

// C = A B, both sparse.
SparseMatrix Multiply(const SparseMatrix &A, const SparseMatrix &B);

//
// Sparse LU factorization with partial pivoting for general square systems. The factor is
// reusable across right-hand sides.
//
class SparseLu
{
public:
  explicit SparseLu(const SparseMatrix &A);
  ~SparseLu();
  SparseLu(SparseLu &&) noexcept;
  SparseLu &operator=(SparseLu &&) noexcept;

  Vector Solve(const Vector &b) const;
  int size() const { return n_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

// One-shot solve; the residual is checked against 1e-10 (1 + ‖b‖∞).
Vector solve_sparse(const SparseMatrix &A, const Vector &b);

// Row/column orderings under which P_r T P_cᵀ is lower triangular: step k eliminates row
// rows[k] for unknown cols[k].
struct TriangularOrder
{
  std::vector<int> rows;
  std::vector<int> cols;
};

// Solves T x = b where T is triangular up to the given permutation. Throws StructuralError on
// a zero pivot or when a row references an unknown that has not been eliminated yet.
Vector solve_permuted_triangular(const SparseMatrix &T, const TriangularOrder &order,
                                 const Vector &b);
// Same solve for every column of B at once.
Eigen::MatrixXd solve_permuted_triangular(const SparseMatrix &T, const TriangularOrder &order,
                                          const Eigen::MatrixXd &B);

struct SymEig
{
  Vector values;         // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

// Symmetric eigendecomposition of ½(G + Gᵀ).
SymEig sym_eig(const Eigen::MatrixXd &G);

//
// Counter-based 64-bit generator (SplitMix64 finalizer applied to seed + k·γ). The k-th draw
// depends only on (seed, k), so streams are reproducible across platforms.
//
class Rng
{
public:
  static constexpr const char *kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t NextU64();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t Index(std::uint64_t n);
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T> &v)
  {
    for (std::size_t i = v.size(); i > 1; i--)
    {
      std::swap(v[i - 1], v[Index(i)]);
    }
  }

  // Independent stream for worker i.
  Rng Derive(std::uint64_t i) const { return Rng(seed_ + i); }

private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

using Bounds = std::vector<std::array<double, 2>>;

// n_samples points, one per equal-width bin in every dimension.
std::vector<Vector> latin_hypercube(Rng &rng, int n_samples, const Bounds &bounds);

// FNV-1a over raw bytes; used for content hashes of meshes, configs and archives.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a(const std::string &s, std::uint64_t h = 14695981039346656037ull);
std::string hex64(std::uint64_t h);

//
// Repo-wide binary matrix format: "CROM1", u8 kind (0 dense, 1 CSR), u64 rows, u64 cols,
// then row-major f64 (dense) or u64 nnz, row_ptr, col_idx, f64 values (CSR). Little-endian.
//
void write_dense(const std::string &path, const Eigen::Ref<const DenseMatrix> &A);
void write_sparse(const std::string &path, const SparseMatrix &A);
DenseMatrix read_dense(const std::string &path);
SparseMatrix read_sparse(const std::string &path);

}  // namespace cml

#endif  // CML_NUMERICS_HPP
