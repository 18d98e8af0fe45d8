// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/numerics.hpp"

#include <algorithm>
#include <limits>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include "cml/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary matrix IO assumes a little-endian host");

namespace cml
{

SparseMatrix::SparseMatrix(int n_rows, int n_cols)
  : n_rows_(n_rows), n_cols_(n_cols), row_ptr_(n_rows + 1, 0)
{
}

SparseMatrix::SparseMatrix(int n_rows, int n_cols, std::vector<int> row_ptr,
                           std::vector<int> col_idx, std::vector<double> values)
  : n_rows_(n_rows), n_cols_(n_cols), row_ptr_(std::move(row_ptr)),
    col_idx_(std::move(col_idx)), values_(std::move(values))
{
  if (static_cast<int>(row_ptr_.size()) != n_rows_ + 1 || row_ptr_.front() != 0 ||
      static_cast<std::size_t>(row_ptr_.back()) != col_idx_.size() ||
      col_idx_.size() != values_.size())
  {
    throw ValidationError("CSR arrays have inconsistent lengths");
  }
  for (int i = 0; i < n_rows_; i++)
  {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      if (col_idx_[k] < 0 || col_idx_[k] >= n_cols_ ||
          (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1]))
      {
        throw ValidationError("CSR column indices must be in range and strictly increasing");
      }
    }
  }
}

SparseMatrix SparseMatrix::FromTriplets(int n_rows, int n_cols, std::vector<Triplet> triplets)
{
  for (const auto &t : triplets)
  {
    if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
    {
      throw InvalidArgument("triplet index out of range");
    }
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet &a, const Triplet &b)
                   { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  std::vector<int> row_ptr(n_rows + 1, 0), col_idx;
  std::vector<double> values;
  col_idx.reserve(triplets.size());
  values.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size();)
  {
    const int i = triplets[k].row, j = triplets[k].col;
    double v = 0.0;
    for (; k < triplets.size() && triplets[k].row == i && triplets[k].col == j; k++)
    {
      v += triplets[k].value;
    }
    if (v != 0.0)
    {
      col_idx.push_back(j);
      values.push_back(v);
      row_ptr[i + 1]++;
    }
  }
  for (int i = 0; i < n_rows; i++)
  {
    row_ptr[i + 1] += row_ptr[i];
  }
  return SparseMatrix(n_rows, n_cols, std::move(row_ptr), std::move(col_idx),
                      std::move(values));
}

SparseMatrix SparseMatrix::Identity(int n)
{
  std::vector<int> row_ptr(n + 1), col_idx(n);
  for (int i = 0; i <= n; i++)
  {
    row_ptr[i] = i;
  }
  for (int i = 0; i < n; i++)
  {
    col_idx[i] = i;
  }
  return SparseMatrix(n, n, std::move(row_ptr), std::move(col_idx), std::vector<double>(n, 1.0));
}

double SparseMatrix::coeff(int i, int j) const
{
  const auto begin = col_idx_.begin() + row_ptr_[i], end = col_idx_.begin() + row_ptr_[i + 1];
  const auto it = std::lower_bound(begin, end, j);
  return (it != end && *it == j) ? values_[it - col_idx_.begin()] : 0.0;
}

SparseMatrix SparseMatrix::Transpose() const
{
  std::vector<int> row_ptr(n_cols_ + 1, 0), col_idx(nnz());
  std::vector<double> values(nnz());
  for (int j : col_idx_)
  {
    row_ptr[j + 1]++;
  }
  for (int j = 0; j < n_cols_; j++)
  {
    row_ptr[j + 1] += row_ptr[j];
  }
  std::vector<int> next(row_ptr.begin(), row_ptr.end() - 1);
  for (int i = 0; i < n_rows_; i++)
  {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      const int dst = next[col_idx_[k]]++;
      col_idx[dst] = i;
      values[dst] = values_[k];
    }
  }
  return SparseMatrix(n_cols_, n_rows_, std::move(row_ptr), std::move(col_idx),
                      std::move(values));
}

void SparseMatrix::Compress()
{
  std::size_t dst = 0;
  std::vector<int> row_ptr(n_rows_ + 1, 0);
  for (int i = 0; i < n_rows_; i++)
  {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      if (values_[k] != 0.0)
      {
        col_idx_[dst] = col_idx_[k];
        values_[dst] = values_[k];
        dst++;
      }
    }
    row_ptr[i + 1] = static_cast<int>(dst);
  }
  col_idx_.resize(dst);
  values_.resize(dst);
  row_ptr_ = std::move(row_ptr);
}

Vector SparseMatrix::Mult(const Vector &x) const
{
  if (x.size() != n_cols_)
  {
    throw InvalidArgument("spmv: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(n_cols_) + ")");
  }
  Vector y(n_rows_);
  for (int i = 0; i < n_rows_; i++)
  {
    double s = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      s += values_[k] * x[col_idx_[k]];
    }
    y[i] = s;
  }
  return y;
}

Vector SparseMatrix::MultTranspose(const Vector &x) const
{
  if (x.size() != n_rows_)
  {
    throw InvalidArgument("spmv transpose: dimension mismatch");
  }
  Vector y = Vector::Zero(n_cols_);
  for (int i = 0; i < n_rows_; i++)
  {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      y[col_idx_[k]] += values_[k] * x[i];
    }
  }
  return y;
}

Eigen::MatrixXd SparseMatrix::Mult(const Eigen::MatrixXd &X) const
{
  if (X.rows() != n_cols_)
  {
    throw InvalidArgument("sparse-dense product: dimension mismatch");
  }
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n_rows_, X.cols());
  for (Eigen::Index c = 0; c < X.cols(); c++)
  {
    for (int i = 0; i < n_rows_; i++)
    {
      double s = 0.0;
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
      {
        s += values_[k] * X(col_idx_[k], c);
      }
      Y(i, c) = s;
    }
  }
  return Y;
}

Eigen::MatrixXd SparseMatrix::MultTranspose(const Eigen::MatrixXd &X) const
{
  if (X.rows() != n_rows_)
  {
    throw InvalidArgument("sparse-dense transpose product: dimension mismatch");
  }
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n_cols_, X.cols());
  for (Eigen::Index c = 0; c < X.cols(); c++)
  {
    for (int i = 0; i < n_rows_; i++)
    {
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
      {
        Y(col_idx_[k], c) += values_[k] * X(i, c);
      }
    }
  }
  return Y;
}

Eigen::MatrixXd SparseMatrix::ToDense() const
{
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_rows_, n_cols_);
  for (int i = 0; i < n_rows_; i++)
  {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; k++)
    {
      D(i, col_idx_[k]) = values_[k];
    }
  }
  return D;
}

Vector spmv(const SparseMatrix &A, const Vector &x)
{
  return A.Mult(x);
}

SparseMatrix Multiply(const SparseMatrix &A, const SparseMatrix &B)
{
  if (A.cols() != B.rows())
  {
    throw InvalidArgument("sparse product: dimension mismatch");
  }
  std::vector<Triplet> t;
  for (int i = 0; i < A.rows(); i++)
  {
    for (int ka = A.row_ptr()[i]; ka < A.row_ptr()[i + 1]; ka++)
    {
      const int m = A.col_idx()[ka];
      for (int kb = B.row_ptr()[m]; kb < B.row_ptr()[m + 1]; kb++)
      {
        t.push_back({i, B.col_idx()[kb], A.values()[ka] * B.values()[kb]});
      }
    }
  }
  return SparseMatrix::FromTriplets(A.rows(), B.cols(), std::move(t));
}

namespace
{

using EigenSparse = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

EigenSparse ToEigen(const SparseMatrix &A)
{
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nnz());
  for (int i = 0; i < A.rows(); i++)
  {
    for (int k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; k++)
    {
      t.emplace_back(i, A.col_idx()[k], A.values()[k]);
    }
  }
  EigenSparse E(A.rows(), A.cols());
  E.setFromTriplets(t.begin(), t.end());
  E.makeCompressed();
  return E;
}

}  // namespace

struct SparseLu::Impl
{
  Eigen::SparseLU<EigenSparse, Eigen::COLAMDOrdering<int>> lu;
};

SparseLu::SparseLu(const SparseMatrix &A) : impl_(std::make_unique<Impl>()), n_(A.rows())
{
  if (A.rows() != A.cols())
  {
    throw InvalidArgument("sparse LU requires a square matrix");
  }
  const EigenSparse E = ToEigen(A);
  impl_->lu.analyzePattern(E);
  impl_->lu.factorize(E);
  if (impl_->lu.info() != Eigen::Success)
  {
    throw NumericalError("sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
  }
}

SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu &&) noexcept = default;
SparseLu &SparseLu::operator=(SparseLu &&) noexcept = default;

Vector SparseLu::Solve(const Vector &b) const
{
  if (b.size() != n_)
  {
    throw InvalidArgument("sparse LU solve: dimension mismatch");
  }
  Vector x = impl_->lu.solve(b);
  if (impl_->lu.info() != Eigen::Success || !x.allFinite())
  {
    throw NumericalError("sparse LU solve failed");
  }
  return x;
}

Vector solve_sparse(const SparseMatrix &A, const Vector &b)
{
  const SparseLu lu(A);
  Vector x = lu.Solve(b);
  const double res = (A.Mult(x) - b).lpNorm<Eigen::Infinity>();
  if (!(res <= 1e-10 * (1.0 + b.lpNorm<Eigen::Infinity>())))
  {
    throw NumericalError("sparse solve residual " + std::to_string(res) +
                         " exceeds tolerance (matrix singular to working precision?)");
  }
  return x;
}

namespace
{

// Elimination sequence of a permuted triangular matrix, validated once and then replayed for
// any number of right-hand sides.
struct EliminationProgram
{
  struct Step
  {
    int row, unknown, begin, end;  // [begin, end) indexes the known-entry arrays
    double pivot;
  };
  std::vector<Step> steps;
  std::vector<int> cols;
  std::vector<double> values;

  EliminationProgram(const SparseMatrix &T, const TriangularOrder &order, Eigen::Index rhs_rows)
  {
    const int n = T.rows();
    if (T.cols() != n || static_cast<int>(order.rows.size()) != n ||
        static_cast<int>(order.cols.size()) != n || rhs_rows != n)
    {
      throw InvalidArgument("permuted triangular solve: dimension mismatch");
    }
    // when[j] = elimination step at which unknown j is determined.
    std::vector<int> when(n, -1);
    for (int k = 0; k < n; k++)
    {
      when[order.cols[k]] = k;
    }
    steps.reserve(n);
    for (int k = 0; k < n; k++)
    {
      const int i = order.rows[k], j = order.cols[k];
      Step st{i, j, static_cast<int>(cols.size()), 0, 0.0};
      for (int p = T.row_ptr()[i]; p < T.row_ptr()[i + 1]; p++)
      {
        const int c = T.col_idx()[p];
        if (c == j)
        {
          st.pivot = T.values()[p];
        }
        else if (when[c] < k)
        {
          cols.push_back(c);
          values.push_back(T.values()[p]);
        }
        else
        {
          throw StructuralError("matrix is not triangular under the given ordering (row " +
                                std::to_string(i) + ")");
        }
      }
      if (st.pivot == 0.0)
      {
        throw StructuralError("zero pivot at row " + std::to_string(i));
      }
      st.end = static_cast<int>(cols.size());
      steps.push_back(st);
    }
  }

  void Run(const double *b, double *x) const
  {
    for (const Step &st : steps)
    {
      double s = b[st.row];
      for (int p = st.begin; p < st.end; p++)
      {
        s -= values[p] * x[cols[p]];
      }
      x[st.unknown] = s / st.pivot;
    }
  }
};

}  // namespace

Vector solve_permuted_triangular(const SparseMatrix &T, const TriangularOrder &order,
                                 const Vector &b)
{
  const EliminationProgram prog(T, order, b.size());
  Vector x(b.size());
  prog.Run(b.data(), x.data());
  return x;
}

Eigen::MatrixXd solve_permuted_triangular(const SparseMatrix &T, const TriangularOrder &order,
                                          const Eigen::MatrixXd &B)
{
  const EliminationProgram prog(T, order, B.rows());
  Eigen::MatrixXd X(B.rows(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); j++)
  {
    prog.Run(B.col(j).data(), X.col(j).data());
  }
  return X;
}

SymEig sym_eig(const Eigen::MatrixXd &G)
{
  if (G.rows() != G.cols())
  {
    throw InvalidArgument("sym_eig: matrix is not square");
  }
  const Eigen::MatrixXd S = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
  {
    throw NumericalError("symmetric eigensolver did not converge");
  }
  // Eigen returns ascending order.
  const Eigen::Index n = S.rows();
  SymEig out{Vector(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; i++)
  {
    out.values[i] = es.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t Rng::NextU64()
{
  return splitmix64(seed_ * 0xD1B54A32D192ED03ull + 0x9E3779B97F4A7C15ull * (++counter_));
}

double Rng::Uniform()
{
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::Index(std::uint64_t n)
{
  if (n == 0)
  {
    throw InvalidArgument("Rng::Index requires n > 0");
  }
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do
  {
    r = NextU64();
  } while (r >= limit);
  return r % n;
}

double Rng::Normal()
{
  // Box-Muller; one of the pair is discarded to keep the stream stateless.
  double u1;
  do
  {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<Vector> latin_hypercube(Rng &rng, int n_samples, const Bounds &bounds)
{
  if (n_samples < 1)
  {
    throw InvalidArgument("latin_hypercube: n_samples must be >= 1");
  }
  for (const auto &b : bounds)
  {
    if (!(b[0] < b[1]) || !std::isfinite(b[0]) || !std::isfinite(b[1]))
    {
      throw InvalidArgument("latin_hypercube: each bound needs lo < hi");
    }
  }
  const int dim = static_cast<int>(bounds.size());
  std::vector<Vector> samples(n_samples, Vector(dim));
  std::vector<int> perm(n_samples);
  for (int d = 0; d < dim; d++)
  {
    for (int i = 0; i < n_samples; i++)
    {
      perm[i] = i;
    }
    rng.Shuffle(perm);
    const double lo = bounds[d][0], width = (bounds[d][1] - bounds[d][0]) / n_samples;
    for (int i = 0; i < n_samples; i++)
    {
      const double bin_lo = lo + width * perm[i], bin_hi = lo + width * (perm[i] + 1);
      double v = bin_lo + width * rng.Uniform();
      // Rounding must not push a sample into the neighbouring bin.
      v = std::clamp(v, bin_lo, std::nextafter(bin_hi, bin_lo));
      samples[i][d] = v;
    }
  }
  return samples;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h)
{
  for (std::byte b : bytes)
  {
    h ^= static_cast<std::uint64_t>(b);
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string &s, std::uint64_t h)
{
  return fnv1a(std::as_bytes(std::span(s.data(), s.size())), h);
}

std::string hex64(std::uint64_t h)
{
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

namespace
{

constexpr char kMagic[5] = {'C', 'R', 'O', 'M', '1'};

template <typename T>
void put(std::ofstream &os, T v)
{
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream &is, const std::string &path)
{
  T v;
  if (!is.read(reinterpret_cast<char *>(&v), sizeof(T)))
  {
    throw ValidationError("truncated binary matrix file " + path);
  }
  return v;
}

std::ofstream open_out(const std::string &path, std::uint8_t kind, std::uint64_t rows,
                       std::uint64_t cols)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
  {
    throw Error("cannot open " + path + " for writing");
  }
  os.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(os, kind);
  put<std::uint64_t>(os, rows);
  put<std::uint64_t>(os, cols);
  return os;
}

std::ifstream open_in(const std::string &path, std::uint8_t expect_kind, std::uint64_t &rows,
                      std::uint64_t &cols)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
  {
    throw Error("cannot open " + path);
  }
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
  {
    throw ValidationError("bad magic in " + path);
  }
  const auto kind = get<std::uint8_t>(is, path);
  if (kind != expect_kind)
  {
    throw ValidationError("unexpected matrix kind " + std::to_string(kind) + " in " + path);
  }
  rows = get<std::uint64_t>(is, path);
  cols = get<std::uint64_t>(is, path);
  return is;
}

}  // namespace

void write_dense(const std::string &path, const Eigen::Ref<const DenseMatrix> &A)
{
  auto os = open_out(path, 0, A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); i++)
  {
    for (Eigen::Index j = 0; j < A.cols(); j++)
    {
      put<double>(os, A(i, j));
    }
  }
  if (!os)
  {
    throw Error("write failed: " + path);
  }
}

void write_sparse(const std::string &path, const SparseMatrix &A)
{
  auto os = open_out(path, 1, A.rows(), A.cols());
  put<std::uint64_t>(os, A.nnz());
  for (int v : A.row_ptr())
  {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(v));
  }
  for (int v : A.col_idx())
  {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(v));
  }
  for (double v : A.values())
  {
    put<double>(os, v);
  }
  if (!os)
  {
    throw Error("write failed: " + path);
  }
}

DenseMatrix read_dense(const std::string &path)
{
  std::uint64_t rows, cols;
  auto is = open_in(path, 0, rows, cols);
  DenseMatrix A(rows, cols);
  for (std::uint64_t i = 0; i < rows; i++)
  {
    for (std::uint64_t j = 0; j < cols; j++)
    {
      A(i, j) = get<double>(is, path);
    }
  }
  return A;
}

SparseMatrix read_sparse(const std::string &path)
{
  std::uint64_t rows, cols;
  auto is = open_in(path, 1, rows, cols);
  const auto nnz = get<std::uint64_t>(is, path);
  std::vector<int> row_ptr(rows + 1), col_idx(nnz);
  std::vector<double> values(nnz);
  for (auto &v : row_ptr)
  {
    v = static_cast<int>(get<std::uint64_t>(is, path));
  }
  for (auto &v : col_idx)
  {
    v = static_cast<int>(get<std::uint64_t>(is, path));
  }
  for (auto &v : values)
  {
    v = get<double>(is, path);
  }
  return SparseMatrix(static_cast<int>(rows), static_cast<int>(cols), std::move(row_ptr),
                      std::move(col_idx), std::move(values));
}

}  // namespace cml
