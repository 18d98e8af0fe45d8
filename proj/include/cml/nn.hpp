// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_NN_HPP
#define CML_NN_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>
#include <nlohmann/json.hpp>
#include "cml/kernelmaps.hpp"

namespace cml
{

enum class Activation
{
  Identity,
  LeakyRelu  // x for x ≥ 0, 0.1 x otherwise
};

constexpr double kLeakySlope = 0.1;

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

enum class FeatureKind
{
  None,
  Sines225  // 2 → 225 samples of the separable sine source on a 15 × 15 grid
};

// F(μ)[j] = sin(2π μ₀ mod(j,15)/14) sin(2π μ₁ (j − mod(j,15))/210), j = 1..225.
Vector feature_layer_case1(const Vector &mu);

struct DenseLayer
{
  Eigen::MatrixXd W;  // out × in
  Vector b;
  Activation act = Activation::LeakyRelu;
  bool learnable = true;
};

//
// Feedforward network acting on columns (one sample per column). Raw inputs are first
// rescaled from their bounds to [-1, 1] when a normalization is set, then passed through the
// fixed feature layer, then through the dense stack.
//
class DenseNetwork
{
public:
  DenseNetwork() = default;

  // dims = [d₀, …, d_L] for the dense stack (d₀ = 225 with the Sines225 feature layer);
  // acts has L entries. Weights are Glorot-uniform from rng, biases zero.
  static DenseNetwork Create(const std::vector<int> &dims, const std::vector<Activation> &acts,
                             Rng &rng, FeatureKind feature = FeatureKind::None);

  // Layers of `second` appended after those of `first`; keeps first's preprocessing.
  static DenseNetwork Compose(const DenseNetwork &first, const DenseNetwork &second);

  int input_dim() const;  // raw input dimension
  int output_dim() const;
  int n_params() const;
  FeatureKind feature() const { return feature_; }
  const std::vector<DenseLayer> &layers() const { return layers_; }
  std::vector<DenseLayer> &layers() { return layers_; }

  void set_normalization(const Bounds &bounds);
  const Bounds &normalization() const { return normalization_; }

  // Learnable parameters: per layer, W in column-major order followed by b.
  Vector params() const;
  void set_params(const Vector &theta);

  Eigen::MatrixXd Preprocess(const Eigen::MatrixXd &X) const;
  Eigen::MatrixXd Forward(const Eigen::MatrixXd &X) const;
  Vector Forward(const Vector &x) const;

  struct Tape
  {
    std::vector<Eigen::MatrixXd> inputs;  // input of each dense layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each dense layer
  };
  // Dense stack only, on preprocessed inputs Z.
  Eigen::MatrixXd ForwardDense(const Eigen::MatrixXd &Z, Tape *tape = nullptr) const;
  // Adds ∂L/∂θ to grad (length n_params) and returns ∂L/∂Z.
  Eigen::MatrixXd Backward(const Tape &tape, const Eigen::MatrixXd &dY,
                           Eigen::Ref<Vector> grad) const;

  nlohmann::json Describe() const;
  // Writes <dir>/<name>.json plus weight blobs <dir>/<name>_W<i>, <dir>/<name>_b<i>.
  void Save(const std::string &dir, const std::string &name) const;
  static DenseNetwork Load(const std::string &dir, const std::string &name);

private:
  std::vector<DenseLayer> layers_;
  FeatureKind feature_ = FeatureKind::None;
  Bounds normalization_;
};

enum class Optimizer
{
  Lbfgs,
  Adam
};

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string &name);

struct TrainConfig
{
  Optimizer optimizer = Optimizer::Lbfgs;
  int epochs = 500;
  // L-BFGS iterations per epoch (each with its own line search).
  int iterations_per_epoch = 20;
  // Defaults: 1 for L-BFGS, 1e-3 for Adam.
  std::optional<double> learning_rate;
  int history = 10;
  double tolerance_grad = 1e-7;
  double tolerance_change = 1e-9;
  double lambda = 1.0;  // DL-ROM latent regularization weight
  std::uint64_t seed = 0;

  void Validate() const;
  double lr() const;
};

struct TrainResult
{
  std::vector<double> history;  // loss before training, then after every epoch
  long evaluations = 0;         // objective + gradient evaluations
  int epochs_run = 0;
  bool converged = false;      // gradient tolerance met, or an epoch made no progress
};

// Value of the objective at θ; writes the gradient when grad is non-null.
using Objective = std::function<double(const Vector &theta, Vector *grad)>;

// Full-batch minimization. Throws TrainingError with the epoch index on a non-finite loss.
TrainResult minimize(const Objective &objective, Vector &theta, const TrainConfig &cfg);

//
// Losses. Samples are columns; MU holds raw network inputs.
//

// (1/N) Σ ‖cᵢ − 𝒩(μᵢ)‖².
double loss_pod(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &C,
                Vector *grad);
// (1/N) Σ ‖q₀ⁱ − S₀ 𝒩(μᵢ)‖²_M.
double loss_kernel(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                   const KernelMap &S0, const SparseMatrix &M, Vector *grad);
// (1/N) Σ ‖qⁱ − Φ(μᵢ)‖²_X with X = Mq or Hdiv.
double loss_blackbox(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q,
                     const SparseMatrix &X, Vector *grad);

// Potential network Ψ∘φ plus the auxiliary encoder Ψ′.
struct DlromNetworks
{
  DenseNetwork phi, psi, encoder;

  int n_params() const { return phi.n_params() + psi.n_params() + encoder.n_params(); }
  Vector params() const;
  void set_params(const Vector &theta);
  DenseNetwork Potential() const { return DenseNetwork::Compose(phi, psi); }
};

// (1/N) Σ ‖q₀ⁱ − S₀ Ψ(φ(μᵢ))‖²_M + λ (1/N) Σ ‖Ψ′(q₀ⁱ) − φ(μᵢ)‖².
double loss_dlrom(const DlromNetworks &nets, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                  const KernelMap &S0, const SparseMatrix &M, double lambda, Vector *grad);

TrainResult train_podnn(DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &C,
                        const TrainConfig &cfg);
TrainResult train_dlrom(DlromNetworks &nets, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                        const KernelMap &S0, const SparseMatrix &M, const TrainConfig &cfg);
TrainResult train_blackbox(DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q,
                           const SparseMatrix &X, const TrainConfig &cfg);

}  // namespace cml

#endif  // CML_NN_HPP
