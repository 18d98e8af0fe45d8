// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/nn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include "cml/error.hpp"

namespace cml
{

double activate(Activation a, double x)
{
  if (a == Activation::LeakyRelu && x < 0.0)
  {
    return kLeakySlope * x;
  }
  return x;
}

double activate_derivative(Activation a, double x)
{
  if (a == Activation::LeakyRelu && x < 0.0)
  {
    return kLeakySlope;
  }
  return 1.0;
}

namespace
{

std::string activation_name(Activation a)
{
  return a == Activation::LeakyRelu ? "leaky_relu_0.1" : "identity";
}

Activation activation_from_name(const std::string &s)
{
  if (s == "leaky_relu_0.1")
  {
    return Activation::LeakyRelu;
  }
  if (s == "identity")
  {
    return Activation::Identity;
  }
  throw ValidationError("unknown activation '" + s + "'");
}

std::string feature_name(FeatureKind f)
{
  return f == FeatureKind::Sines225 ? "sines225" : "none";
}

FeatureKind feature_from_name(const std::string &s)
{
  if (s == "sines225")
  {
    return FeatureKind::Sines225;
  }
  if (s == "none")
  {
    return FeatureKind::None;
  }
  throw ValidationError("unknown feature layer '" + s + "'");
}

void apply_activation(Activation a, Eigen::MatrixXd &X)
{
  if (a == Activation::LeakyRelu)
  {
    X = X.unaryExpr([](double v) { return v < 0.0 ? kLeakySlope * v : v; });
  }
}

}  // namespace

Vector feature_layer_case1(const Vector &mu)
{
  if (mu.size() != 2)
  {
    throw InvalidArgument("feature layer expects two parameters");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Vector out(225);
  for (int j = 1; j <= 225; j++)
  {
    const int m = j % 15;
    out[j - 1] = std::sin(two_pi * mu[0] * m / 14.0) * std::sin(two_pi * mu[1] * (j - m) / 210.0);
  }
  return out;
}

DenseNetwork DenseNetwork::Create(const std::vector<int> &dims,
                                  const std::vector<Activation> &acts, Rng &rng,
                                  FeatureKind feature)
{
  if (dims.size() < 2 || acts.size() + 1 != dims.size())
  {
    throw InvalidArgument("network needs L+1 dimensions and L activations");
  }
  if (feature == FeatureKind::Sines225 && dims[0] != 225)
  {
    throw InvalidArgument("the sine feature layer produces 225 inputs");
  }
  DenseNetwork net;
  net.feature_ = feature;
  for (std::size_t l = 0; l + 1 < dims.size(); l++)
  {
    const int in = dims[l], out = dims[l + 1];
    if (in < 1 || out < 1)
    {
      throw InvalidArgument("layer dimensions must be positive");
    }
    DenseLayer layer;
    layer.W.resize(out, in);
    const double limit = std::sqrt(6.0 / (in + out));
    for (int j = 0; j < in; j++)
    {
      for (int i = 0; i < out; i++)
      {
        layer.W(i, j) = rng.Uniform(-limit, limit);
      }
    }
    layer.b = Vector::Zero(out);
    layer.act = acts[l];
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

DenseNetwork DenseNetwork::Compose(const DenseNetwork &first, const DenseNetwork &second)
{
  if (first.output_dim() != second.layers_.front().W.cols() ||
      second.feature_ != FeatureKind::None || !second.normalization_.empty())
  {
    throw InvalidArgument("networks do not compose");
  }
  DenseNetwork net = first;
  net.layers_.insert(net.layers_.end(), second.layers_.begin(), second.layers_.end());
  return net;
}

int DenseNetwork::input_dim() const
{
  if (feature_ == FeatureKind::Sines225)
  {
    return 2;
  }
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().W.cols());
}

int DenseNetwork::output_dim() const
{
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().W.rows());
}

int DenseNetwork::n_params() const
{
  int n = 0;
  for (const auto &l : layers_)
  {
    if (l.learnable)
    {
      n += static_cast<int>(l.W.size() + l.b.size());
    }
  }
  return n;
}

void DenseNetwork::set_normalization(const Bounds &bounds)
{
  if (feature_ != FeatureKind::None)
  {
    throw InvalidArgument("the feature layer consumes raw parameters");
  }
  if (static_cast<int>(bounds.size()) != input_dim())
  {
    throw InvalidArgument("normalization bounds do not match the input dimension");
  }
  for (const auto &b : bounds)
  {
    if (!(b[1] > b[0]))
    {
      throw InvalidArgument("normalization bounds must be increasing");
    }
  }
  normalization_ = bounds;
}

Vector DenseNetwork::params() const
{
  Vector theta(n_params());
  Eigen::Index k = 0;
  for (const auto &l : layers_)
  {
    if (!l.learnable)
    {
      continue;
    }
    theta.segment(k, l.W.size()) = l.W.reshaped();
    k += l.W.size();
    theta.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return theta;
}

void DenseNetwork::set_params(const Vector &theta)
{
  if (theta.size() != n_params())
  {
    throw InvalidArgument("parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (auto &l : layers_)
  {
    if (!l.learnable)
    {
      continue;
    }
    l.W.reshaped() = theta.segment(k, l.W.size());
    k += l.W.size();
    l.b = theta.segment(k, l.b.size());
    k += l.b.size();
  }
}

Eigen::MatrixXd DenseNetwork::Preprocess(const Eigen::MatrixXd &X) const
{
  if (X.rows() != input_dim())
  {
    throw InvalidArgument("network input has " + std::to_string(X.rows()) + " rows, expected " +
                          std::to_string(input_dim()));
  }
  Eigen::MatrixXd Z = X;
  for (std::size_t i = 0; i < normalization_.size(); i++)
  {
    const double lo = normalization_[i][0], hi = normalization_[i][1];
    Z.row(i) = ((Z.row(i).array() - lo) * (2.0 / (hi - lo)) - 1.0).matrix();
  }
  if (feature_ == FeatureKind::Sines225)
  {
    Eigen::MatrixXd F(225, Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); j++)
    {
      F.col(j) = feature_layer_case1(Vector(Z.col(j)));
    }
    return F;
  }
  return Z;
}

Eigen::MatrixXd DenseNetwork::ForwardDense(const Eigen::MatrixXd &Z, Tape *tape) const
{
  if (layers_.empty() || Z.rows() != layers_.front().W.cols())
  {
    throw InvalidArgument("dense stack input has the wrong dimension");
  }
  if (tape)
  {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Eigen::MatrixXd X = Z;
  for (const auto &l : layers_)
  {
    Eigen::MatrixXd P = l.W * X;
    P.colwise() += l.b;
    if (tape)
    {
      tape->inputs.push_back(std::move(X));
      tape->pre.push_back(P);
    }
    apply_activation(l.act, P);
    X = std::move(P);
  }
  return X;
}

Eigen::MatrixXd DenseNetwork::Forward(const Eigen::MatrixXd &X) const
{
  return ForwardDense(Preprocess(X));
}

Vector DenseNetwork::Forward(const Vector &x) const
{
  return ForwardDense(Preprocess(Eigen::MatrixXd(x))).col(0);
}

Eigen::MatrixXd DenseNetwork::Backward(const Tape &tape, const Eigen::MatrixXd &dY,
                                       Eigen::Ref<Vector> grad) const
{
  if (grad.size() != n_params() || tape.pre.size() != layers_.size())
  {
    throw InvalidArgument("backward: gradient buffer or tape does not match the network");
  }
  // Offsets of each learnable layer in the flat parameter vector.
  std::vector<Eigen::Index> offset(layers_.size(), 0);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers_.size(); l++)
  {
    offset[l] = k;
    if (layers_[l].learnable)
    {
      k += layers_[l].W.size() + layers_[l].b.size();
    }
  }
  Eigen::MatrixXd D = dY;
  for (std::size_t l = layers_.size(); l-- > 0;)
  {
    const auto &layer = layers_[l];
    if (layer.act == Activation::LeakyRelu)
    {
      D = D.cwiseProduct(tape.pre[l].unaryExpr(
          [](double v) { return activate_derivative(Activation::LeakyRelu, v); }));
    }
    if (layer.learnable)
    {
      const Eigen::Index nw = layer.W.size();
      Eigen::MatrixXd gW = D * tape.inputs[l].transpose();
      grad.segment(offset[l], nw) += gW.reshaped();
      grad.segment(offset[l] + nw, layer.b.size()) += D.rowwise().sum();
    }
    D = layer.W.transpose() * D;
  }
  return D;
}

nlohmann::json DenseNetwork::Describe() const
{
  nlohmann::json j;
  j["feature"] = feature_name(feature_);
  j["normalization"] = nlohmann::json::array();
  for (const auto &b : normalization_)
  {
    j["normalization"].push_back({b[0], b[1]});
  }
  j["layers"] = nlohmann::json::array();
  for (const auto &l : layers_)
  {
    j["layers"].push_back({{"in", l.W.cols()},
                           {"out", l.W.rows()},
                           {"activation", activation_name(l.act)},
                           {"learnable", l.learnable}});
  }
  return j;
}

void DenseNetwork::Save(const std::string &dir, const std::string &name) const
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / (name + ".json"));
  out << Describe().dump(2) << "\n";
  if (!out)
  {
    throw Error("cannot write network description to " + dir);
  }
  for (std::size_t l = 0; l < layers_.size(); l++)
  {
    const std::string base = (fs::path(dir) / name).string();
    write_dense(base + "_W" + std::to_string(l), DenseMatrix(layers_[l].W));
    write_dense(base + "_b" + std::to_string(l), DenseMatrix(layers_[l].b));
  }
}

DenseNetwork DenseNetwork::Load(const std::string &dir, const std::string &name)
{
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / (name + ".json"));
  if (!in)
  {
    throw ValidationError("missing network description " + name + ".json in " + dir);
  }
  nlohmann::json j;
  try
  {
    in >> j;
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ValidationError(std::string("network description: ") + e.what());
  }
  DenseNetwork net;
  net.feature_ = feature_from_name(j.at("feature").get<std::string>());
  for (const auto &b : j.at("normalization"))
  {
    net.normalization_.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  }
  const auto &layers = j.at("layers");
  for (std::size_t l = 0; l < layers.size(); l++)
  {
    const std::string base = (fs::path(dir) / name).string();
    DenseLayer layer;
    layer.W = read_dense(base + "_W" + std::to_string(l));
    const DenseMatrix b = read_dense(base + "_b" + std::to_string(l));
    layer.b = b.reshaped();
    layer.act = activation_from_name(layers[l].at("activation").get<std::string>());
    layer.learnable = layers[l].at("learnable").get<bool>();
    if (layer.W.rows() != layers[l].at("out").get<int>() ||
        layer.W.cols() != layers[l].at("in").get<int>() || layer.b.size() != layer.W.rows())
    {
      throw ValidationError("network layer " + std::to_string(l) +
                            " weights do not match the description");
    }
    if (!net.layers_.empty() && net.layers_.back().W.rows() != layer.W.cols())
    {
      throw ValidationError("network layer dimensions do not compose");
    }
    net.layers_.push_back(std::move(layer));
  }
  if (net.layers_.empty())
  {
    throw ValidationError("network has no layers");
  }
  return net;
}

std::string to_string(Optimizer o)
{
  return o == Optimizer::Adam ? "adam" : "lbfgs";
}

Optimizer optimizer_from_string(const std::string &name)
{
  if (name == "lbfgs")
  {
    return Optimizer::Lbfgs;
  }
  if (name == "adam")
  {
    return Optimizer::Adam;
  }
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

void TrainConfig::Validate() const
{
  if (epochs < 1)
  {
    throw InvalidArgument("epochs must be at least 1");
  }
  if (iterations_per_epoch < 1 || history < 1)
  {
    throw InvalidArgument("iterations_per_epoch and history must be at least 1");
  }
  if (!(lambda >= 0.0))
  {
    throw InvalidArgument("lambda must be non-negative");
  }
  if (learning_rate && !(*learning_rate > 0.0))
  {
    throw InvalidArgument("learning_rate must be positive");
  }
}

double TrainConfig::lr() const
{
  if (learning_rate)
  {
    return *learning_rate;
  }
  return optimizer == Optimizer::Adam ? 1e-3 : 1.0;
}

namespace
{

struct Probe
{
  double f;
  Vector g;
  double gtd;
};

double sanitize(double f)
{
  return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
}

// Minimizer of the cubic interpolating (x1, f1, g1) and (x2, f2, g2), clamped to [lo, hi].
double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi)
{
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (std::isfinite(d2sq) && d2sq >= 0.0)
  {
    const double d2 = std::sqrt(d2sq);
    const double t = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                              : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(t))
    {
      return std::clamp(t, lo, hi);
    }
  }
  return 0.5 * (lo + hi);
}

struct LineSearchResult
{
  double t;
  Probe at;
  int evaluations;
};

// Bracketing and zoom phases for the strong Wolfe conditions (c₁ = 1e-4, c₂ = 0.9) with cubic
// interpolation. Returns the lowest bracket point, which never increases the objective.
LineSearchResult strong_wolfe(const Objective &obj, const Vector &x, double t, const Vector &d,
                              const Probe &p0, double tolerance_change)
{
  constexpr double c1 = 1e-4, c2 = 0.9;
  constexpr int max_ls = 25;
  const double d_norm = d.cwiseAbs().maxCoeff();
  auto probe = [&](double step) {
    Probe p;
    p.f = sanitize(obj(x + step * d, &p.g));
    if (!p.g.allFinite())
    {
      p.f = std::numeric_limits<double>::infinity();
      p.g = Vector::Zero(x.size());
    }
    p.gtd = p.g.dot(d);
    return p;
  };

  Probe pn = probe(t);
  int evals = 1;
  double t_prev = 0.0;
  Probe pp = p0;
  bool done = false;
  int ls_iter = 0;
  std::array<double, 2> bt{};
  std::array<Probe, 2> bp;
  int nb = 0;
  while (ls_iter < max_ls)
  {
    if (pn.f > p0.f + c1 * t * p0.gtd || (ls_iter > 1 && pn.f >= pp.f))
    {
      bt = {t_prev, t};
      bp = {pp, pn};
      nb = 2;
      break;
    }
    if (std::abs(pn.gtd) <= -c2 * p0.gtd)
    {
      bt[0] = t;
      bp[0] = pn;
      nb = 1;
      done = true;
      break;
    }
    if (pn.gtd >= 0.0)
    {
      bt = {t_prev, t};
      bp = {pp, pn};
      nb = 2;
      break;
    }
    const double lo = t + 0.01 * (t - t_prev), hi = 10.0 * t;
    const double t_new = cubic_interpolate(t_prev, pp.f, pp.gtd, t, pn.f, pn.gtd, lo, hi);
    t_prev = t;
    pp = pn;
    t = t_new;
    pn = probe(t);
    evals++;
    ls_iter++;
  }
  if (ls_iter == max_ls)
  {
    bt = {0.0, t};
    bp = {p0, pn};
    nb = 2;
  }

  if (nb == 2)
  {
    bool insufficient = false;
    int low = bp[0].f <= bp[1].f ? 0 : 1;
    int high = 1 - low;
    while (!done && ls_iter < max_ls)
    {
      if (std::abs(bt[1] - bt[0]) * d_norm < tolerance_change)
      {
        break;
      }
      const double bmin = std::min(bt[0], bt[1]), bmax = std::max(bt[0], bt[1]);
      t = cubic_interpolate(bt[0], bp[0].f, bp[0].gtd, bt[1], bp[1].f, bp[1].gtd, bmin, bmax);
      const double eps = 0.1 * (bmax - bmin);
      if (std::min(bmax - t, t - bmin) < eps)
      {
        if (insufficient || t >= bmax || t <= bmin)
        {
          t = std::abs(t - bmax) < std::abs(t - bmin) ? bmax - eps : bmin + eps;
          insufficient = false;
        }
        else
        {
          insufficient = true;
        }
      }
      else
      {
        insufficient = false;
      }
      pn = probe(t);
      evals++;
      ls_iter++;
      if (pn.f > p0.f + c1 * t * p0.gtd || pn.f >= bp[low].f)
      {
        bt[high] = t;
        bp[high] = pn;
        low = bp[0].f <= bp[1].f ? 0 : 1;
        high = 1 - low;
      }
      else
      {
        if (std::abs(pn.gtd) <= -c2 * p0.gtd)
        {
          done = true;
        }
        else if (pn.gtd * (bt[high] - bt[low]) >= 0.0)
        {
          bt[high] = bt[low];
          bp[high] = bp[low];
        }
        bt[low] = t;
        bp[low] = pn;
      }
    }
    return {bt[low], bp[low], evals};
  }
  return {bt[0], bp[0], evals};
}

TrainResult minimize_lbfgs(const Objective &obj, Vector &x, const TrainConfig &cfg)
{
  TrainResult res;
  Probe cur;
  cur.f = obj(x, &cur.g);
  res.evaluations = 1;
  if (!std::isfinite(cur.f) || !cur.g.allFinite())
  {
    throw TrainingError("non-finite loss at the initial parameters", 0);
  }
  res.history.push_back(cur.f);
  if (cur.g.cwiseAbs().maxCoeff() <= cfg.tolerance_grad)
  {
    res.converged = true;
    return res;
  }
  const double lr = cfg.lr();
  std::deque<Vector> old_s, old_y;
  std::deque<double> old_rho;
  Vector d, g_prev;
  double t = 0.0, h_diag = 1.0;
  long n_iter = 0;
  // As with repeated torch steps, the change tests end the epoch, not the training. An epoch
  // that does not move leaves the state unchanged, so every later epoch would repeat it.
  for (int epoch = 1; epoch <= cfg.epochs && !res.converged; epoch++)
  {
    bool moved = false;
    for (int it = 0; it < cfg.iterations_per_epoch; it++)
    {
      n_iter++;
      if (n_iter == 1)
      {
        d = -cur.g;
        h_diag = 1.0;
      }
      else
      {
        const Vector y = cur.g - g_prev;
        const Vector s = t * d;
        const double ys = y.dot(s);
        if (ys > 1e-10)
        {
          if (static_cast<int>(old_s.size()) == cfg.history)
          {
            old_s.pop_front();
            old_y.pop_front();
            old_rho.pop_front();
          }
          old_s.push_back(s);
          old_y.push_back(y);
          old_rho.push_back(1.0 / ys);
          h_diag = ys / y.dot(y);
        }
        const std::size_t m = old_s.size();
        std::vector<double> alpha(m);
        Vector q = -cur.g;
        for (std::size_t i = m; i-- > 0;)
        {
          alpha[i] = old_s[i].dot(q) * old_rho[i];
          q -= alpha[i] * old_y[i];
        }
        d = q * h_diag;
        for (std::size_t i = 0; i < m; i++)
        {
          const double beta = old_y[i].dot(d) * old_rho[i];
          d += old_s[i] * (alpha[i] - beta);
        }
      }
      g_prev = cur.g;
      const double f_prev = cur.f;
      t = n_iter == 1 ? std::min(1.0, 1.0 / cur.g.cwiseAbs().sum()) * lr : lr;
      cur.gtd = cur.g.dot(d);
      if (cur.gtd > -cfg.tolerance_change)
      {
        break;
      }
      const LineSearchResult ls = strong_wolfe(obj, x, t, d, cur, cfg.tolerance_change);
      res.evaluations += ls.evaluations;
      t = ls.t;
      if (ls.at.f <= cur.f && t > 0.0)
      {
        x += t * d;
        cur = ls.at;
        moved = true;
      }
      else
      {
        t = 0.0;
      }
      if (!std::isfinite(cur.f))
      {
        throw TrainingError("non-finite loss", epoch);
      }
      if (cur.g.cwiseAbs().maxCoeff() <= cfg.tolerance_grad)
      {
        res.converged = true;
        break;
      }
      if ((d * t).cwiseAbs().maxCoeff() <= cfg.tolerance_change ||
          std::abs(cur.f - f_prev) < cfg.tolerance_change)
      {
        break;
      }
    }
    res.history.push_back(cur.f);
    res.epochs_run = epoch;
    res.converged = res.converged || !moved;
  }
  return res;
}

TrainResult minimize_adam(const Objective &obj, Vector &x, const TrainConfig &cfg)
{
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  TrainResult res;
  Vector g;
  double f = obj(x, &g);
  res.evaluations = 1;
  if (!std::isfinite(f) || !g.allFinite())
  {
    throw TrainingError("non-finite loss at the initial parameters", 0);
  }
  res.history.push_back(f);
  Vector m = Vector::Zero(x.size()), v = Vector::Zero(x.size());
  const double lr = cfg.lr();
  for (int epoch = 1; epoch <= cfg.epochs; epoch++)
  {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, epoch), c2 = 1.0 - std::pow(beta2, epoch);
    x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    f = obj(x, &g);
    res.evaluations++;
    if (!std::isfinite(f) || !g.allFinite())
    {
      throw TrainingError("non-finite loss", epoch);
    }
    res.history.push_back(f);
    res.epochs_run = epoch;
  }
  return res;
}

}  // namespace

TrainResult minimize(const Objective &objective, Vector &theta, const TrainConfig &cfg)
{
  cfg.Validate();
  return cfg.optimizer == Optimizer::Adam ? minimize_adam(objective, theta, cfg)
                                          : minimize_lbfgs(objective, theta, cfg);
}

double loss_pod(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &C,
                Vector *grad)
{
  const double n = static_cast<double>(MU.cols());
  DenseNetwork::Tape tape;
  const Eigen::MatrixXd Y = net.ForwardDense(net.Preprocess(MU), grad ? &tape : nullptr);
  if (Y.rows() != C.rows() || Y.cols() != C.cols())
  {
    throw InvalidArgument("POD targets do not match the network output");
  }
  const Eigen::MatrixXd R = Y - C;
  if (grad)
  {
    *grad = Vector::Zero(net.n_params());
    net.Backward(tape, (2.0 / n) * R, *grad);
  }
  return R.squaredNorm() / n;
}

double loss_kernel(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                   const KernelMap &S0, const SparseMatrix &M, Vector *grad)
{
  const double n = static_cast<double>(MU.cols());
  DenseNetwork::Tape tape;
  const Eigen::MatrixXd Y = net.ForwardDense(net.Preprocess(MU), grad ? &tape : nullptr);
  const Eigen::MatrixXd R = Q0 - S0.Apply(Y);
  const Eigen::MatrixXd MR = M.Mult(R);
  if (grad)
  {
    *grad = Vector::Zero(net.n_params());
    net.Backward(tape, S0.ApplyTranspose(Eigen::MatrixXd((-2.0 / n) * MR)), *grad);
  }
  return (R.array() * MR.array()).sum() / n;
}

double loss_blackbox(const DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q,
                     const SparseMatrix &X, Vector *grad)
{
  const double n = static_cast<double>(MU.cols());
  DenseNetwork::Tape tape;
  const Eigen::MatrixXd Y = net.ForwardDense(net.Preprocess(MU), grad ? &tape : nullptr);
  if (Y.rows() != Q.rows() || Y.cols() != Q.cols())
  {
    throw InvalidArgument("black-box targets do not match the network output");
  }
  const Eigen::MatrixXd R = Q - Y;
  const Eigen::MatrixXd XR = X.Mult(R);
  if (grad)
  {
    *grad = Vector::Zero(net.n_params());
    net.Backward(tape, (-2.0 / n) * XR, *grad);
  }
  return (R.array() * XR.array()).sum() / n;
}

Vector DlromNetworks::params() const
{
  Vector theta(n_params());
  theta << phi.params(), psi.params(), encoder.params();
  return theta;
}

void DlromNetworks::set_params(const Vector &theta)
{
  if (theta.size() != n_params())
  {
    throw InvalidArgument("parameter vector has the wrong length");
  }
  const int a = phi.n_params(), b = psi.n_params();
  phi.set_params(theta.head(a));
  psi.set_params(theta.segment(a, b));
  encoder.set_params(theta.tail(encoder.n_params()));
}

double loss_dlrom(const DlromNetworks &nets, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                  const KernelMap &S0, const SparseMatrix &M, double lambda, Vector *grad)
{
  if (!(lambda >= 0.0))
  {
    throw InvalidArgument("lambda must be non-negative");
  }
  if (nets.phi.output_dim() != nets.encoder.output_dim() ||
      nets.psi.input_dim() != nets.phi.output_dim())
  {
    throw InvalidArgument("DL-ROM latent dimensions disagree");
  }
  const double n = static_cast<double>(MU.cols());
  DenseNetwork::Tape tphi, tpsi, tenc;
  const bool g = grad != nullptr;
  const Eigen::MatrixXd L = nets.phi.ForwardDense(nets.phi.Preprocess(MU), g ? &tphi : nullptr);
  const Eigen::MatrixXd Y = nets.psi.ForwardDense(L, g ? &tpsi : nullptr);
  const Eigen::MatrixXd R = Q0 - S0.Apply(Y);
  const Eigen::MatrixXd MR = M.Mult(R);
  const Eigen::MatrixXd E = nets.encoder.ForwardDense(nets.encoder.Preprocess(Q0),
                                                      g ? &tenc : nullptr);
  const Eigen::MatrixXd D = E - L;
  const double loss = (R.array() * MR.array()).sum() / n + lambda * D.squaredNorm() / n;
  if (g)
  {
    *grad = Vector::Zero(nets.n_params());
    const int a = nets.phi.n_params(), b = nets.psi.n_params();
    const Eigen::MatrixXd dY = S0.ApplyTranspose(Eigen::MatrixXd((-2.0 / n) * MR));
    Eigen::MatrixXd dL = nets.psi.Backward(tpsi, dY, grad->segment(a, b));
    const Eigen::MatrixXd dD = (2.0 * lambda / n) * D;
    dL -= dD;
    nets.phi.Backward(tphi, dL, grad->head(a));
    nets.encoder.Backward(tenc, dD, grad->tail(nets.encoder.n_params()));
  }
  return loss;
}

TrainResult train_podnn(DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &C,
                        const TrainConfig &cfg)
{
  Vector theta = net.params();
  DenseNetwork work = net;
  const TrainResult res = minimize(
      [&](const Vector &th, Vector *grad) {
        work.set_params(th);
        return loss_pod(work, MU, C, grad);
      },
      theta, cfg);
  net.set_params(theta);
  return res;
}

TrainResult train_dlrom(DlromNetworks &nets, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q0,
                        const KernelMap &S0, const SparseMatrix &M, const TrainConfig &cfg)
{
  cfg.Validate();
  Vector theta = nets.params();
  DlromNetworks work = nets;
  const TrainResult res = minimize(
      [&](const Vector &th, Vector *grad) {
        work.set_params(th);
        return loss_dlrom(work, MU, Q0, S0, M, cfg.lambda, grad);
      },
      theta, cfg);
  nets.set_params(theta);
  return res;
}

TrainResult train_blackbox(DenseNetwork &net, const Eigen::MatrixXd &MU, const Eigen::MatrixXd &Q,
                           const SparseMatrix &X, const TrainConfig &cfg)
{
  Vector theta = net.params();
  DenseNetwork work = net;
  const TrainResult res = minimize(
      [&](const Vector &th, Vector *grad) {
        work.set_params(th);
        return loss_blackbox(work, MU, Q, X, grad);
      },
      theta, cfg);
  net.set_params(theta);
  return res;
}

}  // namespace cml
