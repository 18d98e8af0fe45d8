// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/rom.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>
#include "cml/error.hpp"

namespace cml
{

std::string to_string(RomVariant v)
{
  switch (v)
  {
    case RomVariant::PodNn:
      return "podnn";
    case RomVariant::CurlDlrom:
      return "curl_dlrom";
    case RomVariant::SptDlrom:
      return "spt_dlrom";
    case RomVariant::BlackboxL2:
      return "blackbox_l2";
    case RomVariant::BlackboxHdiv:
      return "blackbox_hdiv";
  }
  return "?";
}

RomVariant variant_from_string(const std::string &name)
{
  for (RomVariant v : all_variants())
  {
    if (to_string(v) == name)
    {
      return v;
    }
  }
  throw InvalidArgument("unknown ROM variant '" + name + "'");
}

std::string display_name(RomVariant v)
{
  switch (v)
  {
    case RomVariant::PodNn:
      return "Conservative POD-NN";
    case RomVariant::CurlDlrom:
      return "Curl DL-ROM";
    case RomVariant::SptDlrom:
      return "SpT DL-ROM";
    case RomVariant::BlackboxL2:
      return "Black-box (L2 loss)";
    case RomVariant::BlackboxHdiv:
      return "Black-box (H(div) loss)";
  }
  return "?";
}

std::string kernel_label(RomVariant v)
{
  switch (v)
  {
    case RomVariant::PodNn:
      return "POD";
    case RomVariant::CurlDlrom:
      return "Curl";
    case RomVariant::SptDlrom:
      return "I - S_I B";
    default:
      return "-";
  }
}

bool is_conservative(RomVariant v)
{
  return v == RomVariant::PodNn || v == RomVariant::CurlDlrom || v == RomVariant::SptDlrom;
}

const std::vector<RomVariant> &all_variants()
{
  static const std::vector<RomVariant> v = {RomVariant::PodNn, RomVariant::CurlDlrom,
                                            RomVariant::SptDlrom, RomVariant::BlackboxL2,
                                            RomVariant::BlackboxHdiv};
  return v;
}

Architecture Architecture::Preset(CaseTag tag)
{
  Architecture a;
  if (tag == CaseTag::Sines2D)
  {
    a.feature_layer = true;
    a.podnn_hidden = {100, 100};
    a.pod_modes = 100;
    a.phi_hidden = {};
    a.latent = 100;
    a.psi_hidden = {200};
    a.encoder_hidden = {100};
    a.blackbox_hidden = {100, 200, 500};
  }
  else
  {
    a.feature_layer = false;
    a.podnn_hidden = {50, 50, 100};
    a.pod_modes = 4;
    a.phi_hidden = {50, 50};
    a.latent = 4;
    a.psi_hidden = {50};
    a.encoder_hidden = {};
    a.blackbox_hidden = {50, 50, 4, 50};
  }
  return a;
}

void Architecture::Validate() const
{
  auto check = [](const std::vector<int> &w, const char *name) {
    for (int x : w)
    {
      if (x < 1)
      {
        throw InvalidArgument(std::string("arch.") + name + ": layer widths must be >= 1");
      }
    }
  };
  check(podnn_hidden, "podnn_hidden");
  check(phi_hidden, "phi_hidden");
  check(psi_hidden, "psi_hidden");
  check(encoder_hidden, "encoder_hidden");
  check(blackbox_hidden, "blackbox_hidden");
  if (pod_modes < 1)
  {
    throw InvalidArgument("arch.pod_modes must be >= 1");
  }
  if (latent < 1)
  {
    throw InvalidArgument("arch.latent must be >= 1");
  }
}

nlohmann::json Architecture::ToJson() const
{
  return {{"feature_layer", feature_layer}, {"podnn_hidden", podnn_hidden},
          {"pod_modes", pod_modes},         {"phi_hidden", phi_hidden},
          {"latent", latent},               {"psi_hidden", psi_hidden},
          {"encoder_hidden", encoder_hidden}, {"blackbox_hidden", blackbox_hidden}};
}

namespace
{

Eigen::MatrixXd parameter_matrix(const std::vector<Snapshot> &s)
{
  Eigen::MatrixXd MU(s.front().mu.size(), s.size());
  for (std::size_t i = 0; i < s.size(); i++)
  {
    MU.col(i) = s[i].mu;
  }
  return MU;
}

Eigen::MatrixXd flux_matrix(const std::vector<Snapshot> &s)
{
  Eigen::MatrixXd Q(s.front().q.size(), s.size());
  for (std::size_t i = 0; i < s.size(); i++)
  {
    Q.col(i) = s[i].q;
  }
  return Q;
}

// Network on the raw parameters: [input, hidden..., out] with leaky hidden layers and the given
// final activation.
DenseNetwork parameter_network(const ProblemSpec &spec, const Architecture &arch,
                               const std::vector<int> &hidden, int out, Activation last, Rng &rng)
{
  std::vector<int> dims = {arch.feature_layer ? 225 : spec.n_params()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  std::vector<Activation> acts(dims.size() - 1, Activation::LeakyRelu);
  acts.back() = last;
  if (arch.feature_layer)
  {
    if (spec.tag() != CaseTag::Sines2D)
    {
      throw InvalidArgument("the sine feature layer only applies to the sines2d case");
    }
    return DenseNetwork::Create(dims, acts, rng, FeatureKind::Sines225);
  }
  DenseNetwork net = DenseNetwork::Create(dims, acts, rng);
  net.set_normalization(spec.bounds());
  return net;
}

DenseNetwork plain_network(int in, const std::vector<int> &hidden, int out, Activation last,
                           Rng &rng)
{
  std::vector<int> dims = {in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  std::vector<Activation> acts(dims.size() - 1, Activation::LeakyRelu);
  acts.back() = last;
  return DenseNetwork::Create(dims, acts, rng);
}

template <typename F>
auto stage(const std::string &name, F &&f)
{
  try
  {
    return f();
  }
  catch (const TrainingError &)
  {
    throw;
  }
  catch (const InvalidArgument &e)
  {
    throw InvalidArgument(name + ": " + e.what());
  }
  catch (const NumericalError &e)
  {
    throw NumericalError(name + ": " + e.what());
  }
  catch (const Error &e)
  {
    throw Error(name + ": " + e.what());
  }
}

struct Parts
{
  RomModel model;
  DlromNetworks dlrom;
  Eigen::MatrixXd MU, Q0, C;
};

Parts assemble(RomVariant variant, const std::vector<Snapshot> &train,
               std::shared_ptr<const OperatorSet> ops,
               std::shared_ptr<const AveragedSolver> solver, const ProblemSpec &spec,
               const Architecture &arch, Rng &rng)
{
  if (train.empty())
  {
    throw InvalidArgument("build_rom: empty training set");
  }
  arch.Validate();
  Parts parts;
  RomModel &m = parts.model;
  m.variant = variant;
  m.spec = spec;
  m.ops = ops;
  m.solver = solver;
  parts.MU = parameter_matrix(train);
  const int ne = ops->mesh->n_edges();
  if (is_conservative(variant))
  {
    parts.Q0 = stage("homogeneous split", [&] { return homogeneous_snapshots(*ops, *solver, train); });
  }
  switch (variant)
  {
    case RomVariant::PodNn:
    {
      auto pod = std::make_shared<const PodBasis>(
          stage("POD", [&] { return build_pod(*ops, parts.Q0, arch.pod_modes, solver.get()); }));
      parts.C = pod->Project(*ops, parts.Q0);
      m.s0 = KernelMap::Pod(ops, pod);
      m.net = parameter_network(spec, arch, arch.podnn_hidden, pod->n(), Activation::Identity,
                                rng);
      break;
    }
    case RomVariant::CurlDlrom:
    case RomVariant::SptDlrom:
    {
      m.s0 = variant == RomVariant::CurlDlrom ? KernelMap::Curl(ops)
                                              : KernelMap::Projection(ops, solver);
      parts.dlrom.phi = parameter_network(spec, arch, arch.phi_hidden, arch.latent,
                                          Activation::LeakyRelu, rng);
      parts.dlrom.psi = plain_network(arch.latent, arch.psi_hidden, m.s0->potential_dim(),
                                      Activation::Identity, rng);
      parts.dlrom.encoder = plain_network(ne, arch.encoder_hidden, arch.latent,
                                          Activation::LeakyRelu, rng);
      m.net = parts.dlrom.Potential();
      break;
    }
    case RomVariant::BlackboxL2:
    case RomVariant::BlackboxHdiv:
      m.net = parameter_network(spec, arch, arch.blackbox_hidden, ne, Activation::Identity, rng);
      break;
  }
  return parts;
}

}  // namespace

RomModel build_rom(RomVariant variant, const std::vector<Snapshot> &train,
                   std::shared_ptr<const OperatorSet> ops,
                   std::shared_ptr<const AveragedSolver> solver, const ProblemSpec &spec,
                   const RomBuildConfig &cfg, Rng &rng, TrainLog *log)
{
  cfg.train.Validate();
  Parts parts = assemble(variant, train, ops, solver, spec, cfg.arch, rng);
  RomModel &m = parts.model;
  m.average_pressure_adjoint = cfg.average_pressure_adjoint;
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  switch (variant)
  {
    case RomVariant::PodNn:
      res = stage("train podnn", [&] { return train_podnn(m.net, parts.MU, parts.C, cfg.train); });
      break;
    case RomVariant::CurlDlrom:
    case RomVariant::SptDlrom:
      res = stage("train " + to_string(variant), [&] {
        return train_dlrom(parts.dlrom, parts.MU, parts.Q0, *m.s0, ops->Mq, cfg.train);
      });
      m.net = parts.dlrom.Potential();
      break;
    case RomVariant::BlackboxL2:
    case RomVariant::BlackboxHdiv:
    {
      const SparseMatrix &X = variant == RomVariant::BlackboxL2 ? ops->Mq : ops->Hdiv;
      const Eigen::MatrixXd Q = flux_matrix(train);
      res = stage("train " + to_string(variant),
                  [&] { return train_blackbox(m.net, parts.MU, Q, X, cfg.train); });
      break;
    }
  }
  if (log)
  {
    log->result = std::move(res);
    log->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return m;
}

RomModel untrained_rom(RomVariant variant, const std::vector<Snapshot> &train,
                       std::shared_ptr<const OperatorSet> ops,
                       std::shared_ptr<const AveragedSolver> solver, const ProblemSpec &spec,
                       const Architecture &arch, Rng &rng)
{
  return assemble(variant, train, ops, solver, spec, arch, rng).model;
}

Vector postprocess_pressure(const ProblemSpec &spec, const OperatorSet &ops,
                            const AveragedSolver &solver, const Vector &mu, const Vector &q,
                            bool average_adjoint)
{
  const Mesh2D &mesh = *ops.mesh;
  const Vector g = spec.rhs_vector(mesh, mu);
  const SparseMatrix A = spec.nonlinear()
                             ? assemble_flux_mass(mesh, spec.flux_coefficients(mesh, mu, q))
                             : ops.Mq;
  const Vector r = A.Mult(q) - g;
  return average_adjoint ? solver.ApplyAdjoint(r) : solver.ApplyAdjointFirst(r);
}

RomPrediction evaluate(const RomModel &model, const Vector &mu)
{
  model.spec.Validate(mu);
  RomPrediction out;
  const Vector y = model.net.Forward(mu);
  if (is_conservative(model.variant))
  {
    const Vector f = model.spec.source_vector(*model.ops->mesh, mu);
    out.q = model.solver->Apply(f) + model.s0->Apply(y);
  }
  else
  {
    out.q = y;
  }
  out.p = postprocess_pressure(model.spec, *model.ops, *model.solver, mu, out.q,
                               model.average_pressure_adjoint);
  return out;
}

SampleErrors sample_errors(const OperatorSet &ops, const Snapshot &ref, const RomPrediction &pred)
{
  SampleErrors s;
  const FluxNorms nq = norms(ops, ref.q);
  const FluxNorms ne = norms(ops, Vector(ref.q - pred.q));
  if (!(nq.l2 > 0.0))
  {
    s.excluded = true;
  }
  else
  {
    s.flux_l2 = ne.l2 / nq.l2;
    s.flux_hdiv = ne.hdiv / nq.hdiv;
  }
  const double np = pressure_l2(ops, ref.p);
  const double ep = pressure_l2(ops, Vector(ref.p - pred.p));
  s.pressure_l2 = np > 0.0 ? ep / np : ep;
  s.conservation = conservation_residual(ops, pred.q, ref.f_vec);
  s.conservation_bound = 1e-10 * (1.0 + ref.f_vec.lpNorm<Eigen::Infinity>());
  return s;
}

EvalReport error_metrics(const OperatorSet &ops, const std::vector<Snapshot> &test,
                         const std::vector<RomPrediction> &preds)
{
  if (test.empty() || preds.size() != test.size())
  {
    throw InvalidArgument("error_metrics: need one prediction per (nonempty) test sample");
  }
  EvalReport r;
  int used = 0;
  for (std::size_t i = 0; i < test.size(); i++)
  {
    r.samples.push_back(sample_errors(ops, test[i], preds[i]));
    const auto &s = r.samples.back();
    if (s.excluded)
    {
      r.warnings.push_back("sample " + std::to_string(i) +
                           ": reference flux has zero norm, excluded from the means");
      continue;
    }
    used++;
    r.mean_flux_l2 += s.flux_l2;
    r.mean_flux_hdiv += s.flux_hdiv;
    r.mean_pressure_l2 += s.pressure_l2;
  }
  if (used > 0)
  {
    r.mean_flux_l2 /= used;
    r.mean_flux_hdiv /= used;
    r.mean_pressure_l2 /= used;
  }
  return r;
}

EvalReport evaluate_model(const RomModel &model, const std::vector<Snapshot> &test,
                          std::vector<RomPrediction> *preds_out, int threads)
{
  const int n = static_cast<int>(test.size());
  std::vector<RomPrediction> preds(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](int w, int nw) {
    for (int i = w; i < n; i += nw)
    {
      try
      {
        preds[i] = evaluate(model, test[i].mu);
      }
      catch (...)
      {
        errors[i] = std::current_exception();
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
  EvalReport r = error_metrics(*model.ops, test, preds);
  if (preds_out)
  {
    *preds_out = std::move(preds);
  }
  return r;
}

void save_rom(const std::string &dir, const RomModel &model, const nlohmann::json &extra)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["variant"] = to_string(model.variant);
  j["case"] = to_string(model.spec.tag());
  j["bounds"] = model.spec.bounds();
  j["mesh_hash"] = hex64(model.ops->mesh->hash());
  j["average_pressure_adjoint"] = model.average_pressure_adjoint;
  j["trees"] = nlohmann::json::array();
  for (const auto &r : model.solver->recipes())
  {
    nlohmann::json t = {{"root_edge", r.root_edge}};
    t["shuffle_seed"] = r.shuffle_seed ? nlohmann::json(*r.shuffle_seed) : nlohmann::json();
    j["trees"].push_back(t);
  }
  j["kernel"] = model.s0 ? to_string(model.s0->variant()) : "none";
  j["network"] = model.net.Describe();
  j["extra"] = extra;
  std::ofstream out(fs::path(dir) / "model.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out)
  {
    throw Error("cannot write model description in " + dir);
  }
  model.net.Save(dir, "network");
  if (model.s0 && model.s0->pod())
  {
    write_pod((fs::path(dir) / "pod").string(), *model.s0->pod());
  }
  write_trees((fs::path(dir) / "trees").string(), *model.solver);
}

RomModel load_rom(const std::string &dir, std::shared_ptr<const OperatorSet> ops,
                  nlohmann::json *extra)
{
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "model.json");
  if (!in)
  {
    throw ValidationError("missing model.json in " + dir);
  }
  nlohmann::json j;
  try
  {
    in >> j;
    RomModel m;
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.spec = ProblemSpec::FromTag(case_from_string(j.at("case").get<std::string>()));
    m.spec.Restrict(j.at("bounds").get<Bounds>());
    if (j.at("mesh_hash").get<std::string>() != hex64(ops->mesh->hash()))
    {
      throw MismatchError("checkpoint " + dir + " was trained on a different mesh");
    }
    m.ops = ops;
    m.average_pressure_adjoint = j.at("average_pressure_adjoint").get<bool>();
    std::vector<TreeRecipe> recipes;
    for (const auto &t : j.at("trees"))
    {
      TreeRecipe r{t.at("root_edge").get<int>(), std::nullopt};
      if (!t.at("shuffle_seed").is_null())
      {
        r.shuffle_seed = t.at("shuffle_seed").get<std::uint64_t>();
      }
      recipes.push_back(r);
    }
    auto solver = std::make_shared<const AveragedSolver>(AveragedSolver::FromRecipes(*ops, recipes));
    verify_trees((fs::path(dir) / "trees").string(), *solver);
    m.solver = solver;
    const std::string kernel = j.at("kernel").get<std::string>();
    if (kernel == "pod")
    {
      m.s0 = KernelMap::Pod(
          ops, std::make_shared<const PodBasis>(read_pod((fs::path(dir) / "pod").string())));
    }
    else if (kernel == "curl")
    {
      m.s0 = KernelMap::Curl(ops);
    }
    else if (kernel == "projection")
    {
      m.s0 = KernelMap::Projection(ops, solver);
    }
    m.net = DenseNetwork::Load(dir, "network");
    const int expected = m.s0 ? m.s0->potential_dim() : ops->mesh->n_edges();
    if (m.net.output_dim() != expected || m.net.input_dim() != m.spec.n_params())
    {
      throw ValidationError("checkpoint " + dir + ": network dimensions do not fit the model");
    }
    if (extra)
    {
      *extra = j.value("extra", nlohmann::json::object());
    }
    return m;
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ValidationError("checkpoint " + dir + ": malformed model.json: " + e.what());
  }
}

}  // namespace cml
