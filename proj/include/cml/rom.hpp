// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_ROM_HPP
#define CML_ROM_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>
#include "cml/nn.hpp"

namespace cml
{

enum class RomVariant
{
  PodNn,
  CurlDlrom,
  SptDlrom,
  BlackboxL2,
  BlackboxHdiv
};

std::string to_string(RomVariant v);
RomVariant variant_from_string(const std::string &name);
std::string display_name(RomVariant v);
// Column "Map onto kernel" of the report table ("-" for black boxes).
std::string kernel_label(RomVariant v);
bool is_conservative(RomVariant v);
const std::vector<RomVariant> &all_variants();

//
// Layer widths for one case. Hidden layers use the leaky ReLU; the last layer of every
// potential and black-box network is linear. The DL-ROM latent layer (end of φ and of the
// encoder) keeps the leaky ReLU.
//
struct Architecture
{
  bool feature_layer = false;
  std::vector<int> podnn_hidden;
  int pod_modes = 1;
  std::vector<int> phi_hidden;
  int latent = 1;
  std::vector<int> psi_hidden;
  std::vector<int> encoder_hidden;
  std::vector<int> blackbox_hidden;

  static Architecture Preset(CaseTag tag);
  void Validate() const;
  nlohmann::json ToJson() const;
};

struct RomBuildConfig
{
  Architecture arch;
  TrainConfig train;
  bool average_pressure_adjoint = false;
};

//
// A trained surrogate. Conservative variants evaluate q̃ = S_I f + S₀ 𝒩(μ); black boxes
// evaluate q̃ = Φ(μ). Pressure is recovered as S_I*(A(q̃) q̃ − g).
//
struct RomModel
{
  RomVariant variant = RomVariant::PodNn;
  ProblemSpec spec;
  std::shared_ptr<const OperatorSet> ops;
  std::shared_ptr<const AveragedSolver> solver;
  std::optional<KernelMap> s0;
  DenseNetwork net;  // 𝒩 (Ψ∘φ for DL-ROMs) or Φ
  bool average_pressure_adjoint = false;
};

struct TrainLog
{
  TrainResult result;
  double seconds = 0.0;
};

struct RomPrediction
{
  Vector q, p;
};

// Offline pipeline: homogeneous split, kernel map, network construction and training.
// Errors from components are rethrown with the stage name prepended.
RomModel build_rom(RomVariant variant, const std::vector<Snapshot> &train,
                   std::shared_ptr<const OperatorSet> ops,
                   std::shared_ptr<const AveragedSolver> solver, const ProblemSpec &spec,
                   const RomBuildConfig &cfg, Rng &rng, TrainLog *log = nullptr);

// Same construction with untrained (randomly initialized) networks.
RomModel untrained_rom(RomVariant variant, const std::vector<Snapshot> &train,
                       std::shared_ptr<const OperatorSet> ops,
                       std::shared_ptr<const AveragedSolver> solver, const ProblemSpec &spec,
                       const Architecture &arch, Rng &rng);

// Throws DomainError for μ outside the parameter box.
RomPrediction evaluate(const RomModel &model, const Vector &mu);

// p̃ = S_I*(A(q) q − g) with A assembled at q.
Vector postprocess_pressure(const ProblemSpec &spec, const OperatorSet &ops,
                            const AveragedSolver &solver, const Vector &mu, const Vector &q,
                            bool average_adjoint);

struct SampleErrors
{
  double flux_l2 = 0.0;
  double flux_hdiv = 0.0;
  double pressure_l2 = 0.0;
  double conservation = 0.0;        // ‖B q̃ − f‖∞
  double conservation_bound = 0.0;  // 1e-10 (1 + ‖f‖∞)
  bool excluded = false;            // reference flux of zero norm
};

struct EvalReport
{
  std::vector<SampleErrors> samples;
  double mean_flux_l2 = 0.0;
  double mean_flux_hdiv = 0.0;
  double mean_pressure_l2 = 0.0;
  std::vector<std::string> warnings;
};

SampleErrors sample_errors(const OperatorSet &ops, const Snapshot &reference,
                           const RomPrediction &pred);
EvalReport error_metrics(const OperatorSet &ops, const std::vector<Snapshot> &test,
                         const std::vector<RomPrediction> &preds);
// Evaluates the model on every test sample (parallel over `threads`) and scores it.
EvalReport evaluate_model(const RomModel &model, const std::vector<Snapshot> &test,
                          std::vector<RomPrediction> *preds = nullptr, int threads = 1);

// Checkpoint directory: model.json, network blobs, POD basis, tree recipes.
void save_rom(const std::string &dir, const RomModel &model, const nlohmann::json &extra);
RomModel load_rom(const std::string &dir, std::shared_ptr<const OperatorSet> ops,
                  nlohmann::json *extra = nullptr);

}  // namespace cml

#endif  // CML_ROM_HPP
