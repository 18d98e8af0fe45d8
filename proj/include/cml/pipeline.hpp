// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_PIPELINE_HPP
#define CML_PIPELINE_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>
#include "cml/error.hpp"
#include "cml/rom.hpp"

namespace cml
{

// Bad or inconsistent configuration; the message names the offending key.
class ConfigError : public InvalidArgument
{
public:
  using InvalidArgument::InvalidArgument;
};

// A stage was asked to run before the stage it depends on.
class MissingStageError : public Error
{
public:
  using Error::Error;
};

//
// One experiment. Loaded from an INI file (see configs/ and README for the schema).
//
struct RunConfig
{
  CaseTag case_tag = CaseTag::Sines2D;
  std::optional<Bounds> bounds;  // defaults to the case's parameter box
  int mesh_n = 16;
  std::string mesh_file;         // overrides mesh_n when set
  int n_train = 300;
  int n_test = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  PicardOptions picard;
  int n_trees = 10;
  std::vector<RomVariant> variants = all_variants();
  bool average_pressure_adjoint = false;
  Architecture arch = Architecture::Preset(CaseTag::Sines2D);
  TrainConfig train;

  static RunConfig Load(const std::string &path);
  static RunConfig Parse(const std::string &text, const std::string &base_dir = ".");
  void Validate() const;

  ProblemSpec Spec() const;
  Mesh2D Mesh() const;

  // Canonical description of every field that affects results (threads excluded).
  nlohmann::json ToJson() const;
  // Hash of the fields that determine the snapshot archives.
  std::string DataHash() const;
  std::string ConfigHash() const;
};

// Deterministic per-purpose random streams derived from the run seed.
Rng stream(std::uint64_t seed, const std::string &purpose);

// Stage commands. `out` is the run directory shared by all stages. Progress goes to `log`.
void cmd_generate(const RunConfig &cfg, const std::string &out, std::ostream &log);
void cmd_train(const RunConfig &cfg, const std::string &out, std::ostream &log);
// With fom_self_check the FOM test solutions are scored against themselves.
void cmd_evaluate(const RunConfig &cfg, const std::string &out, std::ostream &log,
                  bool fom_self_check = false);
void cmd_report(const std::string &out, std::ostream &log);

// Process exit code for an exception escaping a stage command.
int exit_code_for(const std::exception &e, const std::string &command);

struct Quartiles
{
  double min, q1, median, q3, max;
};

// Linear interpolation between order statistics.
Quartiles quartiles(std::vector<double> values);

// "%.17g" rendering, used for every number written to disk.
std::string format_double(double x);

}  // namespace cml

#endif  // CML_PIPELINE_HPP
