// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "cml/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "cml/error.hpp"

namespace cml
{

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string format_double(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace
{

std::string trim(const std::string &s)
{
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos)
  {
    return "";
  }
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string &s, char sep)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep))
  {
    out.push_back(trim(item));
  }
  return out;
}

template <typename T>
T parse_number(const std::string &key, const std::string &text)
{
  const std::string s = trim(text);
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
  {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

bool parse_bool(const std::string &key, const std::string &text)
{
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes")
  {
    return true;
  }
  if (s == "false" || s == "0" || s == "no")
  {
    return false;
  }
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<int> parse_widths(const std::string &key, const std::string &text)
{
  std::vector<int> w;
  const std::string s = trim(text);
  if (s.empty() || s == "none")
  {
    return w;
  }
  for (const auto &item : split(s, ','))
  {
    w.push_back(parse_number<int>(key, item));
  }
  return w;
}

const std::map<std::string, std::set<std::string>> &schema()
{
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"case", "seed", "threads"}},
      {"problem", {"bounds"}},
      {"mesh", {"n", "file"}},
      {"data",
       {"n_train", "n_test", "picard_max_iterations", "picard_step_tol", "picard_residual_tol"}},
      {"rom", {"variants", "n_trees", "average_pressure_adjoint"}},
      {"arch",
       {"preset", "feature_layer", "pod_modes", "latent", "podnn_hidden", "phi_hidden",
        "psi_hidden", "encoder_hidden", "blackbox_hidden"}},
      {"train",
       {"optimizer", "epochs", "iterations_per_epoch", "learning_rate", "history", "lambda",
        "tolerance_grad", "tolerance_change"}}};
  return s;
}

nlohmann::json read_json(const fs::path &p)
{
  std::ifstream in(p);
  if (!in)
  {
    throw MissingStageError("missing " + p.string());
  }
  try
  {
    return nlohmann::json::parse(in);
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path &p, const std::string &text)
{
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out)
  {
    throw Error("cannot write " + p.string());
  }
}

}  // namespace

RunConfig RunConfig::Parse(const std::string &text, const std::string &base_dir)
{
  // Full-line comments may start with '#' or ';'.
  std::string cleaned;
  for (const auto &line : split(text, '\n'))
  {
    if (!line.empty() && line[0] != '#')
    {
      cleaned += line + "\n";
    }
  }
  pt::ptree tree;
  try
  {
    std::istringstream is(cleaned);
    pt::ini_parser::read_ini(is, tree);
  }
  catch (const pt::ini_parser_error &e)
  {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  for (const auto &[section, body] : tree)
  {
    const auto it = schema().find(section);
    if (it == schema().end() || body.empty())
    {
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto &[key, value] : body)
    {
      if (!it->second.count(key))
      {
        throw ConfigError("unknown config key " + section + "." + key);
      }
    }
  }
  auto get = [&](const std::string &path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.')))
    {
      return trim(*v);
    }
    return std::nullopt;
  };

  RunConfig c;
  if (auto v = get("run.case"))
  {
    try
    {
      c.case_tag = case_from_string(*v);
    }
    catch (const Error &)
    {
      throw ConfigError("run.case: unknown case '" + *v + "'");
    }
  }
  else
  {
    throw ConfigError("run.case is required");
  }
  if (auto v = get("run.seed"))
  {
    c.seed = parse_number<std::uint64_t>("run.seed", *v);
  }
  if (auto v = get("run.threads"))
  {
    c.threads = parse_number<int>("run.threads", *v);
  }
  if (auto v = get("problem.bounds"))
  {
    Bounds b;
    for (const auto &item : split(*v, ','))
    {
      const auto parts = split(item, ':');
      if (parts.size() != 2)
      {
        throw ConfigError("problem.bounds: each interval is written lo:hi, got '" + item + "'");
      }
      b.push_back({parse_number<double>("problem.bounds", parts[0]),
                   parse_number<double>("problem.bounds", parts[1])});
    }
    c.bounds = b;
  }
  if (auto v = get("mesh.n"))
  {
    c.mesh_n = parse_number<int>("mesh.n", *v);
  }
  if (auto v = get("mesh.file"))
  {
    c.mesh_file = fs::path(*v).is_absolute() ? *v : (fs::path(base_dir) / *v).string();
  }
  if (auto v = get("data.n_train"))
  {
    c.n_train = parse_number<int>("data.n_train", *v);
  }
  if (auto v = get("data.n_test"))
  {
    c.n_test = parse_number<int>("data.n_test", *v);
  }
  if (auto v = get("data.picard_max_iterations"))
  {
    c.picard.max_iterations = parse_number<int>("data.picard_max_iterations", *v);
  }
  if (auto v = get("data.picard_step_tol"))
  {
    c.picard.step_tol = parse_number<double>("data.picard_step_tol", *v);
  }
  if (auto v = get("data.picard_residual_tol"))
  {
    c.picard.residual_tol = parse_number<double>("data.picard_residual_tol", *v);
  }
  if (auto v = get("rom.variants"))
  {
    c.variants.clear();
    for (const auto &name : split(*v, ','))
    {
      try
      {
        c.variants.push_back(variant_from_string(name));
      }
      catch (const Error &)
      {
        throw ConfigError("rom.variants: unknown variant '" + name + "'");
      }
    }
  }
  if (auto v = get("rom.n_trees"))
  {
    c.n_trees = parse_number<int>("rom.n_trees", *v);
  }
  if (auto v = get("rom.average_pressure_adjoint"))
  {
    c.average_pressure_adjoint = parse_bool("rom.average_pressure_adjoint", *v);
  }

  const std::string preset = get("arch.preset").value_or("paper");
  if (preset != "paper")
  {
    throw ConfigError("arch.preset: unknown preset '" + preset + "' (available: paper)");
  }
  c.arch = Architecture::Preset(c.case_tag);
  if (auto v = get("arch.feature_layer"))
  {
    c.arch.feature_layer = parse_bool("arch.feature_layer", *v);
  }
  if (auto v = get("arch.pod_modes"))
  {
    c.arch.pod_modes = parse_number<int>("arch.pod_modes", *v);
  }
  if (auto v = get("arch.latent"))
  {
    c.arch.latent = parse_number<int>("arch.latent", *v);
  }
  const std::pair<const char *, std::vector<int> Architecture::*> lists[] = {
      {"arch.podnn_hidden", &Architecture::podnn_hidden},
      {"arch.phi_hidden", &Architecture::phi_hidden},
      {"arch.psi_hidden", &Architecture::psi_hidden},
      {"arch.encoder_hidden", &Architecture::encoder_hidden},
      {"arch.blackbox_hidden", &Architecture::blackbox_hidden}};
  for (const auto &[key, member] : lists)
  {
    if (auto v = get(key))
    {
      c.arch.*member = parse_widths(key, *v);
    }
  }

  if (auto v = get("train.optimizer"))
  {
    try
    {
      c.train.optimizer = optimizer_from_string(*v);
    }
    catch (const Error &)
    {
      throw ConfigError("train.optimizer: unknown optimizer '" + *v + "'");
    }
  }
  if (auto v = get("train.epochs"))
  {
    c.train.epochs = parse_number<int>("train.epochs", *v);
  }
  if (auto v = get("train.iterations_per_epoch"))
  {
    c.train.iterations_per_epoch = parse_number<int>("train.iterations_per_epoch", *v);
  }
  if (auto v = get("train.learning_rate"))
  {
    c.train.learning_rate = parse_number<double>("train.learning_rate", *v);
  }
  if (auto v = get("train.history"))
  {
    c.train.history = parse_number<int>("train.history", *v);
  }
  if (auto v = get("train.lambda"))
  {
    c.train.lambda = parse_number<double>("train.lambda", *v);
  }
  if (auto v = get("train.tolerance_grad"))
  {
    c.train.tolerance_grad = parse_number<double>("train.tolerance_grad", *v);
  }
  if (auto v = get("train.tolerance_change"))
  {
    c.train.tolerance_change = parse_number<double>("train.tolerance_change", *v);
  }
  c.train.seed = c.seed;
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ConfigError("cannot read config file " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), fs::path(path).parent_path().string());
}

void RunConfig::Validate() const
{
  if (mesh_file.empty() && mesh_n < 1)
  {
    throw ConfigError("mesh.n must be >= 1");
  }
  if (n_train < 1)
  {
    throw ConfigError("data.n_train must be >= 1");
  }
  if (n_test < 1)
  {
    throw ConfigError("data.n_test must be >= 1");
  }
  if (threads < 1)
  {
    throw ConfigError("run.threads must be >= 1");
  }
  if (n_trees < 1)
  {
    throw ConfigError("rom.n_trees must be >= 1");
  }
  if (variants.empty())
  {
    throw ConfigError("rom.variants must name at least one variant");
  }
  if (picard.max_iterations < 1 || !(picard.step_tol > 0.0) || !(picard.residual_tol > 0.0))
  {
    throw ConfigError("data.picard_*: iteration cap and tolerances must be positive");
  }
  if (bounds)
  {
    try
    {
      ProblemSpec::FromTag(case_tag).Restrict(*bounds);
    }
    catch (const InvalidArgument &e)
    {
      throw ConfigError(std::string("problem.") + e.what());
    }
  }
  try
  {
    arch.Validate();
  }
  catch (const InvalidArgument &e)
  {
    throw ConfigError(e.what());
  }
  if (arch.feature_layer && case_tag != CaseTag::Sines2D)
  {
    throw ConfigError("arch.feature_layer: the sine feature layer only applies to sines2d");
  }
  if (arch.pod_modes > n_train)
  {
    throw ConfigError("arch.pod_modes must not exceed data.n_train");
  }
  try
  {
    train.Validate();
  }
  catch (const InvalidArgument &e)
  {
    throw ConfigError(std::string("train.") + e.what());
  }
}

ProblemSpec RunConfig::Spec() const
{
  ProblemSpec s = ProblemSpec::FromTag(case_tag);
  if (bounds)
  {
    s.Restrict(*bounds);
  }
  return s;
}

Mesh2D RunConfig::Mesh() const
{
  return mesh_file.empty() ? structured_unit_square(mesh_n) : load_mesh(mesh_file);
}

nlohmann::json RunConfig::ToJson() const
{
  nlohmann::json j;
  j["case"] = to_string(case_tag);
  j["bounds"] = Spec().bounds();
  j["mesh"] = mesh_file.empty() ? nlohmann::json{{"n", mesh_n}}
                                : nlohmann::json{{"file_hash", hex64(Mesh().hash())}};
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["seed"] = seed;
  j["picard"] = {{"max_iterations", picard.max_iterations},
                 {"step_tol", format_double(picard.step_tol)},
                 {"residual_tol", format_double(picard.residual_tol)}};
  j["n_trees"] = n_trees;
  std::vector<std::string> v;
  for (auto x : variants)
  {
    v.push_back(to_string(x));
  }
  j["variants"] = v;
  j["average_pressure_adjoint"] = average_pressure_adjoint;
  j["arch"] = arch.ToJson();
  j["train"] = {{"optimizer", to_string(train.optimizer)},
                {"epochs", train.epochs},
                {"iterations_per_epoch", train.iterations_per_epoch},
                {"learning_rate", format_double(train.lr())},
                {"history", train.history},
                {"lambda", format_double(train.lambda)},
                {"tolerance_grad", format_double(train.tolerance_grad)},
                {"tolerance_change", format_double(train.tolerance_change)}};
  j["rng"] = Rng::kAlgorithm;
  return j;
}

std::string RunConfig::DataHash() const
{
  const nlohmann::json j = ToJson();
  nlohmann::json d;
  for (const char *k : {"case", "bounds", "mesh", "n_train", "n_test", "seed", "picard", "rng"})
  {
    d[k] = j[k];
  }
  return hex64(fnv1a(d.dump()));
}

std::string RunConfig::ConfigHash() const
{
  return hex64(fnv1a(ToJson().dump()));
}

Rng stream(std::uint64_t seed, const std::string &purpose)
{
  return Rng(fnv1a(purpose, splitmix64(seed)));
}

namespace
{

struct Context
{
  ProblemSpec spec;
  std::shared_ptr<const OperatorSet> ops;
};

Context context(const RunConfig &cfg)
{
  Context c;
  c.spec = cfg.Spec();
  c.ops = std::make_shared<const OperatorSet>(
      assemble_operators(std::make_shared<const Mesh2D>(cfg.Mesh())));
  return c;
}

SnapshotArchive load_checked_archive(const RunConfig &cfg, const Context &ctx,
                                     const std::string &out, const std::string &split_name)
{
  const fs::path dir = fs::path(out) / "data" / split_name;
  if (!fs::exists(dir / "metadata.json"))
  {
    throw MissingStageError("no " + split_name + " archive in " + dir.string() +
                            "; run generate first");
  }
  SnapshotArchive a = read_archive(dir.string());
  if (a.metadata.value("data_hash", "") != cfg.DataHash())
  {
    throw MismatchError(split_name + " archive was generated with a different data config");
  }
  if (a.metadata.value("mesh_hash", "") != hex64(ctx.ops->mesh->hash()))
  {
    throw MismatchError(split_name + " archive was generated on a different mesh");
  }
  return a;
}

}  // namespace

void cmd_generate(const RunConfig &cfg, const std::string &out, std::ostream &log)
{
  cfg.Validate();
  const Context ctx = context(cfg);
  const std::string mesh_hash = hex64(ctx.ops->mesh->hash());
  std::ostringstream timings;
  timings << "split\tseconds\n";
  for (const auto &[split_name, n] : {std::pair<std::string, int>{"train", cfg.n_train},
                                      std::pair<std::string, int>{"test", cfg.n_test}})
  {
    const fs::path dir = fs::path(out) / "data" / split_name;
    if (fs::exists(dir / "metadata.json"))
    {
      const nlohmann::json meta = read_json(dir / "metadata.json");
      if (meta.value("data_hash", "") == cfg.DataHash() && meta.value("mesh_hash", "") == mesh_hash)
      {
        log << "generate: " << split_name << " archive is up to date\n";
        continue;
      }
    }
    log << "generate: solving " << n << " " << split_name << " samples ("
        << to_string(cfg.case_tag) << ", " << ctx.ops->mesh->n_edges() << " flux dofs)\n";
    const auto start = std::chrono::steady_clock::now();
    Rng rng = stream(cfg.seed, "data/" + split_name);
    SnapshotArchive archive;
    archive.snapshots =
        generate_snapshots(ctx.spec, *ctx.ops, rng, n, cfg.threads, cfg.picard);
    archive.metadata = {{"case", to_string(cfg.case_tag)},
                        {"split", split_name},
                        {"seed", cfg.seed},
                        {"bounds", ctx.spec.bounds()},
                        {"data_hash", cfg.DataHash()},
                        {"config_hash", cfg.ConfigHash()},
                        {"mesh_hash", mesh_hash},
                        {"n_cells", ctx.ops->mesh->n_cells()},
                        {"n_edges", ctx.ops->mesh->n_edges()},
                        {"n_nodes", ctx.ops->mesh->n_nodes()},
                        {"rng", Rng::kAlgorithm},
                        {"picard",
                         {{"max_iterations", cfg.picard.max_iterations},
                          {"step_tol", cfg.picard.step_tol},
                          {"residual_tol", cfg.picard.residual_tol}}}};
    write_archive(dir.string(), archive);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timings << split_name << "\t" << format_double(secs) << "\n";
  }
  write_text(fs::path(out) / "timings" / "generate.tsv", timings.str());
}

void cmd_train(const RunConfig &cfg, const std::string &out, std::ostream &log)
{
  cfg.Validate();
  const Context ctx = context(cfg);
  const SnapshotArchive train = load_checked_archive(cfg, ctx, out, "train");
  Rng tree_rng = stream(cfg.seed, "trees");
  const auto solver =
      std::make_shared<const AveragedSolver>(AveragedSolver::Build(*ctx.ops, tree_rng, cfg.n_trees));
  RomBuildConfig bc;
  bc.arch = cfg.arch;
  bc.train = cfg.train;
  bc.average_pressure_adjoint = cfg.average_pressure_adjoint;
  std::ostringstream timings;
  timings << "variant\tseconds\n";
  for (RomVariant v : cfg.variants)
  {
    log << "train: " << display_name(v) << " on " << train.snapshots.size() << " samples\n";
    Rng rng = stream(cfg.seed, "init/" + to_string(v));
    TrainLog tl;
    const RomModel model =
        build_rom(v, train.snapshots, ctx.ops, solver, ctx.spec, bc, rng, &tl);
    const auto &h = tl.result.history;
    nlohmann::json extra = {{"config_hash", cfg.ConfigHash()},
                            {"data_hash", cfg.DataHash()},
                            {"optimizer", to_string(cfg.train.optimizer)},
                            {"epochs_run", tl.result.epochs_run},
                            {"evaluations", tl.result.evaluations},
                            {"converged", tl.result.converged},
                            {"initial_loss", format_double(h.front())},
                            {"final_loss", format_double(h.back())},
                            {"arch", cfg.arch.ToJson()}};
    const fs::path dir = fs::path(out) / "models" / to_string(v);
    fs::remove_all(dir);
    save_rom(dir.string(), model, extra);
    std::ostringstream hist;
    hist << "epoch\tloss\n";
    for (std::size_t e = 0; e < h.size(); e++)
    {
      hist << e << "\t" << format_double(h[e]) << "\n";
    }
    write_text(dir / "train_log.tsv", hist.str());
    timings << to_string(v) << "\t" << format_double(tl.seconds) << "\n";
    log << "train: " << to_string(v) << " loss " << format_double(h.front()) << " -> "
        << format_double(h.back()) << " after " << tl.result.epochs_run << " epochs, "
        << tl.result.evaluations << " evaluations, " << tl.seconds << " s\n";
  }
  write_text(fs::path(out) / "timings" / "train.tsv", timings.str());
}

void cmd_evaluate(const RunConfig &cfg, const std::string &out, std::ostream &log,
                  bool fom_self_check)
{
  cfg.Validate();
  const Context ctx = context(cfg);
  const SnapshotArchive test = load_checked_archive(cfg, ctx, out, "test");
  const auto &samples = test.snapshots;

  struct Row
  {
    std::string key, model, kernel;
    bool conservative;
    long evaluations;
    EvalReport report;
  };
  std::vector<Row> rows;
  std::ostringstream timings;
  timings << "variant\tseconds\n";
  if (fom_self_check)
  {
    std::vector<RomPrediction> preds;
    for (const auto &s : samples)
    {
      preds.push_back({s.q, s.p});
    }
    rows.push_back({"fom", "FOM (self-check)", "-", true, 0,
                    error_metrics(*ctx.ops, samples, preds)});
  }
  else
  {
    for (RomVariant v : cfg.variants)
    {
      const fs::path dir = fs::path(out) / "models" / to_string(v);
      if (!fs::exists(dir / "model.json"))
      {
        throw MissingStageError("no checkpoint for " + to_string(v) + " in " + dir.string() +
                                "; run train first");
      }
      nlohmann::json extra;
      const RomModel model = load_rom(dir.string(), ctx.ops, &extra);
      if (extra.value("config_hash", "") != cfg.ConfigHash())
      {
        throw MismatchError("checkpoint " + dir.string() +
                            " was trained with a different configuration");
      }
      const auto start = std::chrono::steady_clock::now();
      EvalReport rep = evaluate_model(model, samples, nullptr, cfg.threads);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      timings << to_string(v) << "\t" << format_double(secs) << "\n";
      rows.push_back({to_string(v), display_name(v), kernel_label(v), is_conservative(v),
                      extra.value("evaluations", 0L), std::move(rep)});
    }
  }

  std::ostringstream summary, per_sample, conservation, warnings;
  summary << "variant\tmodel\tkernel\tmean_flux_l2\tmean_flux_hdiv\tmean_pressure_l2\t"
             "max_conservation_residual\ttrain_evaluations\tconservative\tconservation_ok\n";
  per_sample << "variant,sample";
  for (int k = 0; k < ctx.spec.n_params(); k++)
  {
    per_sample << ",mu" << k;
  }
  per_sample << ",flux_l2,flux_hdiv,pressure_l2,conservation_residual\n";
  conservation << "variant,sample,residual,bound,within_bound\n";
  for (const auto &r : rows)
  {
    double max_res = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < r.report.samples.size(); i++)
    {
      const auto &s = r.report.samples[i];
      max_res = std::max(max_res, s.conservation);
      const bool within = s.conservation <= s.conservation_bound;
      ok = ok && within;
      if (!s.excluded)
      {
        per_sample << r.key << "," << i;
        for (int k = 0; k < ctx.spec.n_params(); k++)
        {
          per_sample << "," << format_double(samples[i].mu[k]);
        }
        per_sample << "," << format_double(s.flux_l2) << "," << format_double(s.flux_hdiv) << ","
                   << format_double(s.pressure_l2) << "," << format_double(s.conservation)
                   << "\n";
      }
      conservation << r.key << "," << i << "," << format_double(s.conservation) << ","
                   << format_double(s.conservation_bound) << "," << (within ? 1 : 0) << "\n";
    }
    for (const auto &w : r.report.warnings)
    {
      warnings << r.key << ": " << w << "\n";
    }
    if (r.conservative && !ok)
    {
      warnings << r.key << ": conservative model exceeds the conservation bound\n";
      log << "evaluate: WARNING " << r.key << " exceeds the conservation bound\n";
    }
    summary << r.key << "\t" << r.model << "\t" << r.kernel << "\t"
            << format_double(r.report.mean_flux_l2) << "\t"
            << format_double(r.report.mean_flux_hdiv) << "\t"
            << format_double(r.report.mean_pressure_l2) << "\t" << format_double(max_res) << "\t"
            << r.evaluations << "\t" << (r.conservative ? 1 : 0) << "\t" << (ok ? 1 : 0) << "\n";
    log << "evaluate: " << r.key << " flux L2 " << r.report.mean_flux_l2 << ", H(div) "
        << r.report.mean_flux_hdiv << ", pressure " << r.report.mean_pressure_l2
        << ", max residual " << max_res << "\n";
  }
  const fs::path dir = fs::path(out) / "eval";
  write_text(dir / "summary.tsv", summary.str());
  write_text(dir / "samples.csv", per_sample.str());
  write_text(dir / "conservation.csv", conservation.str());
  write_text(dir / "warnings.txt", warnings.str());
  write_text(dir / "meta.json", nlohmann::json{{"config_hash", cfg.ConfigHash()},
                                               {"data_hash", cfg.DataHash()},
                                               {"n_test", samples.size()},
                                               {"fom_self_check", fom_self_check}}
                                        .dump(2) +
                                    "\n");
  if (!fom_self_check)
  {
    write_text(fs::path(out) / "timings" / "evaluate.tsv", timings.str());
  }
}

Quartiles quartiles(std::vector<double> v)
{
  if (v.empty())
  {
    throw InvalidArgument("quartiles of an empty sample");
  }
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * (v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
  };
  return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

namespace
{

std::string percent(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f%%", 100.0 * x);
  return buf;
}

std::vector<std::vector<std::string>> read_table(const fs::path &p, char sep)
{
  std::ifstream in(p);
  if (!in)
  {
    throw MissingStageError("missing " + p.string() + "; run evaluate first");
  }
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
  {
    if (!line.empty())
    {
      rows.push_back(split(line, sep));
    }
  }
  if (rows.empty())
  {
    throw ValidationError(p.string() + " is empty");
  }
  return rows;
}

}  // namespace

void cmd_report(const std::string &out, std::ostream &log)
{
  const fs::path eval = fs::path(out) / "eval";
  const auto summary = read_table(eval / "summary.tsv", '\t');
  const auto samples = read_table(eval / "samples.csv", ',');
  const nlohmann::json meta = read_json(eval / "meta.json");

  // Columns of the per-sample file, located by name.
  const auto &hdr = samples.front();
  auto col = [&](const std::string &name) {
    const auto it = std::find(hdr.begin(), hdr.end(), name);
    if (it == hdr.end())
    {
      throw ValidationError("samples.csv lacks column " + name);
    }
    return static_cast<std::size_t>(it - hdr.begin());
  };
  const std::size_t c_l2 = col("flux_l2"), c_hdiv = col("flux_hdiv"),
                    c_p = col("pressure_l2");

  std::ostringstream table, quart;
  table << "Model\tMap onto kernel\tL2 flux error\tH(div) flux error\tL2 pressure error\t"
           "Training cost (loss evaluations)\n";
  quart << "variant\tmetric\tmin\tq1\tmedian\tq3\tmax\tmean\n";
  for (std::size_t r = 1; r < summary.size(); r++)
  {
    const auto &row = summary[r];
    if (row.size() < 8)
    {
      throw ValidationError("summary.tsv row " + std::to_string(r) + " is truncated");
    }
    const std::string &key = row[0];
    std::map<std::string, std::vector<double>> metrics;
    for (std::size_t i = 1; i < samples.size(); i++)
    {
      if (samples[i][0] != key)
      {
        continue;
      }
      metrics["flux_l2"].push_back(std::stod(samples[i][c_l2]));
      metrics["flux_hdiv"].push_back(std::stod(samples[i][c_hdiv]));
      metrics["pressure_l2"].push_back(std::stod(samples[i][c_p]));
    }
    std::map<std::string, double> mean;
    for (const char *m : {"flux_l2", "flux_hdiv", "pressure_l2"})
    {
      const auto &v = metrics[m];
      if (v.empty())
      {
        throw ValidationError("no per-sample rows for " + key);
      }
      double s = 0.0;
      for (double x : v)
      {
        s += x;
      }
      mean[m] = s / v.size();
      const Quartiles q = quartiles(v);
      quart << key << "\t" << m << "\t" << format_double(q.min) << "\t" << format_double(q.q1)
            << "\t" << format_double(q.median) << "\t" << format_double(q.q3) << "\t"
            << format_double(q.max) << "\t" << format_double(mean[m]) << "\n";
    }
    table << row[1] << "\t" << row[2] << "\t" << percent(mean["flux_l2"]) << "\t"
          << percent(mean["flux_hdiv"]) << "\t" << percent(mean["pressure_l2"]) << "\t" << row[7]
          << "\n";
  }
  const fs::path dir = fs::path(out) / "report";
  write_text(dir / "table.tsv", table.str());
  write_text(dir / "quartiles.tsv", quart.str());
  write_text(dir / "meta.json",
             nlohmann::json{{"config_hash", meta.value("config_hash", "")},
                            {"data_hash", meta.value("data_hash", "")}}
                     .dump(2) +
                 "\n");
  log << table.str();
}

int exit_code_for(const std::exception &e, const std::string &command)
{
  if (dynamic_cast<const MissingStageError *>(&e))
  {
    return 6;
  }
  if (dynamic_cast<const MismatchError *>(&e))
  {
    return 5;
  }
  if (dynamic_cast<const TrainingError *>(&e))
  {
    return 4;
  }
  if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const ParseError *>(&e))
  {
    return 2;
  }
  if (dynamic_cast<const NumericalError *>(&e))
  {
    return command == "train" ? 4 : 3;
  }
  if (dynamic_cast<const InvalidArgument *>(&e) || dynamic_cast<const DomainError *>(&e))
  {
    return 2;
  }
  return 1;
}

}  // namespace cml
