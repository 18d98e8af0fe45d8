// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: generate -> train -> evaluate -> report.

#include <iostream>
#include <optional>
#include <string>
#include "CLI11.hpp"
#include "cml/pipeline.hpp"

int main(int argc, char **argv)
{
  std::cout << std::unitbuf;
  CLI::App app{"Mass-conserving neural reduced-order models for Darcy flow"};
  app.require_subcommand(1);

  std::string config_path, out = "run";
  std::optional<std::uint64_t> seed;
  bool fom_self_check = false;

  auto add_common = [&](CLI::App *sub, bool needs_config) {
    if (needs_config)
    {
      sub->add_option("--config", config_path, "INI experiment file")->required();
      sub->add_option("--seed", seed, "Override run.seed");
    }
    sub->add_option("--out", out, "Run directory")->capture_default_str();
  };
  auto *gen = app.add_subcommand("generate", "Solve the full-order model for the train and test sets");
  auto *train = app.add_subcommand("train", "Train every configured ROM variant");
  auto *eval = app.add_subcommand("evaluate", "Score trained models on the test set");
  auto *report = app.add_subcommand("report", "Write the comparison table and quartiles");
  add_common(gen, true);
  add_common(train, true);
  add_common(eval, true);
  add_common(report, false);
  eval->add_flag("--fom-self-check", fom_self_check,
                 "Score the stored FOM solutions against themselves");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try
  {
    if (command == "report")
    {
      cml::cmd_report(out, std::cout);
      return 0;
    }
    cml::RunConfig cfg = cml::RunConfig::Load(config_path);
    if (seed)
    {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (command == "generate")
    {
      cml::cmd_generate(cfg, out, std::cout);
    }
    else if (command == "train")
    {
      cml::cmd_train(cfg, out, std::cout);
    }
    else
    {
      cml::cmd_evaluate(cfg, out, std::cout, fom_self_check);
    }
  }
  catch (const std::exception &e)
  {
    std::cerr << "cml " << command << ": " << e.what() << "\n";
    return cml::exit_code_for(e, command);
  }
  return 0;
}
