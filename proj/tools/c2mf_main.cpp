#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "c2mf/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"c2mf: credibility-aware multimodal late fusion with conditional "
               "probabilistic circuits"};
  app.require_subcommand(1);

  c2mf::RunConfig rc;

  auto add_common = [&rc](CLI::App* cmd) {
    cmd->add_option("--config", rc.config_path, "JSON config file");
    cmd->add_option("--out", rc.out_dir, "output directory");
    cmd->add_option("--seed", rc.seed, "override data/train seed");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a Conflict dataset");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train a fusion model");
  add_common(train);
  train->add_option("--data", rc.data_dir, "dataset directory")->required();
  train->add_option("--method", rc.method, "dpc|c2dpc|cwm|c2wm");
  train->add_option("--regime", rc.regime, "joint|decoupled");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--data", rc.data_dir, "dataset directory")->required();
  eval->add_option("--checkpoint", rc.checkpoint_path, "checkpoint file")->required();
  eval->add_option("--lambda-test", rc.lambda_test, "test conflict ratio");

  CLI::App* sweep = app.add_subcommand("sweep", "evaluate across a lambda grid");
  add_common(sweep);
  sweep->add_option("--data", rc.data_dir, "dataset directory")->required();
  sweep->add_option("--checkpoint", rc.checkpoint_path, "checkpoint file")->required();
  sweep->add_option("--lambda-test", rc.lambda_test,
                    "test conflict ratios (repeatable)");

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference gradient report");
  add_common(gc);
  gc->add_option("--method", rc.method, "dpc|c2dpc|cwm|c2wm");
  gc->add_option("--tolerance", rc.tolerance, "pass threshold (default 1e-4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  rc.command = app.get_subcommands().front()->get_name();
  return c2mf::run(rc, std::cout, std::cerr);
}
