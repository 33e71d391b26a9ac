#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "tunet/commands.hpp"
#include "tunet/errors.hpp"
#include "tunet/run_config.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

void add_key(CLI::App* cmd, Overrides& overrides, const std::string& flag, const std::string& key,
             const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&overrides, key](const std::string& value) { overrides.emplace_back(key, value); }, help);
}

void add_shared(CLI::App* cmd, Overrides& overrides, std::string& config_path) {
  cmd->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  add_key(cmd, overrides, "--seed", "seed", "seed for initialization, shuffling and synthesis");
  add_key(cmd, overrides, "--out", "out", "output directory");
  add_key(cmd, overrides, "--task", "task", "detect or classify");
  add_key(cmd, overrides, "--precision", "precision", "32 or 64");
  add_key(cmd, overrides, "--cls", "cls", "number of gesture classes");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal U-Net for sample-level WiFi CSI action detection and classification"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::string fault;

  auto* synth = app.add_subcommand("synth", "generate a synthetic CSI corpus");
  add_shared(synth, overrides, config_path);
  add_key(synth, overrides, "--series", "synth_train", "number of train series");
  add_key(synth, overrides, "--test-series", "synth_test", "number of test series");
  add_key(synth, overrides, "--length", "series_length", "samples per series");
  add_key(synth, overrides, "--noise", "synth_noise", "noise standard deviation");

  auto* train = app.add_subcommand("train", "train a model on a dataset manifest");
  add_shared(train, overrides, config_path);
  add_key(train, overrides, "--data", "data", "dataset manifest");
  add_key(train, overrides, "--epochs", "epochs", "training epochs");
  add_key(train, overrides, "--batch-size", "batch_size", "batch size");
  add_key(train, overrides, "--lr", "lr", "initial learning rate");
  add_key(train, overrides, "--max-grad-norm", "max_grad_norm", "global gradient clipping norm (0 = off)");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  add_shared(eval, overrides, config_path);
  add_key(eval, overrides, "--data", "data", "dataset manifest");
  add_key(eval, overrides, "--checkpoint", "checkpoint", "model checkpoint");
  add_key(eval, overrides, "--split", "eval_split", "test or train");

  auto* predict = app.add_subcommand("predict", "write per-sample confidences for one series");
  add_shared(predict, overrides, config_path);
  add_key(predict, overrides, "--checkpoint", "checkpoint", "model checkpoint");
  add_key(predict, overrides, "--series", "series", "series data file");
  add_key(predict, overrides, "--labels", "labels", "optional label file for scoring");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  add_shared(gradcheck, overrides, config_path);
  gradcheck->add_option("--inject-fault", fault, "corrupt a backward pass on purpose")
      ->check(CLI::IsMember({"conv_backward"}))
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? tunet::kExitOk : tunet::kExitUsage;
  }

  try {
    tunet::RunConfig cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    cfg.finalize();

    if (synth->parsed()) return tunet::cmd_synth(cfg, std::cout);
    if (train->parsed()) return tunet::cmd_train(cfg, std::cout);
    if (eval->parsed()) return tunet::cmd_eval(cfg, std::cout);
    if (predict->parsed()) return tunet::cmd_predict(cfg, std::cout);
    const auto f = fault.empty() ? tunet::GradcheckFault::none : tunet::GradcheckFault::conv_backward;
    return tunet::cmd_gradcheck(cfg, std::cout, f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tunet::exit_code_for(e);
  }
}
