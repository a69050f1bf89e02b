#include <CLI11.hpp>

#include <fstream>
#include <vector>

#include <cstdio>
#include <exception>

#include "aru/cli.hpp"

namespace {

void add_model_flags(CLI::App* cmd, aru::RunConfig& cfg) {
  cmd->add_option("--preset", cfg.preset, "Hyperparameter set: small, medium or large");
  cmd->add_option("--head", cfg.head, "Prediction head: baseline, aru or aru-direct");
  cmd->add_option("--encoder-len", cfg.encoder_len, "Encoder length E");
  cmd->add_option("--horizon", cfg.horizon, "Forecast horizon K");
  cmd->add_option("--alpha", cfg.alpha, "Aging factors, one per statistics bank")
      ->delimiter(',');
  cmd->add_option("--ridge", cfg.ridge, "Ridge regularizer for the local solve");
}

void add_train_flags(CLI::App* cmd, aru::RunConfig& cfg) {
  cmd->add_option("--stride", cfg.stride, "Sliding-window stride");
  cmd->add_option("--epochs", cfg.epochs, "Training epochs");
  cmd->add_option("--batch-size", cfg.batch_size, "Windows per optimizer step");
  cmd->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
  cmd->add_option("--clip-norm", cfg.clip_norm, "Global gradient-norm clip");
  cmd->add_option("--time-features", cfg.time_features,
                  "Derived calendar features: none, hourly, daily, weekly, monthly");
  cmd->add_option("--categorical", cfg.categoricals,
                  "Categorical column, optionally name:embed_dim")
      ->delimiter(',');
  cmd->add_option("--scale-scope", cfg.scale_scope,
                  "Target scaling scope: series or window");
  cmd->add_flag("--differentiate-local-fit", cfg.differentiate_local_fit,
                "Backprop through the within-window statistics recursion");
  cmd->add_option("--train-state", cfg.train_state,
                  "Window state seeding during training: zero or replay");
}

void configure(CLI::App* cmd, std::string& config_path) {
  cmd->add_option("--config", config_path,
                  "Flat key=value config file; explicit flags override it");
}

// Expands "--config FILE" by injecting the file's key=value pairs as flags,
// right after the subcommand token. Keys the command line already names are
// skipped so explicit flags win; unknown keys fail in the regular parser.
std::vector<std::string> expand_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=', first);
    if (eq == std::string::npos)
      throw std::runtime_error("config file " + path + ": expected key=value, got '" +
                               line + "'");
    const std::string key = line.substr(first, eq - first);
    bool given = false;
    for (std::size_t i = 2; i < args.size(); ++i)
      if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) given = true;
    if (!given) injected.push_back("--" + key + "=" + line.substr(eq + 1));
  }
  std::vector<std::string> out{args[0], args[1]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

namespace aru {

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Streaming adaptive forecasting toolkit"};
  app.require_subcommand(1);
  aru::RunConfig cfg;
  std::string config_path;

  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  synth->add_option("--out", cfg.out_dir, "Output directory");
  synth->add_option("--n-series", cfg.n_series, "Number of series");
  synth->add_option("--length", cfg.length, "Steps per series");
  synth->add_option("--gamma", cfg.gamma, "Local parameter range");
  synth->add_option("--noise-sigma", cfg.noise_sigma, "Observation noise");
  synth->add_flag("--with-ids", cfg.with_ids, "Emit the series id feature column");
  synth->add_option("--encoder-len", cfg.encoder_len, "Encoder length (length check)");
  synth->add_option("--horizon", cfg.horizon, "Horizon (length check)");
  synth->add_option("--seed", cfg.seed, "Run seed");
  configure(synth, config_path);

  CLI::App* train = app.add_subcommand("train", "Train a forecaster");
  train->add_option("--data", cfg.data_path, "Dataset CSV")->required();
  train->add_option("--out", cfg.out_dir, "Output directory");
  add_model_flags(train, cfg);
  add_train_flags(train, cfg);
  train->add_option("--protocol", cfg.protocol, "Split protocol: fixed or streaming");
  train->add_option("--rolls", cfg.rolls, "Streaming rolls (split sizing)");
  train->add_option("--seed", cfg.seed, "Run seed");
  train->add_flag("--resume", cfg.resume, "Continue from the existing checkpoint");
  configure(train, config_path);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", cfg.checkpoint_path, "Trained checkpoint")->required();
  eval->add_option("--data", cfg.data_path, "Dataset CSV")->required();
  eval->add_option("--out", cfg.out_dir, "Output directory");
  eval->add_option("--scalers", cfg.scalers_path,
                   "Scalers JSON (default: next to the checkpoint)");
  eval->add_option("--protocol", cfg.protocol, "fixed or streaming");
  eval->add_option("--rolls", cfg.rolls, "Streaming rolls");
  eval->add_flag("--no-adapt", cfg.no_adapt, "Skip the streaming adapt pass");
  eval->add_flag("--emit-forecasts", cfg.emit_forecasts,
                 "Write per-series forecast CSVs");
  configure(eval, config_path);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Synth -> train -> eval grid over series lengths and heads");
  sweep->add_option("--out", cfg.out_dir, "Output directory");
  sweep->add_option("--lengths", cfg.lengths, "Series lengths")->delimiter(',');
  sweep->add_option("--heads", cfg.heads, "Heads to compare")->delimiter(',');
  sweep->add_option("--gamma", cfg.gamma, "Local parameter range");
  sweep->add_flag("--with-ids", cfg.with_ids, "Emit series id features");
  sweep->add_option("--n-series", cfg.n_series, "Number of series");
  sweep->add_option("--jobs", cfg.jobs, "Parallel cells (0 = auto)");
  add_model_flags(sweep, cfg);
  add_train_flags(sweep, cfg);
  sweep->add_option("--seed", cfg.seed, "Run seed");
  configure(sweep, config_path);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::vector<const char*> cargs;
  cargs.reserve(args.size());
  for (const std::string& a : args) cargs.push_back(a.c_str());
  CLI11_PARSE(app, static_cast<int>(cargs.size()), cargs.data());

  try {
    if (synth->parsed()) return aru::run_synth(cfg);
    if (train->parsed()) return aru::run_train(cfg);
    if (eval->parsed()) return aru::run_eval(cfg);
    if (sweep->parsed()) return aru::run_sweep(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace aru
