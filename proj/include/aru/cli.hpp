#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aru/data.hpp"
#include "aru/evaluation.hpp"
#include "aru/serialize.hpp"

namespace aru {

/// Resolved settings for one command invocation. Flags mirror these fields;
/// a flat key=value config file can preseed them and flags override it.
struct RunConfig {
  std::string data_path;
  std::string out_dir = "out";
  std::string checkpoint_path;
  std::string scalers_path;

  std::string preset = "medium";  // small | medium | large
  std::string head = "baseline";  // baseline | aru | aru-direct
  int encoder_len = 24;
  int horizon = 24;
  std::vector<double> alpha = {1.0};
  double ridge = 1.0;
  int stride = 1;
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  bool resume = false;
  bool differentiate_local_fit = false;
  std::string train_state = "zero";  // zero | replay

  std::string time_features = "none";  // none | hourly | daily | weekly | monthly
  std::vector<std::string> categoricals;  // column or column:embed_dim
  std::string scale_scope = "series";     // series | window

  std::string protocol = "fixed";  // fixed | streaming
  int rolls = 1;
  bool no_adapt = false;
  bool emit_forecasts = false;

  // synth
  int n_series = 10;
  long length = 2000;
  double gamma = 20.0;
  double noise_sigma = 1.0;
  bool with_ids = false;

  // sweep
  std::vector<long> lengths = {200, 500, 1000, 2000};
  std::vector<std::string> heads = {"baseline", "aru"};
  int jobs = 0;  // 0 = hardware concurrency
};

/// Writes the synthetic dataset CSV plus a manifest (gamma, seed, and the
/// per-series generating parameters) into out_dir.
int run_synth(const RunConfig& cfg);

/// Trains the selected head and writes checkpoint.bin, scalers.json,
/// train_log.tsv and effective.cfg into out_dir.
int run_train(const RunConfig& cfg);

/// Evaluates a checkpoint under the fixed or streaming protocol; writes
/// report.json and report.txt, and per-series forecast CSVs when requested.
int run_eval(const RunConfig& cfg);

/// Grid of (length, head) cells, each synth -> train -> fixed eval with a
/// per-cell seed; writes sweep.tsv (length, head, RMSE, ND) in grid order.
/// Cell failures are logged to sweep_errors.log and the sweep continues;
/// the exit code is nonzero when any cell failed.
int run_sweep(const RunConfig& cfg);

// Pipeline pieces shared by commands and tests.

/// Cardinalities from the data (or the calendar schema for derived columns),
/// embedding dims from `name:dim` overrides or ceil(sqrt(cardinality)).
FeatureSchema build_schema(const Dataset& ds, const RunConfig& cfg);

ModelConfig build_model_config(const Dataset& ds, const RunConfig& cfg);

/// The key=value echo of the effective settings; re-running with it as the
/// config file reproduces the run.
void write_effective_config(const RunConfig& cfg, const std::string& command,
                            const std::string& path);

/// Full argv entry point (subcommand parsing included); the binary in tools/
/// is a one-line wrapper around this.
int cli_main(int argc, const char* const* argv);

}  // namespace aru
