#pragma once

#include <string>
#include <vector>

#include "aru/data.hpp"
#include "aru/forecaster.hpp"
#include "aru/training.hpp"

namespace aru {

/// Normalized deviation: sum of absolute errors over sum of absolute truths,
/// pooled over every (series, step) pair. Undefined (throws) for all-zero
/// truth.
double nd_metric(const std::vector<double>& truth, const std::vector<double>& pred);

/// Root mean squared error, pooled. Throws on empty input.
double rmse_metric(const std::vector<double>& truth, const std::vector<double>& pred);

struct Model {
  ModelConfig config;
  ModelParams params;
};

struct EvalReport {
  std::string method;
  std::string protocol;  // "fixed" or "streaming"
  double nd = 0;
  double rmse = 0;
  double inference_seconds = 0;  // one pass over the test forecasts
  struct PerSeries {
    std::string series_id;
    double nd = 0;
    double rmse = 0;
  };
  std::vector<PerSeries> per_series;
};

/// Unscaled per-series forecasts, for plot emission.
struct SeriesForecast {
  std::string series_id;
  std::vector<long long> timestamps;
  std::vector<double> y_true, mu, sigma;
};

/// Chronological replay of the training-range history into a fresh unit
/// state: consecutive horizon-sized blocks ending at `end`, each decoded
/// under an encoder over its preceding E steps, updated with realized
/// targets. Steps earlier than the first full block only serve as context.
AruState build_replay_state(const Model& model, const Dataset& raw,
                            const ScalerState& sc, int series, long end);

/// One forecast window per series over the final K steps, encoder over the
/// preceding E. Adaptive heads first replay the unit state over the
/// training range. Metrics are computed on unscaled targets.
EvalReport eval_fixed(const Model& model, const Dataset& raw, const ScalerState& sc,
                      const SplitBounds& bounds,
                      std::vector<SeriesForecast>* dump = nullptr);

/// Rolling evaluation with frozen global parameters: per roll, encode the
/// most recent E observations, run the adapt pass (recompute decoder h for
/// those realized steps under the current encoder context and update the
/// unit), forecast the next K steps predict-only, then advance by K. The
/// per-series state persists across rolls. `adapt=false` skips step two,
/// which makes a single roll coincide with eval_fixed.
EvalReport eval_streaming(const Model& model, const Dataset& raw, const ScalerState& sc,
                          const SplitBounds& bounds, int n_rolls, bool adapt = true,
                          std::vector<SeriesForecast>* dump = nullptr);

/// Wall-clock seconds for the full test-set forward pass, best of three
/// single-threaded runs over pre-built windows and states. Throws when the
/// test set holds no windows.
double time_inference(const Model& model, const Dataset& raw, const ScalerState& sc,
                      const SplitBounds& bounds);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace aru
