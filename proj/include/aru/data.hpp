#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aru/linalg.hpp"

namespace aru {

// ---------------------------------------------------------------------------
// Dataset
//
// Columnar per series. Timestamps are integers, strictly increasing and
// regularly spaced within a series. For hourly/daily/weekly data they are
// epoch seconds; for monthly data they are months since 1970-01.
// ---------------------------------------------------------------------------

struct Series {
  std::string id;
  std::vector<long long> t;
  std::vector<double> y;
  std::vector<std::vector<double>> cont;  // [feature][step]
  std::vector<std::vector<int>> cat;      // [feature][step]

  long length() const { return static_cast<long>(t.size()); }
};

struct Dataset {
  std::vector<std::string> cont_names;
  std::vector<std::string> cat_names;
  std::vector<Series> series;
};

/// CSV ingestion. Header row required; `series_id`, `timestamp` and `y`
/// columns are mandatory, every other column is a feature. Columns named in
/// `categoricals` are parsed as nonnegative integer codes, the rest as reals.
/// Rows may arrive in any order; they are grouped per series and sorted by
/// timestamp. Unparseable rows are reported with their line number, and
/// irregular spacing or duplicate timestamps are rejected naming the series.
Dataset load_csv(const std::string& path,
                 const std::vector<std::string>& categoricals = {});

void write_csv(const Dataset& ds, const std::string& path);

// ---------------------------------------------------------------------------
// Derived time features
// ---------------------------------------------------------------------------

enum class Granularity { Hourly, Daily, Weekly, Monthly };

Granularity granularity_from_string(const std::string& name);
std::string to_string(Granularity g);

struct TimeFeatureSchema {
  std::vector<std::string> names;
  std::vector<int> cardinalities;
};

/// Feature layout per granularity:
///   hourly  -> hour-of-day (24), day-of-week (7, Monday=0), month (12)
///   daily   -> day-of-month (31), month (12)
///   weekly  -> month (12), week-of-year (53)
///   monthly -> month (12)
TimeFeatureSchema time_feature_schema(Granularity g);

/// Categorical codes for one timestamp, in schema order. UTC calendar.
std::vector<int> time_features(long long timestamp, Granularity g);

/// Appends the derived calendar features as categorical columns.
Dataset add_time_features(const Dataset& ds, Granularity g);

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// How the per-series target scale is computed. Series scope uses the
/// training range of the whole series; window scope (for very short series)
/// recomputes 1 + mean(y) over each window's encoder span instead.
enum class ScaleScope { Series, Window };

struct ScalerState {
  struct Range {
    double min = 0;
    double max = 0;
  };
  std::vector<Range> cont;        // per continuous feature, train-range min/max
  std::vector<double> y_scale;    // per series, parallel to Dataset::series
  ScaleScope scope = ScaleScope::Series;
};

/// Min-max position of x in [min, max]; constant features map to 0. Values
/// outside the training range are clamped to [-0.5, 1.5].
double scale_continuous(double x, const ScalerState::Range& r);

/// 1 + mean(y), kept away from zero (|scale| >= 1, sign preserved) so that
/// dividing by it never amplifies a series.
double target_scale(const double* y, long n);

/// Fits ranges and per-series target scales on the training range only
/// (first `train_end[i]` steps of series i).
ScalerState fit_scalers(const Dataset& ds, const std::vector<long>& train_end);

/// Returns a copy with continuous features scaled and y divided by the
/// per-series scale. Raw targets are needed for metrics, so callers keep the
/// original dataset around.
Dataset apply_scalers(const Dataset& ds, const ScalerState& sc);

// ---------------------------------------------------------------------------
// Synthetic generator
//
// Hourly series that are exactly linear in one-hot calendar features:
//   y_t = theta . [onehot(hour) onehot(dow) 1] + noise,  theta ~ U[-gamma, gamma]
// The one-hot columns are emitted as explicit continuous features so the
// generative model stays linear in what the model sees.
// ---------------------------------------------------------------------------

struct SynthConfig {
  int n_series = 10;
  long length = 2000;
  double gamma = 20.0;      // local parameter range
  double noise_sigma = 1.0;
  bool with_series_id = false;
  std::uint64_t seed = 0;
};

struct SynthDataset {
  Dataset data;
  std::vector<Vector> theta;  // per series, length 32 (24 + 7 + bias)
};

SynthDataset synth_generate(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Chronological splits
//
// Boundaries, not copies: [0, train_end) is train, [train_end, val_end) is
// validation, [val_end, T) is test. Encoder context may reach back across a
// boundary; targets never do.
// ---------------------------------------------------------------------------

enum class Protocol { Fixed, Streaming };

struct SplitSpec {
  Protocol protocol = Protocol::Fixed;
  int horizon = 24;   // K
  int n_rolls = 1;    // streaming only
  int encoder_len = 0;  // checked so train still fits at least one window
};

struct SplitBounds {
  std::vector<long> train_end;  // per series
  std::vector<long> val_end;
};

/// Fixed: test is the last K steps, validation the K before. Streaming: test
/// is the last n_rolls*K steps, validation the same-sized region before.
/// Throws naming the first series too short for the protocol.
SplitBounds split(const Dataset& ds, const SplitSpec& spec);

}  // namespace aru
