#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aru/data.hpp"
#include "aru/forecaster.hpp"

namespace aru {

// ---------------------------------------------------------------------------
// Loss and windows
// ---------------------------------------------------------------------------

/// Gaussian negative log likelihood, averaged per horizon step:
/// mean_t [ 0.5 log(2 pi sigma_t^2) + (y_t - mu_t)^2 / (2 sigma_t^2) ].
double nll_loss(const Forecast& fc, const double* targets, int horizon);

/// Window start offsets s = 0, stride, 2*stride, ... with s + E + K <= length.
/// Empty when the series is too short (callers warn and skip).
std::vector<long> window_starts(long length, int encoder_len, int horizon, int stride);

/// Materializes the sliding windows of one series, scaled and ready for the
/// model: encoder span [s, s+E), decoder span [s+E, s+E+K).
std::vector<WindowSample> make_windows(const Dataset& raw, const ScalerState& sc,
                                       int series, int encoder_len, int horizon,
                                       int stride);

/// Windows whose decoder span lies inside [lo, hi) (encoder context may reach
/// below lo, never below 0). Used for the train/validation regions.
std::vector<WindowSample> make_windows_range(const Dataset& raw, const ScalerState& sc,
                                             int series, long lo, long hi,
                                             int encoder_len, int horizon, int stride);

/// One window with decoder span [dec_start, dec_start+K) and encoder span
/// [dec_start-E, dec_start). Decoder targets are attached only when
/// `with_targets` (they must then be realized values).
WindowSample make_eval_window(const Dataset& raw, const ScalerState& sc, int series,
                              long dec_start, int encoder_len, int horizon,
                              bool with_targets);

/// Chronological replay of realized history into a fresh unit state:
/// consecutive horizon-sized blocks ending at `end`, each decoded under an
/// encoder over its preceding E steps and updated with realized targets.
/// Steps before the first full block only serve as encoder context.
AruState replay_state(const ModelConfig& cfg, const ModelParams& params,
                      const Dataset& raw, const ScalerState& sc, int series, long end);

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Exact reverse-mode gradients of the mean batch NLL for every parameter.
///
/// The local fit is treated under a stop-gradient policy: the per-step local
/// parameters (theta) recovered from the statistics are constants with
/// respect to everything that built them; gradient still flows through the
/// fusion inputs m and a, and through m's bilinear dependence on the current
/// step's h. With ModelConfig::differentiate_local_fit the within-window
/// statistics recursion (including the closed-form solve) is differentiated
/// in full instead.
///
/// `init_state` seeds each window's unit state (copied per window); null
/// means the zero state. Ignored for the Baseline head.
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BatchGrad {
  double loss = 0;
  ModelParams grads;
};
BatchGrad backward(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                   const ModelParams& params, const AruState* init_state = nullptr);

/// Per-window initial states (null entries mean the zero state).
BatchGrad backward(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                   const ModelParams& params,
                   const std::vector<const AruState*>& init_states);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// How each training window's unit state is seeded. Zero starts every window
/// from the empty state. Replay snapshots a chronological replay of each
/// series at the start of every epoch (under the epoch's parameters) and
/// seeds each window with the snapshot at the nearest block boundary before
/// its decoder span, so training sees the same mature states evaluation
/// does. Both are well defined under window shuffling; the snapshots are a
/// function of (series, position) alone.
enum class TrainStateMode { Zero, Replay };

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-4;
  int stride = 1;
  int epochs = 10;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // global-norm gradient clip
  TrainStateMode state_mode = TrainStateMode::Zero;
};

/// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  Vector m, v;  // flat, in param_blocks order
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState adam_init(const ModelParams& params);
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& adam, double lr);

/// Scales gradients down to the given global norm when they exceed it.
void clip_gradients(ModelParams& grads, double max_norm);

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------

/// Central finite differences of the training objective against the analytic
/// reverse pass, blockwise. The objective differentiated is the one training
/// optimizes: under the stop-gradient policy the per-step local parameters
/// are pinned from the base forward before differencing.
struct GradCheckReport {
  struct Block {
    std::string name;
    double max_rel_err = 0;
  };
  std::vector<Block> blocks;
  double tolerance = 0;
  bool pass = false;
  std::string worst_block;
  double worst_err = 0;
};

/// `analytic_override`, when given, is checked in place of the reverse pass's
/// own output; fault-injection tests use it to prove the checker catches a
/// wrong gradient.
GradCheckReport grad_check(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                           const ModelParams& params, const AruState* init_state,
                           double tolerance, double fd_step = 1e-5,
                           const ModelParams* analytic_override = nullptr);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainingDiverged : std::runtime_error {
  int epoch;
  explicit TrainingDiverged(int epoch_)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch_)),
        epoch(epoch_) {}
};

struct EpochLog {
  int epoch = 0;
  double train_nll = 0;
  double val_nll = 0;
  double seconds = 0;
};

struct TrainResult {
  ModelParams params;        // best validation NLL
  ModelParams final_params;  // after the last epoch, for resuming
  double best_val_nll = 0;
  long steps = 0;  // optimizer steps taken (cumulative when resuming)
  std::vector<EpochLog> log;
};

/// Trains on windows inside the train region, validates on windows whose
/// decoder span lies in the validation region, and keeps the best-validation
/// parameters. Windows are shuffled each epoch from the run seed. Every
/// window starts from the zero unit state. `log_stream`, when given,
/// receives one tab-separated line per epoch.
TrainResult train_model(const ModelConfig& cfg, const TrainConfig& tc,
                        const Dataset& raw, const ScalerState& sc,
                        const SplitBounds& bounds,
                        const ModelParams* warm_start = nullptr, long start_step = 0,
                        std::ostream* log_stream = nullptr);

}  // namespace aru
