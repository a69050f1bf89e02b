#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "aru/aru_unit.hpp"
#include "aru/linalg.hpp"
#include "aru/rng.hpp"

namespace aru {

enum class Head { Baseline, Aru, AruDirect };

Head head_from_string(const std::string& name);
std::string to_string(Head head);

/// Input feature layout: categorical features go through embedding lookups,
/// continuous features are fed pre-scaled.
struct FeatureSchema {
  std::vector<int> cat_cardinality;
  std::vector<int> cat_embed_dim;
  int continuous = 0;

  int embedded_width() const;
  void validate() const;
};

/// Full architecture description. `hidden_sizes` are the decoder's three
/// ReLU layers (the third is the width of the decoder output h), and
/// `ff2_sizes` the two ReLU layers of each fusion network.
struct ModelConfig {
  int rnn_units = 16;
  std::array<int, 3> hidden_sizes{16, 15, 10};
  std::array<int, 2> ff2_sizes{16, 10};
  int encoder_len = 24;  // E
  int horizon = 24;      // K
  FeatureSchema features;
  Head head = Head::Baseline;
  AruConfig aru;  // used when head != Baseline; feature_dim must equal h width
  double direct_var_floor = 1e-3;  // variance floor for the direct head
  bool differentiate_local_fit = false;  // see training: full within-window
                                         // backprop through the statistics

  int h_width() const { return hidden_sizes[2]; }
  void validate() const;
};

/// Named presets: small = 8 units | 8,6,6; medium = 16 | 16,15,10;
/// large = 50 | 32,20,15. Fusion layers default to (first, third) decoder
/// widths.
void apply_preset(ModelConfig& cfg, const std::string& preset);

/// All global trainable parameters. Shapes derive from ModelConfig; blocks
/// for the optimizer, checkpointing and gradient checks are enumerated by
/// param_blocks() in declared order.
struct ModelParams {
  std::vector<Matrix> embed;  // per categorical feature: cardinality x dim

  Matrix enc_w;  // rnn_units x (rnn_units + 1 + V)
  Vector enc_b;

  std::array<Matrix, 3> dec_w;  // [g v] -> h0; [h0 v] -> h1 (skip); h1 -> h2
  std::array<Vector, 3> dec_b;

  Vector head_mu_w;  // Gaussian head on [h 1]
  double head_mu_b = 0;
  Vector head_sg_w;
  double head_sg_b = 0;

  Matrix ff2m_w1;  // fusion mean path on [h m 1]
  Vector ff2m_b1;
  Matrix ff2m_w2;
  Vector ff2m_b2;
  Vector ff2m_head_w;
  double ff2m_head_b = 0;

  Matrix ff2s_w1;  // fusion sigma path on [h a 1]
  Vector ff2s_b1;
  Matrix ff2s_w2;
  Vector ff2s_b2;
  Vector ff2s_head_w;
  double ff2s_head_b = 0;
};

struct ParamBlock {
  std::string name;
  double* data;
  long size;
};
struct ConstParamBlock {
  std::string name;
  const double* data;
  long size;
};

std::vector<ParamBlock> param_blocks(ModelParams& p);
std::vector<ConstParamBlock> param_blocks(const ModelParams& p);
long param_count(const ModelParams& p);

/// Zero-shaped parameters for the given config.
ModelParams zero_params(const ModelConfig& cfg);

/// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] layers, embeddings in
/// [-0.05, 0.05].
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Windows and forecasts
// ---------------------------------------------------------------------------

/// One time step's model inputs.
struct FeatureFrame {
  std::vector<int> cat;  // categorical codes, schema order
  Vector cont;           // scaled continuous features
};

/// One encoder/decoder window. Targets are scaled; y_scale maps them back.
/// Decoder targets (the last K entries of y) are present iff the window is
/// used for training or within-window adaptation.
struct WindowSample {
  int series = 0;
  long start = 0;  // position of the first encoder step within the series
  int encoder_len = 0;
  int horizon = 0;
  std::vector<FeatureFrame> frames;  // E + K
  std::vector<double> y;             // E (+ K when decoder targets exist)
  double y_scale = 1.0;
  bool has_decoder_targets = false;

  double decoder_y(int k) const { return y[encoder_len + k]; }
};

/// Per-horizon Gaussian prediction, in scaled units. Local components are
/// populated for the adaptive heads.
struct Forecast {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<Vector> local_mean;      // K x J
  std::vector<Vector> local_variance;  // K x J
};

enum class Mode { Train, Infer };

// ---------------------------------------------------------------------------
// Forward operations. All deterministic; none mutate ModelParams.
// ---------------------------------------------------------------------------

/// Embedding rows concatenated with the scaled continuous features.
Vector embed_inputs(const FeatureFrame& frame, const ModelConfig& cfg,
                    const ModelParams& p);

/// Final state of the tanh recurrence g_t = tanh(W [g_{t-1} y_{t-1} v_t] + b)
/// over the window's E encoder steps; y_0 is taken as 0.
Vector encode(const WindowSample& window, const ModelConfig& cfg,
              const ModelParams& p);

/// Three ReLU layers on [g v_t], with v_t concatenated again into the second
/// layer's input (skip connection). Horizon steps are decoded independently.
Vector decode_step(const Vector& g, const Vector& v, const ModelConfig& cfg,
                   const ModelParams& p);

/// x + log1p(exp(-x)) branch-stabilized softplus; strictly positive.
double softplus(double x);

/// mu = w.[h 1], sigma = softplus(w'.[h 1]).
std::pair<double, double> gaussian_head(const Vector& h, const ModelParams& p);

/// Fusion of the decoder output with the local prediction: two independent
/// two-layer ReLU networks, one on [h m 1] feeding the mean, one on [h a 1]
/// feeding the (softplus) sigma.
std::pair<double, double> ff2_combine(const Vector& h, const LocalPrediction& local,
                                      const ModelConfig& cfg, const ModelParams& p);

/// Runs one window through the model.
///   Baseline:  Gaussian head per horizon step; state is ignored.
///   Aru train: per step, predict with the current state, emit the fused
///              (mu, sigma), then update the state with (h_t, y_t).
///   Aru infer: predict-only; the state is never mutated.
///   AruDirect: emits the first bank's local prediction directly,
///              sigma = sqrt(max(a, floor)).
/// `state` may be null for the Baseline head.
Forecast forward_window(const WindowSample& window, const ModelConfig& cfg,
                        const ModelParams& p, AruState* state, Mode mode);

// ---------------------------------------------------------------------------
// Traced forward, for the reverse pass and the gradient checker.
// ---------------------------------------------------------------------------

/// Intermediates of one fusion path: input, post-ReLU activations, output.
struct Ff2Path {
  Vector in, z1, z2;
  double out = 0;
};

/// Local-fit quantities recorded at one decoder step: the parameters solved
/// from the pre-update state, the emitted prediction, and (only under
/// differentiate_local_fit) the pre-update statistics themselves.
struct StepLocalTrace {
  LocalParams params;
  LocalPrediction pred;
  std::vector<Matrix> pre_sxx;
  std::vector<double> pre_sn, pre_ss;
};

/// Recorded intermediates of one window forward pass.
struct ForwardTrace {
  std::vector<Vector> v;          // E+K embedded inputs
  std::vector<Vector> g;          // encoder states, g[t] after step t
  std::vector<Vector> z1, z2, h;  // decoder activations per horizon step
  std::vector<double> x_sg;       // pre-softplus sigma inputs
  std::vector<Ff2Path> fm, fs;    // fusion traces (Aru head)
  std::vector<StepLocalTrace> locals;
};

/// `pinned_locals`, when set, replaces the state machinery: step k uses the
/// pinned parameters as constants (mean recomputed against the fresh h) and
/// no update runs. This is how the training objective under the
/// stop-gradient policy is evaluated as a plain function of the parameters.
Forecast forward_window_traced(const WindowSample& window, const ModelConfig& cfg,
                               const ModelParams& p, AruState* state, Mode mode,
                               ForwardTrace* trace,
                               const std::vector<StepLocalTrace>* pinned_locals = nullptr);

}  // namespace aru
