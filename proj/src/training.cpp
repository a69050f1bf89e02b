#include "aru/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <ostream>

namespace aru {

double nll_loss(const Forecast& fc, const double* targets, int horizon) {
  if (static_cast<int>(fc.mu.size()) != horizon)
    throw std::invalid_argument("nll_loss: horizon mismatch");
  constexpr double kLog2Pi = 1.8378770664093454836;
  double total = 0;
  for (int t = 0; t < horizon; ++t) {
    const double mu = fc.mu[t], sg = fc.sigma[t], y = targets[t];
    if (!std::isfinite(mu) || !std::isfinite(sg) || !std::isfinite(y) || sg <= 0.0)
      throw std::invalid_argument("nll_loss: non-finite input or nonpositive sigma");
    const double r = y - mu;
    total += 0.5 * (kLog2Pi + 2.0 * std::log(sg)) + r * r / (2.0 * sg * sg);
  }
  return total / horizon;
}

std::vector<long> window_starts(long length, int encoder_len, int horizon, int stride) {
  if (stride < 1) throw std::invalid_argument("window_starts: stride must be >= 1");
  std::vector<long> out;
  for (long s = 0; s + encoder_len + horizon <= length; s += stride) out.push_back(s);
  return out;
}

namespace {

WindowSample build_window(const Dataset& raw, const ScalerState& sc, int series, long s,
                          int encoder_len, int horizon, bool with_decoder_targets) {
  const Series& ser = raw.series[series];
  WindowSample w;
  w.series = series;
  w.start = s;
  w.encoder_len = encoder_len;
  w.horizon = horizon;
  w.has_decoder_targets = with_decoder_targets;
  w.y_scale = sc.scope == ScaleScope::Window
                  ? target_scale(ser.y.data() + s, encoder_len)
                  : sc.y_scale[series];
  const long total = encoder_len + horizon;
  w.frames.reserve(total);
  for (long i = 0; i < total; ++i) {
    const long t = s + i;
    FeatureFrame f;
    f.cat.reserve(ser.cat.size());
    for (const auto& col : ser.cat) f.cat.push_back(col[t]);
    f.cont.resize(static_cast<long>(ser.cont.size()));
    for (std::size_t c = 0; c < ser.cont.size(); ++c)
      f.cont[static_cast<long>(c)] = scale_continuous(ser.cont[c][t], sc.cont[c]);
    w.frames.push_back(std::move(f));
  }
  const long n_targets = with_decoder_targets ? total : encoder_len;
  w.y.reserve(n_targets);
  for (long i = 0; i < n_targets; ++i) w.y.push_back(ser.y[s + i] / w.y_scale);
  return w;
}

}  // namespace

std::vector<WindowSample> make_windows(const Dataset& raw, const ScalerState& sc,
                                       int series, int encoder_len, int horizon,
                                       int stride) {
  std::vector<WindowSample> out;
  for (long s : window_starts(raw.series[series].length(), encoder_len, horizon, stride))
    out.push_back(build_window(raw, sc, series, s, encoder_len, horizon, true));
  return out;
}

std::vector<WindowSample> make_windows_range(const Dataset& raw, const ScalerState& sc,
                                             int series, long lo, long hi,
                                             int encoder_len, int horizon, int stride) {
  if (stride < 1) throw std::invalid_argument("make_windows_range: stride must be >= 1");
  std::vector<WindowSample> out;
  for (long s = std::max(lo - encoder_len, 0L); s + encoder_len + horizon <= hi;
       s += stride) {
    if (s + encoder_len < lo) continue;  // decoder must start inside [lo, hi)
    out.push_back(build_window(raw, sc, series, s, encoder_len, horizon, true));
  }
  return out;
}

WindowSample make_eval_window(const Dataset& raw, const ScalerState& sc, int series,
                              long dec_start, int encoder_len, int horizon,
                              bool with_targets) {
  const Series& ser = raw.series[series];
  if (dec_start - encoder_len < 0 || dec_start + horizon > ser.length())
    throw std::runtime_error("series " + ser.id + " lacks the encoder+horizon tail");
  return build_window(raw, sc, series, dec_start - encoder_len, encoder_len, horizon,
                      with_targets);
}

AruState replay_state(const ModelConfig& cfg, const ModelParams& params,
                      const Dataset& raw, const ScalerState& sc, int series, long end) {
  AruState state = aru_init(cfg.aru);
  const long e = cfg.encoder_len, k = cfg.horizon;
  const long blocks = (end - e) / k;
  for (long b = blocks; b >= 1; --b) {
    const WindowSample w = make_eval_window(raw, sc, series, end - b * k,
                                            cfg.encoder_len, cfg.horizon, true);
    forward_window(w, cfg, params, &state, Mode::Train);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector relu_mask(const Vector& post) {
  Vector m(post.size());
  for (long i = 0; i < post.size(); ++i) m[i] = post[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

// Backward through one fusion path; returns the gradient of the [h local 1]
// input vector.
Vector ff2_backward(const Ff2Path& f, double dout, const Matrix& w1, const Matrix& w2,
                    const Vector& head_w, Matrix& gw1, Vector& gb1, Matrix& gw2,
                    Vector& gb2, Vector& ghead_w, double& ghead_b) {
  ghead_w += dout * f.z2;
  ghead_b += dout;
  const Vector dp2 = (dout * head_w).cwiseProduct(relu_mask(f.z2));
  gw2 += dp2 * f.z1.transpose();
  gb2 += dp2;
  const Vector dp1 = (w2.transpose() * dp2).cwiseProduct(relu_mask(f.z1));
  gw1 += dp1 * f.in.transpose();
  gb1 += dp1;
  return w1.transpose() * dp1;
}

// Accumulates one window's gradient contribution, scaled by `weight`
// (1/batch). Returns the window's per-step-averaged NLL.
double backward_window(const WindowSample& w, const ModelConfig& cfg,
                       const ModelParams& p, const AruState* init_state,
                       double weight, ModelParams& grads) {
  AruState state;
  AruState* sp = nullptr;
  if (cfg.head != Head::Baseline) {
    state = init_state != nullptr ? *init_state : aru_init(cfg.aru);
    sp = &state;
  }
  ForwardTrace tr;
  const Forecast fc = forward_window_traced(w, cfg, p, sp, Mode::Train, &tr, nullptr);
  const int e = cfg.encoder_len, k_len = cfg.horizon;
  const double loss = nll_loss(fc, w.y.data() + e, k_len);

  const int g_dim = cfg.rnn_units;
  const int v_dim = cfg.features.embedded_width();
  const int h_dim = cfg.h_width();
  const int j_count = cfg.head == Head::Baseline ? 0 : cfg.aru.banks();
  const double wstep = weight / k_len;
  const Vector& g_final = tr.g[e - 1];

  Vector dg = Vector::Zero(g_dim);
  std::vector<Vector> dv(e + k_len, Vector::Zero(v_dim));

  const bool full = cfg.differentiate_local_fit && cfg.head != Head::Baseline;
  std::vector<Matrix> adj_sxx;
  std::vector<Vector> adj_sxy;
  std::vector<double> adj_sn, adj_ss;
  if (full) {
    const int d = cfg.aru.aug_dim();
    adj_sxx.assign(j_count, Matrix::Zero(d, d));
    adj_sxy.assign(j_count, Vector::Zero(d));
    adj_sn.assign(j_count, 0.0);
    adj_ss.assign(j_count, 0.0);
  }

  for (int k = k_len - 1; k >= 0; --k) {
    const double y = w.decoder_y(k);
    const double mu = fc.mu[k], sg = fc.sigma[k];
    const double dmu = wstep * (mu - y) / (sg * sg);
    const double dsg = wstep * (1.0 / sg - (y - mu) * (y - mu) / (sg * sg * sg));

    Vector dh = Vector::Zero(h_dim);
    Vector dm, da;
    if (cfg.head == Head::Baseline) {
      const double dx_sg = dsg * sigmoid(tr.x_sg[k]);
      grads.head_mu_w += dmu * tr.h[k];
      grads.head_mu_b += dmu;
      grads.head_sg_w += dx_sg * tr.h[k];
      grads.head_sg_b += dx_sg;
      dh += dmu * p.head_mu_w + dx_sg * p.head_sg_w;
    } else if (cfg.head == Head::Aru) {
      const double dx_sg = dsg * sigmoid(tr.x_sg[k]);
      const Vector din_m =
          ff2_backward(tr.fm[k], dmu, p.ff2m_w1, p.ff2m_w2, p.ff2m_head_w, grads.ff2m_w1,
                       grads.ff2m_b1, grads.ff2m_w2, grads.ff2m_b2, grads.ff2m_head_w,
                       grads.ff2m_head_b);
      const Vector din_s =
          ff2_backward(tr.fs[k], dx_sg, p.ff2s_w1, p.ff2s_w2, p.ff2s_head_w, grads.ff2s_w1,
                       grads.ff2s_b1, grads.ff2s_w2, grads.ff2s_b2, grads.ff2s_head_w,
                       grads.ff2s_head_b);
      dh += din_m.head(h_dim) + din_s.head(h_dim);
      dm = din_m.segment(h_dim, j_count);
      da = din_s.segment(h_dim, j_count);
    } else {  // AruDirect
      dm = Vector::Zero(j_count);
      da = Vector::Zero(j_count);
      dm[0] = dmu;
      if (tr.locals[k].pred.variance[0] > cfg.direct_var_floor)
        da[0] = dsg * 0.5 / sg;  // sigma = sqrt(a) above the floor
    }

    if (cfg.head != Head::Baseline) {
      const StepLocalTrace& lt = tr.locals[k];
      if (!full) {
        // Stop-gradient: theta is a constant, m depends on the current h only.
        for (int j = 0; j < j_count; ++j)
          dh += dm[j] * lt.params.theta_mu[j].head(h_dim);
      } else {
        Vector u(h_dim + 1);
        u << tr.h[k], 1.0;
        Vector du = Vector::Zero(h_dim + 1);
        for (int j = 0; j < j_count; ++j) {
          const double alpha = cfg.aru.aging[j];
          // Reverse the update; incoming adjoints describe the post-update
          // state, outgoing ones the pre-update state.
          Matrix nxx = alpha * adj_sxx[j];
          Vector nxy = alpha * adj_sxy[j];
          double nsn = alpha * adj_sn[j];
          double nss = alpha * adj_ss[j];
          du += (adj_sxx[j] + adj_sxx[j].transpose()) * u;
          du += adj_sxy[j] * y;
          const double dm_total =
              dm[j] - 2.0 * adj_ss[j] * (y - lt.pred.mean[j]);
          // m = theta . u with theta = (sxx + ridge I)^{-1} sxy
          du += dm_total * lt.params.theta_mu[j];
          Matrix a_mat = lt.pre_sxx[j];
          a_mat.diagonal().array() += cfg.aru.ridge;
          const Vector wv = spd_solve(a_mat, Vector(dm_total * u));
          nxy += wv;
          nxx -= wv * lt.params.theta_mu[j].transpose();
          if (lt.pre_sn[j] > 0.0) {
            nss += da[j] / lt.pre_sn[j];
            nsn -= da[j] * lt.pre_ss[j] / (lt.pre_sn[j] * lt.pre_sn[j]);
          }
          adj_sxx[j] = std::move(nxx);
          adj_sxy[j] = std::move(nxy);
          adj_sn[j] = nsn;
          adj_ss[j] = nss;
        }
        dh += du.head(h_dim);
      }
    }

    // Decoder layers, last to first.
    const Vector& vt = tr.v[e + k];
    const Vector dp3 = dh.cwiseProduct(relu_mask(tr.h[k]));
    grads.dec_w[2] += dp3 * tr.z2[k].transpose();
    grads.dec_b[2] += dp3;
    const Vector dp2 =
        (p.dec_w[2].transpose() * dp3).cwiseProduct(relu_mask(tr.z2[k]));
    Vector in2(tr.z1[k].size() + v_dim);
    in2 << tr.z1[k], vt;
    grads.dec_w[1] += dp2 * in2.transpose();
    grads.dec_b[1] += dp2;
    const Vector din2 = p.dec_w[1].transpose() * dp2;
    const Vector dp1 =
        din2.head(tr.z1[k].size()).cwiseProduct(relu_mask(tr.z1[k]));
    dv[e + k] += din2.tail(v_dim);
    Vector in1(g_dim + v_dim);
    in1 << g_final, vt;
    grads.dec_w[0] += dp1 * in1.transpose();
    grads.dec_b[0] += dp1;
    const Vector din1 = p.dec_w[0].transpose() * dp1;
    dg += din1.head(g_dim);
    dv[e + k] += din1.tail(v_dim);
  }

  // Encoder, backward through time.
  const Vector g_zero = Vector::Zero(g_dim);
  for (int t = e - 1; t >= 0; --t) {
    const Vector dpre =
        dg.cwiseProduct((1.0 - tr.g[t].array().square()).matrix());
    const Vector& g_prev = t == 0 ? g_zero : tr.g[t - 1];
    const double y_prev = t == 0 ? 0.0 : w.y[t - 1];
    Vector in(g_dim + 1 + v_dim);
    in << g_prev, y_prev, tr.v[t];
    grads.enc_w += dpre * in.transpose();
    grads.enc_b += dpre;
    const Vector din = p.enc_w.transpose() * dpre;
    dg = din.head(g_dim);
    dv[t] += din.tail(v_dim);
  }

  // Embedding rows.
  for (int t = 0; t < e + k_len; ++t) {
    long at = 0;
    for (std::size_t f = 0; f < cfg.features.cat_cardinality.size(); ++f) {
      const int dim = cfg.features.cat_embed_dim[f];
      grads.embed[f].row(w.frames[t].cat[f]) += dv[t].segment(at, dim).transpose();
      at += dim;
    }
  }
  return loss;
}

}  // namespace

BatchGrad backward(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                   const ModelParams& params,
                   const std::vector<const AruState*>& init_states) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  if (init_states.size() != batch.size())
    throw std::invalid_argument("backward: one initial state per window required");
  BatchGrad out;
  out.grads = zero_params(cfg);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.loss +=
        weight * backward_window(batch[i], cfg, params, init_states[i], weight, out.grads);
  for (const auto& b : param_blocks(out.grads))
    for (long i = 0; i < b.size; ++i)
      if (!std::isfinite(b.data[i]))
        throw NonFiniteGradient("backward: non-finite gradient in block " + b.name);
  return out;
}

BatchGrad backward(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                   const ModelParams& params, const AruState* init_state) {
  return backward(batch, cfg, params,
                  std::vector<const AruState*>(batch.size(), init_state));
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

AdamState adam_init(const ModelParams& params) {
  AdamState a;
  const long n = param_count(params);
  a.m = Vector::Zero(n);
  a.v = Vector::Zero(n);
  return a;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& adam,
               double lr) {
  auto pb = param_blocks(params);
  auto gb = param_blocks(grads);
  if (pb.size() != gb.size()) throw std::invalid_argument("adam_step: block mismatch");
  ++adam.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  long at = 0;
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (pb[b].size != gb[b].size) throw std::invalid_argument("adam_step: shape mismatch");
    for (long i = 0; i < pb[b].size; ++i, ++at) {
      const double g = gb[b].data[i];
      adam.m[at] = adam.beta1 * adam.m[at] + (1.0 - adam.beta1) * g;
      adam.v[at] = adam.beta2 * adam.v[at] + (1.0 - adam.beta2) * g * g;
      const double mhat = adam.m[at] / bc1;
      const double vhat = adam.v[at] / bc2;
      pb[b].data[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
  }
}

void clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0;
  for (const auto& b : param_blocks(grads))
    for (long i = 0; i < b.size; ++i) sq += b.data[i] * b.data[i];
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (const auto& b : param_blocks(grads))
    for (long i = 0; i < b.size; ++i) b.data[i] *= scale;
}

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::vector<WindowSample>& batch, const ModelConfig& cfg,
                           const ModelParams& params, const AruState* init_state,
                           double tolerance, double fd_step,
                           const ModelParams* analytic_override) {
  BatchGrad analytic;
  if (analytic_override != nullptr) {
    analytic.grads = *analytic_override;
  } else {
    analytic = backward(batch, cfg, params, init_state);
  }

  // Pin each window's per-step local parameters so the differenced function
  // is the stop-gradient objective the reverse pass differentiates.
  const bool pin = cfg.head != Head::Baseline && !cfg.differentiate_local_fit;
  std::vector<std::vector<StepLocalTrace>> pinned(batch.size());
  if (pin) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      AruState st = init_state != nullptr ? *init_state : aru_init(cfg.aru);
      ForwardTrace tr;
      forward_window_traced(batch[i], cfg, params, &st, Mode::Train, &tr, nullptr);
      pinned[i] = std::move(tr.locals);
    }
  }

  ModelParams work = params;
  const auto loss_at = [&]() {
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      AruState st;
      AruState* sp = nullptr;
      const std::vector<StepLocalTrace>* pl = pin ? &pinned[i] : nullptr;
      if (cfg.head != Head::Baseline && !pin) {
        st = init_state != nullptr ? *init_state : aru_init(cfg.aru);
        sp = &st;
      }
      const Forecast fc = forward_window_traced(batch[i], cfg, work, sp, Mode::Train,
                                                nullptr, pl);
      total += nll_loss(fc, batch[i].y.data() + cfg.encoder_len, cfg.horizon);
    }
    return total / static_cast<double>(batch.size());
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  auto wb = param_blocks(work);
  auto ab = param_blocks(analytic.grads);
  for (std::size_t b = 0; b < wb.size(); ++b) {
    GradCheckReport::Block blk;
    blk.name = wb[b].name;
    for (long i = 0; i < wb[b].size; ++i) {
      const double saved = wb[b].data[i];
      wb[b].data[i] = saved + fd_step;
      const double lp = loss_at();
      wb[b].data[i] = saved - fd_step;
      const double lm = loss_at();
      wb[b].data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * fd_step);
      const double rel = std::abs(numeric - ab[b].data[i]) /
                         std::max({1.0, std::abs(numeric), std::abs(ab[b].data[i])});
      blk.max_rel_err = std::max(blk.max_rel_err, rel);
    }
    if (blk.max_rel_err > report.worst_err) {
      report.worst_err = blk.max_rel_err;
      report.worst_block = blk.name;
    }
    report.blocks.push_back(std::move(blk));
  }
  report.pass = report.worst_err <= tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train_model(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& raw,
                        const ScalerState& sc, const SplitBounds& bounds,
                        const ModelParams* warm_start, long start_step,
                        std::ostream* log_stream) {
  cfg.validate();
  if (tc.batch_size < 1 || !(tc.learning_rate > 0.0))
    throw std::invalid_argument("train: batch_size >= 1 and learning_rate > 0 required");

  std::vector<WindowSample> train_w, val_w;
  for (std::size_t i = 0; i < raw.series.size(); ++i) {
    auto tw = make_windows_range(raw, sc, static_cast<int>(i), 0, bounds.train_end[i],
                                 cfg.encoder_len, cfg.horizon, tc.stride);
    if (tw.empty())
      std::cerr << "warning: series " << raw.series[i].id
                << " too short for training windows; skipped\n";
    train_w.insert(train_w.end(), std::make_move_iterator(tw.begin()),
                   std::make_move_iterator(tw.end()));
    auto vw = make_windows_range(raw, sc, static_cast<int>(i), bounds.train_end[i],
                                 bounds.val_end[i], cfg.encoder_len, cfg.horizon,
                                 tc.stride);
    val_w.insert(val_w.end(), std::make_move_iterator(vw.begin()),
                 std::make_move_iterator(vw.end()));
  }
  if (train_w.empty()) throw std::runtime_error("train: no usable training windows");

  Rng init_rng(tc.seed, "train/init");
  ModelParams params = warm_start != nullptr ? *warm_start : init_params(cfg, init_rng);
  AdamState adam = adam_init(params);
  adam.step = start_step;

  // Replay mode: chronological state snapshots at block boundaries, refreshed
  // once per epoch under the epoch's parameters. A window is seeded with the
  // snapshot at the last boundary not after its decoder start, so no window
  // ever sees a state built from its own targets or anything later.
  const bool replay_mode =
      cfg.head != Head::Baseline && tc.state_mode == TrainStateMode::Replay;
  std::vector<long> snap_first(raw.series.size(), 0);
  std::vector<std::vector<AruState>> snaps(raw.series.size());
  const auto refresh_snapshots = [&](const ModelParams& q) {
    if (!replay_mode) return;
    for (std::size_t i = 0; i < raw.series.size(); ++i) {
      const long end = bounds.train_end[i];
      const long blocks = (end - cfg.encoder_len) / cfg.horizon;
      snaps[i].clear();
      snap_first[i] = end;
      if (blocks < 1) continue;
      const long first = end - blocks * cfg.horizon;
      snap_first[i] = first;
      AruState st = aru_init(cfg.aru);
      snaps[i].push_back(st);
      for (long b = 0; b < blocks; ++b) {
        const WindowSample w =
            make_eval_window(raw, sc, static_cast<int>(i), first + b * cfg.horizon,
                             cfg.encoder_len, cfg.horizon, true);
        forward_window(w, cfg, q, &st, Mode::Train);
        snaps[i].push_back(st);
      }
    }
  };
  const auto init_for = [&](const WindowSample& w) -> const AruState* {
    if (!replay_mode || snaps[w.series].empty()) return nullptr;
    const long dec_start = w.start + cfg.encoder_len;
    if (dec_start < snap_first[w.series]) return nullptr;
    const long j = std::min<long>((dec_start - snap_first[w.series]) / cfg.horizon,
                                  static_cast<long>(snaps[w.series].size()) - 1);
    return &snaps[w.series][j];
  };

  // Validation mirrors deployment: adaptive heads start each validation
  // window from the state replayed over the series' training range, the same
  // protocol fixed evaluation uses.
  const auto validation_nll = [&](const ModelParams& q) {
    if (val_w.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<AruState> seed;
    if (cfg.head != Head::Baseline)
      for (std::size_t i = 0; i < raw.series.size(); ++i)
        seed.push_back(replay_state(cfg, q, raw, sc, static_cast<int>(i),
                                    bounds.train_end[i]));
    double total = 0;
    for (const WindowSample& w : val_w) {
      AruState st;
      AruState* sp = nullptr;
      if (cfg.head != Head::Baseline) {
        st = seed[w.series];
        sp = &st;
      }
      const Forecast fc = forward_window(w, cfg, q, sp, Mode::Train);
      total += nll_loss(fc, w.y.data() + cfg.encoder_len, cfg.horizon);
    }
    return total / static_cast<double>(val_w.size());
  };

  TrainResult res;
  res.params = params;
  res.best_val_nll = std::numeric_limits<double>::infinity();

  std::vector<int> order(train_w.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(tc.seed, "train/shuffle/" + std::to_string(epoch));
    shuffle_rng.shuffle(order);
    refresh_snapshots(params);
    double loss_sum = 0;
    long n_done = 0;
    for (std::size_t at = 0; at < order.size(); at += tc.batch_size) {
      const std::size_t end = std::min(order.size(), at + tc.batch_size);
      std::vector<WindowSample> batch;
      std::vector<const AruState*> inits;
      batch.reserve(end - at);
      inits.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) {
        batch.push_back(train_w[order[i]]);
        inits.push_back(init_for(batch.back()));
      }
      BatchGrad bg;
      try {
        bg = backward(batch, cfg, params, inits);
      } catch (const NonFiniteGradient&) {
        throw TrainingDiverged(epoch);
      } catch (const std::invalid_argument& e) {
        if (std::string(e.what()).find("nll_loss") != std::string::npos)
          throw TrainingDiverged(epoch);
        throw;
      }
      if (!std::isfinite(bg.loss)) throw TrainingDiverged(epoch);
      loss_sum += bg.loss * static_cast<double>(batch.size());
      n_done += static_cast<long>(batch.size());
      clip_gradients(bg.grads, tc.clip_norm);
      adam_step(params, bg.grads, adam, tc.learning_rate);
    }
    const double train_nll = loss_sum / static_cast<double>(n_done);
    if (!std::isfinite(train_nll)) throw TrainingDiverged(epoch);
    const double val_nll = validation_nll(params);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back({epoch, train_nll, val_nll, seconds});
    if (log_stream)
      (*log_stream) << epoch << '\t' << train_nll << '\t' << val_nll << '\t' << seconds
                    << '\n';
    if (!std::isnan(val_nll) && val_nll < res.best_val_nll) {
      res.best_val_nll = val_nll;
      res.params = params;
    }
  }
  if (std::isinf(res.best_val_nll)) res.params = params;  // no validation windows
  res.final_params = params;
  res.steps = adam.step;
  return res;
}

}  // namespace aru
