#include "aru/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aru {

Head head_from_string(const std::string& name) {
  if (name == "baseline") return Head::Baseline;
  if (name == "aru") return Head::Aru;
  if (name == "aru-direct" || name == "arudirect") return Head::AruDirect;
  throw std::invalid_argument("unknown head: " + name);
}

std::string to_string(Head head) {
  switch (head) {
    case Head::Baseline: return "baseline";
    case Head::Aru: return "aru";
    case Head::AruDirect: return "aru-direct";
  }
  return "?";
}

int FeatureSchema::embedded_width() const {
  int w = continuous;
  for (int d : cat_embed_dim) w += d;
  return w;
}

void FeatureSchema::validate() const {
  if (cat_cardinality.size() != cat_embed_dim.size())
    throw std::invalid_argument("schema: cardinality/embed_dim length mismatch");
  for (std::size_t i = 0; i < cat_cardinality.size(); ++i)
    if (cat_cardinality[i] < 1 || cat_embed_dim[i] < 1)
      throw std::invalid_argument("schema: cardinalities and embed dims must be >= 1");
  if (continuous < 0) throw std::invalid_argument("schema: negative continuous count");
}

void ModelConfig::validate() const {
  if (rnn_units < 1) throw std::invalid_argument("config: rnn_units must be >= 1");
  for (int hs : hidden_sizes)
    if (hs < 1) throw std::invalid_argument("config: hidden sizes must be >= 1");
  for (int fs : ff2_sizes)
    if (fs < 1) throw std::invalid_argument("config: ff2 sizes must be >= 1");
  if (encoder_len < 1 || horizon < 1)
    throw std::invalid_argument("config: encoder_len and horizon must be >= 1");
  features.validate();
  if (head != Head::Baseline) {
    aru.validate();
    if (aru.feature_dim != h_width())
      throw std::invalid_argument("config: aru feature_dim must equal decoder output width");
  }
}

void apply_preset(ModelConfig& cfg, const std::string& preset) {
  if (preset == "small") {
    cfg.rnn_units = 8;
    cfg.hidden_sizes = {8, 6, 6};
  } else if (preset == "medium") {
    cfg.rnn_units = 16;
    cfg.hidden_sizes = {16, 15, 10};
  } else if (preset == "large") {
    cfg.rnn_units = 50;
    cfg.hidden_sizes = {32, 20, 15};
  } else {
    throw std::invalid_argument("unknown preset: " + preset);
  }
  cfg.ff2_sizes = {cfg.hidden_sizes[0], cfg.hidden_sizes[2]};
}

namespace {

int ff2_mu_input_width(const ModelConfig& cfg) {
  const int j = cfg.head == Head::Baseline ? 0 : cfg.aru.banks();
  return cfg.h_width() + j + 1;
}

Vector relu(Vector x) {
  for (long i = 0; i < x.size(); ++i) x[i] = std::max(0.0, x[i]);
  return x;
}

}  // namespace

ModelParams zero_params(const ModelConfig& cfg) {
  ModelParams p;
  const int v = cfg.features.embedded_width();
  const int g = cfg.rnn_units;
  const auto& hs = cfg.hidden_sizes;
  for (std::size_t i = 0; i < cfg.features.cat_cardinality.size(); ++i)
    p.embed.push_back(Matrix::Zero(cfg.features.cat_cardinality[i],
                                   cfg.features.cat_embed_dim[i]));
  p.enc_w = Matrix::Zero(g, g + 1 + v);
  p.enc_b = Vector::Zero(g);
  p.dec_w[0] = Matrix::Zero(hs[0], g + v);
  p.dec_w[1] = Matrix::Zero(hs[1], hs[0] + v);  // skip connection widens layer 2
  p.dec_w[2] = Matrix::Zero(hs[2], hs[1]);
  for (int i = 0; i < 3; ++i) p.dec_b[i] = Vector::Zero(hs[i]);
  p.head_mu_w = Vector::Zero(hs[2]);
  p.head_sg_w = Vector::Zero(hs[2]);
  const int fin = ff2_mu_input_width(cfg);
  p.ff2m_w1 = Matrix::Zero(cfg.ff2_sizes[0], fin);
  p.ff2m_b1 = Vector::Zero(cfg.ff2_sizes[0]);
  p.ff2m_w2 = Matrix::Zero(cfg.ff2_sizes[1], cfg.ff2_sizes[0]);
  p.ff2m_b2 = Vector::Zero(cfg.ff2_sizes[1]);
  p.ff2m_head_w = Vector::Zero(cfg.ff2_sizes[1]);
  p.ff2s_w1 = Matrix::Zero(cfg.ff2_sizes[0], fin);
  p.ff2s_b1 = Vector::Zero(cfg.ff2_sizes[0]);
  p.ff2s_w2 = Matrix::Zero(cfg.ff2_sizes[1], cfg.ff2_sizes[0]);
  p.ff2s_b2 = Vector::Zero(cfg.ff2_sizes[1]);
  p.ff2s_head_w = Vector::Zero(cfg.ff2_sizes[1]);
  return p;
}

namespace {

void fill_uniform(Rng& rng, double bound, double* data, long n) {
  for (long i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

void init_layer(Rng& rng, Matrix& w, Vector* b) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
  fill_uniform(rng, bound, w.data(), w.size());
  if (b) fill_uniform(rng, bound, b->data(), b->size());
}

void init_head(Rng& rng, Vector& w, double& b) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.size() + 1));
  fill_uniform(rng, bound, w.data(), w.size());
  b = rng.uniform(-bound, bound);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p = zero_params(cfg);
  for (Matrix& table : p.embed) fill_uniform(rng, 0.05, table.data(), table.size());
  init_layer(rng, p.enc_w, &p.enc_b);
  for (int i = 0; i < 3; ++i) init_layer(rng, p.dec_w[i], &p.dec_b[i]);
  init_head(rng, p.head_mu_w, p.head_mu_b);
  init_head(rng, p.head_sg_w, p.head_sg_b);
  init_layer(rng, p.ff2m_w1, &p.ff2m_b1);
  init_layer(rng, p.ff2m_w2, &p.ff2m_b2);
  init_head(rng, p.ff2m_head_w, p.ff2m_head_b);
  init_layer(rng, p.ff2s_w1, &p.ff2s_b1);
  init_layer(rng, p.ff2s_w2, &p.ff2s_b2);
  init_head(rng, p.ff2s_head_w, p.ff2s_head_b);
  return p;
}

std::vector<ParamBlock> param_blocks(ModelParams& p) {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < p.embed.size(); ++i)
    blocks.push_back({"embed." + std::to_string(i), p.embed[i].data(), p.embed[i].size()});
  blocks.push_back({"enc.w", p.enc_w.data(), p.enc_w.size()});
  blocks.push_back({"enc.b", p.enc_b.data(), p.enc_b.size()});
  for (int i = 0; i < 3; ++i) {
    blocks.push_back({"dec.w" + std::to_string(i), p.dec_w[i].data(), p.dec_w[i].size()});
    blocks.push_back({"dec.b" + std::to_string(i), p.dec_b[i].data(), p.dec_b[i].size()});
  }
  blocks.push_back({"head.mu.w", p.head_mu_w.data(), p.head_mu_w.size()});
  blocks.push_back({"head.mu.b", &p.head_mu_b, 1});
  blocks.push_back({"head.sg.w", p.head_sg_w.data(), p.head_sg_w.size()});
  blocks.push_back({"head.sg.b", &p.head_sg_b, 1});
  blocks.push_back({"ff2.mu.w1", p.ff2m_w1.data(), p.ff2m_w1.size()});
  blocks.push_back({"ff2.mu.b1", p.ff2m_b1.data(), p.ff2m_b1.size()});
  blocks.push_back({"ff2.mu.w2", p.ff2m_w2.data(), p.ff2m_w2.size()});
  blocks.push_back({"ff2.mu.b2", p.ff2m_b2.data(), p.ff2m_b2.size()});
  blocks.push_back({"ff2.mu.head.w", p.ff2m_head_w.data(), p.ff2m_head_w.size()});
  blocks.push_back({"ff2.mu.head.b", &p.ff2m_head_b, 1});
  blocks.push_back({"ff2.sg.w1", p.ff2s_w1.data(), p.ff2s_w1.size()});
  blocks.push_back({"ff2.sg.b1", p.ff2s_b1.data(), p.ff2s_b1.size()});
  blocks.push_back({"ff2.sg.w2", p.ff2s_w2.data(), p.ff2s_w2.size()});
  blocks.push_back({"ff2.sg.b2", p.ff2s_b2.data(), p.ff2s_b2.size()});
  blocks.push_back({"ff2.sg.head.w", p.ff2s_head_w.data(), p.ff2s_head_w.size()});
  blocks.push_back({"ff2.sg.head.b", &p.ff2s_head_b, 1});
  return blocks;
}

std::vector<ConstParamBlock> param_blocks(const ModelParams& p) {
  std::vector<ConstParamBlock> out;
  for (const ParamBlock& b : param_blocks(const_cast<ModelParams&>(p)))
    out.push_back({b.name, b.data, b.size});
  return out;
}

long param_count(const ModelParams& p) {
  long n = 0;
  for (const auto& b : param_blocks(p)) n += b.size;
  return n;
}

Vector embed_inputs(const FeatureFrame& frame, const ModelConfig& cfg,
                    const ModelParams& p) {
  const FeatureSchema& schema = cfg.features;
  if (frame.cat.size() != schema.cat_cardinality.size() ||
      frame.cont.size() != schema.continuous)
    throw std::invalid_argument("embed_inputs: frame does not match schema");
  Vector v(schema.embedded_width());
  long at = 0;
  for (std::size_t f = 0; f < frame.cat.size(); ++f) {
    const int code = frame.cat[f];
    if (code < 0 || code >= schema.cat_cardinality[f])
      throw std::out_of_range("embed_inputs: category code " + std::to_string(code) +
                              " out of range for feature " + std::to_string(f));
    v.segment(at, schema.cat_embed_dim[f]) = p.embed[f].row(code).transpose();
    at += schema.cat_embed_dim[f];
  }
  v.tail(schema.continuous) = frame.cont;
  return v;
}

namespace {

// One encoder step: tanh(W [g_prev y_prev v] + b).
Vector encoder_step(const Vector& g_prev, double y_prev, const Vector& v,
                    const ModelParams& p) {
  const long g = g_prev.size();
  Vector in(g + 1 + v.size());
  in.head(g) = g_prev;
  in[g] = y_prev;
  in.tail(v.size()) = v;
  Vector out = p.enc_w * in + p.enc_b;
  for (long i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return out;
}

struct DecodedStep {
  Vector z1, z2, h;
};

DecodedStep decode_step_full(const Vector& g, const Vector& v, const ModelParams& p) {
  DecodedStep d;
  Vector in1(g.size() + v.size());
  in1 << g, v;
  d.z1 = relu(p.dec_w[0] * in1 + p.dec_b[0]);
  Vector in2(d.z1.size() + v.size());
  in2 << d.z1, v;
  d.z2 = relu(p.dec_w[1] * in2 + p.dec_b[1]);
  d.h = relu(p.dec_w[2] * d.z2 + p.dec_b[2]);
  return d;
}

Ff2Path ff2_path(const Vector& h, const Vector& local, const Matrix& w1, const Vector& b1,
                 const Matrix& w2, const Vector& b2, const Vector& head_w, double head_b) {
  Ff2Path f;
  f.in.resize(h.size() + local.size() + 1);
  f.in << h, local, 1.0;
  f.z1 = relu(w1 * f.in + b1);
  f.z2 = relu(w2 * f.z1 + b2);
  f.out = head_w.dot(f.z2) + head_b;
  return f;
}

}  // namespace

Vector encode(const WindowSample& window, const ModelConfig& cfg, const ModelParams& p) {
  if (static_cast<int>(window.frames.size()) < window.encoder_len ||
      window.encoder_len != cfg.encoder_len)
    throw std::invalid_argument("encode: window/encoder length mismatch");
  Vector g = Vector::Zero(cfg.rnn_units);
  for (int t = 0; t < cfg.encoder_len; ++t) {
    const double y_prev = t == 0 ? 0.0 : window.y[t - 1];
    g = encoder_step(g, y_prev, embed_inputs(window.frames[t], cfg, p), p);
  }
  return g;
}

Vector decode_step(const Vector& g, const Vector& v, const ModelConfig& cfg,
                   const ModelParams& p) {
  if (g.size() != cfg.rnn_units || v.size() != cfg.features.embedded_width())
    throw std::invalid_argument("decode_step: input width mismatch");
  return decode_step_full(g, v, p).h;
}

double softplus(double x) {
  const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::max(sp, std::numeric_limits<double>::min());
}

std::pair<double, double> gaussian_head(const Vector& h, const ModelParams& p) {
  const double mu = p.head_mu_w.dot(h) + p.head_mu_b;
  const double sg = softplus(p.head_sg_w.dot(h) + p.head_sg_b);
  return {mu, sg};
}

std::pair<double, double> ff2_combine(const Vector& h, const LocalPrediction& local,
                                      const ModelConfig& cfg, const ModelParams& p) {
  const Ff2Path mu = ff2_path(h, local.mean, p.ff2m_w1, p.ff2m_b1, p.ff2m_w2, p.ff2m_b2,
                              p.ff2m_head_w, p.ff2m_head_b);
  const Ff2Path sg = ff2_path(h, local.variance, p.ff2s_w1, p.ff2s_b1, p.ff2s_w2,
                              p.ff2s_b2, p.ff2s_head_w, p.ff2s_head_b);
  (void)cfg;
  return {mu.out, softplus(sg.out)};
}

Forecast forward_window_traced(const WindowSample& window, const ModelConfig& cfg,
                               const ModelParams& p, AruState* state, Mode mode,
                               ForwardTrace* trace,
                               const std::vector<StepLocalTrace>* pinned_locals) {
  const int e = cfg.encoder_len;
  const int k = cfg.horizon;
  if (window.encoder_len != e || window.horizon != k ||
      static_cast<int>(window.frames.size()) != e + k)
    throw std::invalid_argument("forward_window: window shape does not match config");
  if (mode == Mode::Train && !window.has_decoder_targets)
    throw std::invalid_argument("forward_window: train mode requires decoder targets");
  const bool local_head = cfg.head != Head::Baseline;
  if (local_head && state == nullptr && pinned_locals == nullptr)
    throw std::invalid_argument("forward_window: adaptive head needs an ARU state");
  if (local_head && state != nullptr && state->config.feature_dim != cfg.h_width())
    throw std::invalid_argument("forward_window: ARU state width != decoder output width");

  std::vector<Vector> v(e + k);
  for (int t = 0; t < e + k; ++t) v[t] = embed_inputs(window.frames[t], cfg, p);

  Vector g = Vector::Zero(cfg.rnn_units);
  if (trace) {
    trace->v = v;
    trace->g.clear();
    trace->g.reserve(e);
  }
  for (int t = 0; t < e; ++t) {
    const double y_prev = t == 0 ? 0.0 : window.y[t - 1];
    g = encoder_step(g, y_prev, v[t], p);
    if (trace) trace->g.push_back(g);
  }

  // Predict-only passes never change the state, so one solve covers the
  // whole horizon.
  LocalParams frozen_locals;
  if (local_head && pinned_locals == nullptr && mode == Mode::Infer)
    frozen_locals = aru_local_params(*state);

  Forecast fc;
  fc.mu.resize(k);
  fc.sigma.resize(k);
  if (trace) {
    trace->z1.resize(k);
    trace->z2.resize(k);
    trace->h.resize(k);
    trace->x_sg.assign(k, 0.0);
    trace->fm.assign(k, {});
    trace->fs.assign(k, {});
    trace->locals.assign(k, {});
  }

  for (int step = 0; step < k; ++step) {
    const Vector& vt = v[e + step];
    DecodedStep dec = decode_step_full(g, vt, p);
    const Vector& h = dec.h;

    if (!local_head) {
      const double x_mu = p.head_mu_w.dot(h) + p.head_mu_b;
      const double x_sg = p.head_sg_w.dot(h) + p.head_sg_b;
      fc.mu[step] = x_mu;
      fc.sigma[step] = softplus(x_sg);
      if (trace) trace->x_sg[step] = x_sg;
    } else {
      LocalParams step_params;
      if (pinned_locals != nullptr) {
        step_params = (*pinned_locals)[step].params;
      } else if (mode == Mode::Train) {
        step_params = aru_local_params(*state);
      } else {
        step_params = frozen_locals;
      }
      Vector u(h.size() + 1);
      u << h, 1.0;
      LocalPrediction pred;
      pred.mean = Vector::Zero(cfg.aru.banks());
      for (int j = 0; j < cfg.aru.banks(); ++j) pred.mean[j] = step_params.theta_mu[j].dot(u);
      pred.variance = step_params.theta_sigma;

      if (cfg.head == Head::Aru) {
        const Ff2Path fm = ff2_path(h, pred.mean, p.ff2m_w1, p.ff2m_b1, p.ff2m_w2,
                                    p.ff2m_b2, p.ff2m_head_w, p.ff2m_head_b);
        const Ff2Path fs = ff2_path(h, pred.variance, p.ff2s_w1, p.ff2s_b1, p.ff2s_w2,
                                    p.ff2s_b2, p.ff2s_head_w, p.ff2s_head_b);
        fc.mu[step] = fm.out;
        fc.sigma[step] = softplus(fs.out);
        if (trace) {
          trace->x_sg[step] = fs.out;
          trace->fm[step] = fm;
          trace->fs[step] = fs;
        }
      } else {  // AruDirect
        fc.mu[step] = pred.mean[0];
        fc.sigma[step] = std::sqrt(std::max(pred.variance[0], cfg.direct_var_floor));
      }
      fc.local_mean.push_back(pred.mean);
      fc.local_variance.push_back(pred.variance);

      if (trace) {
        StepLocalTrace& lt = trace->locals[step];
        lt.params = step_params;
        lt.pred = pred;
        if (cfg.differentiate_local_fit && pinned_locals == nullptr &&
            mode == Mode::Train) {
          for (const AruBank& bank : state->banks) {
            lt.pre_sxx.push_back(bank.sxx);
            lt.pre_sn.push_back(bank.sn);
            lt.pre_ss.push_back(bank.ss);
          }
        }
      }

      if (mode == Mode::Train && pinned_locals == nullptr)
        aru_update(*state, h, window.decoder_y(step), pred);
    }

    if (trace) {
      trace->z1[step] = std::move(dec.z1);
      trace->z2[step] = std::move(dec.z2);
      trace->h[step] = dec.h;
    }
  }
  return fc;
}

Forecast forward_window(const WindowSample& window, const ModelConfig& cfg,
                        const ModelParams& p, AruState* state, Mode mode) {
  return forward_window_traced(window, cfg, p, state, mode, nullptr, nullptr);
}

}  // namespace aru
