#include <doctest.h>

#include <cmath>

#include "aru/forecaster.hpp"
#include "oracles.hpp"

using namespace aru;

namespace {

oracle::Mat to_mat(const Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

oracle::Vec to_vec(const Vector& v) {
  return oracle::Vec(v.data(), v.data() + v.size());
}

ModelConfig small_config(Head head, int encoder_len = 4, int horizon = 3) {
  ModelConfig cfg;
  apply_preset(cfg, "small");
  cfg.encoder_len = encoder_len;
  cfg.horizon = horizon;
  cfg.features.cat_cardinality = {5};
  cfg.features.cat_embed_dim = {3};
  cfg.features.continuous = 4;
  cfg.head = head;
  if (head != Head::Baseline) {
    cfg.aru.feature_dim = cfg.h_width();
    cfg.aru.aging = {1.0, 0.9};
    cfg.aru.ridge = 0.5;
  }
  return cfg;
}

WindowSample random_window(const ModelConfig& cfg, Rng& rng, bool with_targets = true) {
  WindowSample w;
  w.encoder_len = cfg.encoder_len;
  w.horizon = cfg.horizon;
  w.has_decoder_targets = with_targets;
  const int total = cfg.encoder_len + cfg.horizon;
  for (int t = 0; t < total; ++t) {
    FeatureFrame f;
    for (int c : cfg.features.cat_cardinality)
      f.cat.push_back(static_cast<int>(rng.below(c)));
    f.cont.resize(cfg.features.continuous);
    for (int i = 0; i < cfg.features.continuous; ++i) f.cont[i] = rng.uniform();
    w.frames.push_back(std::move(f));
  }
  const int n_targets = with_targets ? total : cfg.encoder_len;
  for (int t = 0; t < n_targets; ++t) w.y.push_back(rng.normal());
  return w;
}

}  // namespace

TEST_CASE("embed_inputs concatenates tables and continuous features") {
  ModelConfig cfg;
  cfg.features.continuous = 3;
  ModelParams p = zero_params(cfg);
  FeatureFrame f;
  f.cont = Vector::Zero(3);
  CHECK(embed_inputs(f, cfg, p).isZero(0.0));

  ModelConfig one;
  one.features.cat_cardinality = {1};
  one.features.cat_embed_dim = {2};
  one.features.continuous = 0;
  ModelParams p1 = zero_params(one);
  p1.embed[0](0, 0) = 0.5;
  p1.embed[0](0, 1) = 0.5;
  FeatureFrame f1;
  f1.cat = {0};
  f1.cont = Vector(0);
  const Vector v1 = embed_inputs(f1, one, p1);
  CHECK(v1.size() == 2);
  CHECK(v1[0] == 0.5);
  CHECK(v1[1] == 0.5);

  // hour/day tables of dims 4 and 3: the embedded row concatenation.
  ModelConfig two;
  two.features.cat_cardinality = {24, 7};
  two.features.cat_embed_dim = {4, 3};
  two.features.continuous = 0;
  ModelParams p2 = zero_params(two);
  Rng rng(5, "forecaster/embed");
  for (Matrix& t : p2.embed)
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) t(r, c) = rng.normal();
  FeatureFrame f2;
  f2.cat = {13, 2};
  f2.cont = Vector(0);
  const Vector v2 = embed_inputs(f2, two, p2);
  REQUIRE(v2.size() == 7);
  for (int c = 0; c < 4; ++c) CHECK(v2[c] == p2.embed[0](13, c));
  for (int c = 0; c < 3; ++c) CHECK(v2[4 + c] == p2.embed[1](2, c));

  FeatureFrame bad;
  bad.cat = {24, 2};
  bad.cont = Vector(0);
  CHECK_THROWS_AS(embed_inputs(bad, two, p2), std::out_of_range);
}

TEST_CASE("encode: zero weights, one hand-checked step, and a naive oracle") {
  ModelConfig cfg = small_config(Head::Baseline);
  Rng rng(7, "forecaster/encode");
  const WindowSample w = random_window(cfg, rng);
  CHECK(encode(w, cfg, zero_params(cfg)).isZero(0.0));

  // Single step, 1-unit cell: g = tanh(w . [0 y0 v] + b) with y0 = 0.
  ModelConfig tiny;
  tiny.rnn_units = 1;
  tiny.hidden_sizes = {1, 1, 1};
  tiny.encoder_len = 1;
  tiny.horizon = 1;
  tiny.features.continuous = 1;
  ModelParams tp = zero_params(tiny);
  tp.enc_w(0, 0) = 0.3;   // recurrent weight, zero state
  tp.enc_w(0, 1) = -2.0;  // y weight, y0 = 0
  tp.enc_w(0, 2) = 0.7;
  tp.enc_b[0] = 0.1;
  WindowSample tw;
  tw.encoder_len = 1;
  tw.horizon = 1;
  tw.has_decoder_targets = true;
  for (int t = 0; t < 2; ++t) {
    FeatureFrame f;
    f.cont = Vector(1);
    f.cont[0] = 0.5;
    tw.frames.push_back(f);
  }
  tw.y = {0.8, 0.2};
  const Vector g1 = encode(tw, tiny, tp);
  CHECK(g1[0] == doctest::Approx(std::tanh(0.7 * 0.5 + 0.1)).epsilon(1e-15));

  // Random weights against a step-by-step loop oracle.
  Rng init(11, "forecaster/encode-init");
  const ModelParams p = init_params(cfg, init);
  const Vector got = encode(w, cfg, p);

  const oracle::Mat ew = to_mat(p.enc_w);
  const oracle::Vec eb = to_vec(p.enc_b);
  oracle::Vec g(cfg.rnn_units, 0.0);
  for (int t = 0; t < cfg.encoder_len; ++t) {
    const Vector v = embed_inputs(w.frames[t], cfg, p);
    oracle::Vec in = g;
    in.push_back(t == 0 ? 0.0 : w.y[t - 1]);
    for (int i = 0; i < v.size(); ++i) in.push_back(v[i]);
    oracle::Vec next(cfg.rnn_units);
    for (int r = 0; r < cfg.rnn_units; ++r)
      next[r] = std::tanh(oracle::dot(ew[r], in) + eb[r]);
    g = next;
  }
  for (int i = 0; i < cfg.rnn_units; ++i)
    CHECK(got[i] == doctest::Approx(g[i]).epsilon(1e-12));
}

TEST_CASE("decode_step: zero weights and a medium-config oracle") {
  ModelConfig cfg;
  apply_preset(cfg, "medium");
  cfg.features.continuous = 5;
  Rng rng(13, "forecaster/decode");
  ModelParams zero = zero_params(cfg);
  Vector g = Vector::Zero(cfg.rnn_units);
  Vector v = Vector::Zero(5);
  CHECK(decode_step(g, v, cfg, zero).isZero(0.0));

  Rng init(17, "forecaster/decode-init");
  const ModelParams p = init_params(cfg, init);
  for (int i = 0; i < g.size(); ++i) g[i] = rng.normal();
  for (int i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  const Vector got = decode_step(g, v, cfg, p);

  oracle::Vec in1 = to_vec(g);
  for (int i = 0; i < v.size(); ++i) in1.push_back(v[i]);
  const oracle::Vec z1 =
      oracle::relu_affine(to_mat(p.dec_w[0]), to_vec(p.dec_b[0]), in1);
  oracle::Vec in2 = z1;  // skip connection re-appends the inputs
  for (int i = 0; i < v.size(); ++i) in2.push_back(v[i]);
  const oracle::Vec z2 =
      oracle::relu_affine(to_mat(p.dec_w[1]), to_vec(p.dec_b[1]), in2);
  const oracle::Vec h =
      oracle::relu_affine(to_mat(p.dec_w[2]), to_vec(p.dec_b[2]), z2);
  REQUIRE(got.size() == static_cast<long>(h.size()));
  for (std::size_t i = 0; i < h.size(); ++i)
    CHECK(got[i] == doctest::Approx(h[i]).epsilon(1e-12));
}

TEST_CASE("gaussian head softplus behaviour") {
  ModelConfig cfg = small_config(Head::Baseline);
  ModelParams p = zero_params(cfg);
  Vector h = Vector::Zero(cfg.h_width());
  auto [mu, sg] = gaussian_head(h, p);
  CHECK(mu == 0.0);
  CHECK(sg == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  p.head_sg_b = 30.0;
  CHECK(gaussian_head(h, p).second == doctest::Approx(30.0).epsilon(1e-9));
  p.head_sg_b = -800.0;  // softplus underflow still yields a positive sigma
  CHECK(gaussian_head(h, p).second > 0.0);
}

TEST_CASE("fusion network: zero weights, identity pass-through, oracle") {
  ModelConfig cfg = small_config(Head::Aru);
  cfg.aru.aging = {1.0};  // J = 1
  cfg.ff2_sizes = {2, 2};
  ModelParams p = zero_params(cfg);
  LocalPrediction local;
  local.mean = Vector::Constant(1, 0.37);
  local.variance = Vector::Constant(1, 0.9);
  Vector h(cfg.h_width());
  h << 0.1, -0.2, 0.3, 0.0, 1.0, -1.0;

  auto [mu0, sg0] = ff2_combine(h, local, cfg, p);
  CHECK(mu0 == 0.0);
  CHECK(sg0 == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Two rectifier units reconstruct m exactly: mu = relu(m) - relu(-m).
  const int mcol = cfg.h_width();
  p.ff2m_w1(0, mcol) = 1.0;
  p.ff2m_w1(1, mcol) = -1.0;
  p.ff2m_w2(0, 0) = 1.0;
  p.ff2m_w2(1, 1) = 1.0;
  p.ff2m_head_w[0] = 1.0;
  p.ff2m_head_w[1] = -1.0;
  CHECK(ff2_combine(h, local, cfg, p).first == doctest::Approx(0.37).epsilon(1e-15));
  local.mean[0] = -1.4;
  CHECK(ff2_combine(h, local, cfg, p).first == doctest::Approx(-1.4).epsilon(1e-15));

  // Random parameters against a naive two-layer oracle.
  ModelConfig rc = small_config(Head::Aru);
  Rng init(19, "forecaster/ff2-init");
  const ModelParams rp = init_params(rc, init);
  LocalPrediction rl;
  rl.mean = Vector(2);
  rl.mean << 0.4, -0.9;
  rl.variance = Vector(2);
  rl.variance << 0.5, 0.1;
  Vector rh(rc.h_width());
  Rng rng(23, "forecaster/ff2");
  for (int i = 0; i < rh.size(); ++i) rh[i] = rng.normal();
  const auto [mu1, sg1] = ff2_combine(rh, rl, rc, rp);

  auto path = [&](const Matrix& w1, const Vector& b1, const Matrix& w2, const Vector& b2,
                  const Vector& hw, double hb, const Vector& local_part) {
    oracle::Vec in = to_vec(rh);
    for (int i = 0; i < local_part.size(); ++i) in.push_back(local_part[i]);
    in.push_back(1.0);
    const oracle::Vec z1 = oracle::relu_affine(to_mat(w1), to_vec(b1), in);
    const oracle::Vec z2 = oracle::relu_affine(to_mat(w2), to_vec(b2), z1);
    return oracle::dot(to_vec(hw), z2) + hb;
  };
  const double mu_expect = path(rp.ff2m_w1, rp.ff2m_b1, rp.ff2m_w2, rp.ff2m_b2,
                                rp.ff2m_head_w, rp.ff2m_head_b, rl.mean);
  const double x_sg = path(rp.ff2s_w1, rp.ff2s_b1, rp.ff2s_w2, rp.ff2s_b2,
                           rp.ff2s_head_w, rp.ff2s_head_b, rl.variance);
  CHECK(mu1 == doctest::Approx(mu_expect).epsilon(1e-12));
  CHECK(sg1 == doctest::Approx(softplus(x_sg)).epsilon(1e-12));
}

TEST_CASE("baseline forward with zero parameters") {
  ModelConfig cfg = small_config(Head::Baseline);
  Rng rng(29, "forecaster/baseline-zero");
  const WindowSample w = random_window(cfg, rng);
  const Forecast fc = forward_window(w, cfg, zero_params(cfg), nullptr, Mode::Infer);
  for (int k = 0; k < cfg.horizon; ++k) {
    CHECK(fc.mu[k] == 0.0);
    CHECK(fc.sigma[k] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("adaptive head at the zero state reduces to the fused zero-local pass") {
  ModelConfig cfg = small_config(Head::Aru);
  Rng init(31, "forecaster/zero-state");
  const ModelParams p = init_params(cfg, init);
  Rng rng(37, "forecaster/zero-state-window");
  const WindowSample w = random_window(cfg, rng, false);
  AruState state = aru_init(cfg.aru);
  ForwardTrace tr;
  const Forecast fc = forward_window_traced(w, cfg, p, &state, Mode::Infer, &tr);
  for (int k = 0; k < cfg.horizon; ++k) {
    LocalPrediction zero_local;
    zero_local.mean = Vector::Zero(cfg.aru.banks());
    zero_local.variance = Vector::Zero(cfg.aru.banks());
    const auto [mu, sg] = ff2_combine(tr.h[k], zero_local, cfg, p);
    CHECK(fc.mu[k] == mu);
    CHECK(fc.sigma[k] == sg);
  }
}

TEST_CASE("train-mode state equals a scripted sequence of updates") {
  ModelConfig cfg = small_config(Head::Aru);
  Rng init(41, "forecaster/train-state");
  const ModelParams p = init_params(cfg, init);
  Rng rng(43, "forecaster/train-window");
  const WindowSample w = random_window(cfg, rng);

  AruState state = aru_init(cfg.aru);
  ForwardTrace tr;
  forward_window_traced(w, cfg, p, &state, Mode::Train, &tr);

  AruState replay = aru_init(cfg.aru);
  for (int k = 0; k < cfg.horizon; ++k)
    aru_update(replay, tr.h[k], w.decoder_y(k), aru_predict(replay, tr.h[k]));

  for (int j = 0; j < cfg.aru.banks(); ++j) {
    CHECK((state.banks[j].sxx - replay.banks[j].sxx).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((state.banks[j].sxy - replay.banks[j].sxy).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(state.banks[j].sn == replay.banks[j].sn);
    CHECK(state.banks[j].ss == replay.banks[j].ss);
  }
}

TEST_CASE("infer mode never mutates the state") {
  ModelConfig cfg = small_config(Head::Aru);
  Rng init(47, "forecaster/purity");
  const ModelParams p = init_params(cfg, init);
  Rng rng(53, "forecaster/purity-window");

  AruState state = aru_init(cfg.aru);
  for (int t = 0; t < 30; ++t) {
    Vector h(cfg.h_width());
    for (int i = 0; i < h.size(); ++i) h[i] = rng.normal();
    aru_update(state, h, rng.normal());
  }
  const std::string before = aru_state_to_json(state);
  const WindowSample w = random_window(cfg, rng, false);
  const Forecast a = forward_window(w, cfg, p, &state, Mode::Infer);
  const Forecast b = forward_window(w, cfg, p, &state, Mode::Infer);
  CHECK(aru_state_to_json(state) == before);
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);
}

TEST_CASE("permuting decoder steps permutes baseline forecasts identically") {
  ModelConfig cfg = small_config(Head::Baseline, 4, 4);
  Rng init(59, "forecaster/permute");
  const ModelParams p = init_params(cfg, init);
  Rng rng(61, "forecaster/permute-window");
  WindowSample w = random_window(cfg, rng, false);
  const Forecast fc = forward_window(w, cfg, p, nullptr, Mode::Infer);

  const std::array<int, 4> perm{2, 0, 3, 1};
  WindowSample pw = w;
  for (int k = 0; k < 4; ++k)
    pw.frames[cfg.encoder_len + k] = w.frames[cfg.encoder_len + perm[k]];
  const Forecast pfc = forward_window(pw, cfg, p, nullptr, Mode::Infer);
  for (int k = 0; k < 4; ++k) {
    CHECK(pfc.mu[k] == fc.mu[perm[k]]);
    CHECK(pfc.sigma[k] == fc.sigma[perm[k]]);
  }
}

TEST_CASE("sigma stays positive for adversarial parameters") {
  ModelConfig cfg = small_config(Head::Baseline);
  Rng init(67, "forecaster/sigma");
  ModelParams p = init_params(cfg, init);
  p.head_sg_b = -1000.0;
  Rng rng(71, "forecaster/sigma-window");
  const WindowSample w = random_window(cfg, rng, false);
  const Forecast fc = forward_window(w, cfg, p, nullptr, Mode::Infer);
  for (double s : fc.sigma) CHECK(s > 0.0);
}

TEST_CASE("zeroing the fusion local channel reproduces the zero-local pass bitwise") {
  ModelConfig cfg = small_config(Head::Aru);
  Rng init(73, "forecaster/fallback");
  ModelParams p = init_params(cfg, init);
  Rng rng(79, "forecaster/fallback-window");

  AruState state = aru_init(cfg.aru);
  for (int t = 0; t < 40; ++t) {
    Vector h(cfg.h_width());
    for (int i = 0; i < h.size(); ++i) h[i] = rng.normal();
    aru_update(state, h, rng.normal());
  }
  const WindowSample w = random_window(cfg, rng, false);

  // With the local columns intact, the fused output must differ.
  AruState zero_state = aru_init(cfg.aru);
  const Forecast with_state = forward_window(w, cfg, p, &state, Mode::Infer);
  const Forecast with_zero = forward_window(w, cfg, p, &zero_state, Mode::Infer);
  CHECK(with_state.mu != with_zero.mu);

  // Zero the m and a input columns of both fusion nets.
  for (int j = 0; j < cfg.aru.banks(); ++j) {
    p.ff2m_w1.col(cfg.h_width() + j).setZero();
    p.ff2s_w1.col(cfg.h_width() + j).setZero();
  }
  const Forecast a = forward_window(w, cfg, p, &state, Mode::Infer);
  const Forecast b = forward_window(w, cfg, p, &zero_state, Mode::Infer);
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);
}

TEST_CASE("direct head emits the first bank's local fit") {
  ModelConfig cfg = small_config(Head::AruDirect);
  Rng init(83, "forecaster/direct");
  const ModelParams p = init_params(cfg, init);
  Rng rng(89, "forecaster/direct-window");
  AruState state = aru_init(cfg.aru);
  for (int t = 0; t < 25; ++t) {
    Vector h(cfg.h_width());
    for (int i = 0; i < h.size(); ++i) h[i] = rng.normal();
    aru_update(state, h, 2.0 + rng.normal());
  }
  const WindowSample w = random_window(cfg, rng, false);
  ForwardTrace tr;
  const Forecast fc = forward_window_traced(w, cfg, p, &state, Mode::Infer, &tr);
  const LocalParams lp = aru_local_params(state);
  for (int k = 0; k < cfg.horizon; ++k) {
    Vector u(cfg.h_width() + 1);
    u << tr.h[k], 1.0;
    CHECK(fc.mu[k] == doctest::Approx(lp.theta_mu[0].dot(u)).epsilon(1e-14));
    CHECK(fc.sigma[k] ==
          doctest::Approx(std::sqrt(std::max(lp.theta_sigma[0], cfg.direct_var_floor)))
              .epsilon(1e-14));
  }
}

TEST_CASE("train mode requires decoder targets and matching widths") {
  ModelConfig cfg = small_config(Head::Aru);
  Rng init(97, "forecaster/errors");
  const ModelParams p = init_params(cfg, init);
  Rng rng(101, "forecaster/errors-window");
  const WindowSample no_targets = random_window(cfg, rng, false);
  AruState state = aru_init(cfg.aru);
  CHECK_THROWS_AS(forward_window(no_targets, cfg, p, &state, Mode::Train),
                  std::invalid_argument);

  AruConfig wrong = cfg.aru;
  wrong.feature_dim = cfg.h_width() + 1;
  AruState bad_state = aru_init(wrong);
  const WindowSample w = random_window(cfg, rng, true);
  CHECK_THROWS_AS(forward_window(w, cfg, p, &bad_state, Mode::Train),
                  std::invalid_argument);
}
