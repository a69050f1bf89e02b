#include "aru/aru_unit.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace aru {

namespace {

// Suppresses the slow symmetry drift of sxx under repeated scale-and-add.
constexpr long kResymmetrizeEvery = 1000;

Vector augmented(const Vector& h) {
  Vector u(h.size() + 1);
  u.head(h.size()) = h;
  u[h.size()] = 1.0;
  return u;
}

}  // namespace

void AruConfig::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("aru: feature_dim must be >= 1");
  if (aging.empty()) throw std::invalid_argument("aru: aging vector must not be empty");
  for (double a : aging)
    if (!(a > 0.0 && a <= 1.0))
      throw std::invalid_argument("aru: aging factors must lie in (0, 1]");
  if (!(ridge > 0.0)) throw std::invalid_argument("aru: ridge must be positive");
}

long AruState::size_reals() const {
  const long d = config.aug_dim();
  return config.banks() * (d * d + d + 2);
}

AruState aru_init(const AruConfig& cfg) {
  cfg.validate();
  AruState state;
  state.config = cfg;
  const int d = cfg.aug_dim();
  state.banks.resize(cfg.banks());
  for (AruBank& bank : state.banks) {
    bank.sxx = Matrix::Zero(d, d);
    bank.sxy = Vector::Zero(d);
  }
  return state;
}

LocalParams aru_local_params(const AruState& state) {
  const int j_count = state.config.banks();
  const int d = state.config.aug_dim();
  LocalParams out;
  out.theta_mu.reserve(j_count);
  out.theta_sigma = Vector::Zero(j_count);
  for (int j = 0; j < j_count; ++j) {
    const AruBank& bank = state.banks[j];
    Matrix a = bank.sxx;
    a.diagonal().array() += state.config.ridge;  // lambda never folded into sxx
    out.theta_mu.push_back(spd_solve(a, bank.sxy));
    out.theta_sigma[j] = bank.sn > 0.0 ? bank.ss / bank.sn : 0.0;
  }
  return out;
}

LocalPrediction aru_predict(const AruState& state, const Vector& h) {
  if (h.size() != state.config.feature_dim)
    throw std::invalid_argument("aru_predict: input dimension mismatch");
  const LocalParams params = aru_local_params(state);
  const Vector u = augmented(h);
  LocalPrediction pred;
  pred.mean = Vector::Zero(state.config.banks());
  pred.variance = params.theta_sigma;
  for (int j = 0; j < state.config.banks(); ++j)
    pred.mean[j] = params.theta_mu[j].dot(u);
  return pred;
}

void aru_update(AruState& state, const Vector& h, double y) {
  aru_update(state, h, y, aru_predict(state, h));
}

void aru_update(AruState& state, const Vector& h, double y,
                const LocalPrediction& pre) {
  if (h.size() != state.config.feature_dim)
    throw std::invalid_argument("aru_update: input dimension mismatch");
  if (!h.allFinite() || !std::isfinite(y))
    throw std::invalid_argument("aru_update: non-finite input");
  const Vector u = augmented(h);
  const Matrix uu = outer(u);
  for (int j = 0; j < state.config.banks(); ++j) {
    AruBank& bank = state.banks[j];
    const double alpha = state.config.aging[j];
    const double residual = y - pre.mean[j];
    bank.sxx = axpy_matrix(alpha, bank.sxx, uu);
    bank.sxy = alpha * bank.sxy + u * y;
    bank.sn = alpha * bank.sn + 1.0;
    bank.ss = alpha * bank.ss + residual * residual;
  }
  ++state.step_count;
  if (state.step_count % kResymmetrizeEvery == 0)
    for (AruBank& bank : state.banks) bank.sxx = symmetrized(bank.sxx);
}

std::string aru_state_to_json(const AruState& state) {
  nlohmann::json j;
  j["feature_dim"] = state.config.feature_dim;
  j["aging"] = state.config.aging;
  j["ridge"] = state.config.ridge;
  j["step_count"] = state.step_count;
  j["banks"] = nlohmann::json::array();
  for (const AruBank& bank : state.banks) {
    nlohmann::json b;
    std::vector<double> sxx(bank.sxx.size());
    for (int r = 0; r < bank.sxx.rows(); ++r)
      for (int c = 0; c < bank.sxx.cols(); ++c)
        sxx[static_cast<std::size_t>(r) * bank.sxx.cols() + c] = bank.sxx(r, c);
    b["sxx"] = sxx;
    b["sxy"] = std::vector<double>(bank.sxy.data(), bank.sxy.data() + bank.sxy.size());
    b["sn"] = bank.sn;
    b["ss"] = bank.ss;
    j["banks"].push_back(std::move(b));
  }
  return j.dump();
}

AruState aru_state_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  AruConfig cfg;
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.aging = j.at("aging").get<std::vector<double>>();
  cfg.ridge = j.at("ridge").get<double>();
  AruState state = aru_init(cfg);
  state.step_count = j.at("step_count").get<long>();
  const auto& banks = j.at("banks");
  if (static_cast<int>(banks.size()) != cfg.banks())
    throw std::invalid_argument("aru state: bank count mismatch");
  const int d = cfg.aug_dim();
  for (int jb = 0; jb < cfg.banks(); ++jb) {
    const auto& b = banks[jb];
    const auto sxx = b.at("sxx").get<std::vector<double>>();
    const auto sxy = b.at("sxy").get<std::vector<double>>();
    if (static_cast<int>(sxx.size()) != d * d || static_cast<int>(sxy.size()) != d)
      throw std::invalid_argument("aru state: bank shape mismatch");
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        state.banks[jb].sxx(r, c) = sxx[static_cast<std::size_t>(r) * d + c];
    for (int r = 0; r < d; ++r) state.banks[jb].sxy[r] = sxy[r];
    state.banks[jb].sn = b.at("sn").get<double>();
    state.banks[jb].ss = b.at("ss").get<double>();
  }
  return state;
}

}  // namespace aru
