#pragma once

#include <string>
#include <vector>

#include "aru/linalg.hpp"

namespace aru {

/// Configuration of an adaptive recurrent unit: the width H of the feature
/// vector it regresses on, the aging (forgetting) factors, and the ridge
/// regularizer applied at solve time.
///
/// The unit keeps one bank of sufficient statistics per aging factor. A
/// factor of 1 accumulates plain sums; factors below 1 decay old data
/// geometrically so the closed-form fit tracks recent behaviour.
struct AruConfig {
  int feature_dim = 0;         // H; the regression runs on [h 1]
  std::vector<double> aging;   // J factors, each in (0, 1]
  double ridge = 1.0;          // lambda > 0, applied at solve time

  int banks() const { return static_cast<int>(aging.size()); }
  int aug_dim() const { return feature_dim + 1; }

  /// Throws std::invalid_argument on J = 0, H < 1, lambda <= 0 or an aging
  /// factor outside (0, 1].
  void validate() const;
};

/// One bank of aged sufficient statistics for a least-squares fit of
/// y against [h 1].
struct AruBank {
  Matrix sxx;      // (H+1) x (H+1), symmetric PSD
  Vector sxy;      // H+1
  double sn = 0;   // age-adjusted observation count
  double ss = 0;   // accumulated squared prequential residual
};

/// Fixed-size per-series state: J aged banks plus an update counter.
/// All statistics are zero at construction, and the footprint is constant
/// in the stream length: J * ((H+1)^2 + (H+1) + 2) reals.
struct AruState {
  AruConfig config;
  std::vector<AruBank> banks;
  long step_count = 0;

  long size_reals() const;
};

/// Closed-form local parameters recovered from the statistics:
/// theta_mu[j] = (sxx_j + lambda I)^{-1} sxy_j, theta_sigma[j] = ss_j/sn_j
/// (zero at the empty state).
struct LocalParams {
  std::vector<Vector> theta_mu;  // J vectors of length H+1
  Vector theta_sigma;            // J
};

/// Per-bank local mean and variance prediction at one input h.
struct LocalPrediction {
  Vector mean;      // J, target units
  Vector variance;  // J, target units squared; nonnegative
};

AruState aru_init(const AruConfig& cfg);

LocalParams aru_local_params(const AruState& state);

/// Pure: does not touch the state, and repeated calls are bitwise identical.
LocalPrediction aru_predict(const AruState& state, const Vector& h);

/// Streams one observation (h, y) into every bank:
///   sxx <- a*sxx + [h 1][h 1]^T     sxy <- a*sxy + [h 1]*y
///   sn  <- a*sn + 1                 ss  <- a*ss + (y - m_pre)^2
/// where m_pre is the bank's mean prediction from the state *before* this
/// update (prequential residual).
void aru_update(AruState& state, const Vector& h, double y);

/// Same, with the pre-update prediction supplied by the caller. `pre` must
/// equal aru_predict(state, h); this exists so a caller that already
/// predicted at h does not pay for a second solve.
void aru_update(AruState& state, const Vector& h, double y,
                const LocalPrediction& pre);

/// Flat JSON record (config header + banks in row-major order) so streaming
/// deployments can checkpoint per-series state.
std::string aru_state_to_json(const AruState& state);
AruState aru_state_from_json(const std::string& text);

}  // namespace aru
