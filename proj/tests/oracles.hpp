#pragma once

// Independent reference implementations used only by tests. Everything here
// is written against plain std::vector loops (no Eigen, no library code under
// test) so a defect in the implementation cannot hide in its own oracle.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

// Gaussian elimination with partial pivoting.
inline Vec gauss_solve(Mat a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (a[col][col] == 0.0) throw std::runtime_error("gauss_solve: singular");
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  Vec x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

// Batch weighted ridge on an observed stream: solves
//   (sum_s w_s u_s u_s^T + lambda I) theta = sum_s w_s u_s y_s
// with w_s = alpha^(t-s), u_s = [h_s 1], computed non-recurrently.
inline Vec weighted_ridge(const std::vector<Vec>& h, const Vec& y, double alpha,
                          double lambda) {
  const std::size_t t = y.size();
  const std::size_t d = h.empty() ? 1 : h[0].size() + 1;
  Mat a(d, Vec(d, 0.0));
  Vec b(d, 0.0);
  for (std::size_t s = 0; s < t; ++s) {
    const double w = std::pow(alpha, static_cast<double>(t - 1 - s));
    Vec u(h[s]);
    u.push_back(1.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += w * u[r] * u[c];
      b[r] += w * u[r] * y[s];
    }
  }
  for (std::size_t r = 0; r < d; ++r) a[r][r] += lambda;
  return gauss_solve(a, b);
}

// Aged second-moment sum, non-recurrent: sum_s alpha^(t-1-s) [h_s 1][h_s 1]^T.
inline Mat aged_sxx(const std::vector<Vec>& h, double alpha) {
  const std::size_t t = h.size();
  const std::size_t d = h[0].size() + 1;
  Mat a(d, Vec(d, 0.0));
  for (std::size_t s = 0; s < t; ++s) {
    const double w = std::pow(alpha, static_cast<double>(t - 1 - s));
    Vec u(h[s]);
    u.push_back(1.0);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) a[r][c] += w * u[r] * u[c];
  }
  return a;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// theta . [h 1]
inline double ridge_predict(const Vec& theta, const Vec& h) {
  double s = theta.back();
  for (std::size_t i = 0; i < h.size(); ++i) s += theta[i] * h[i];
  return s;
}

// y = W x + b with ReLU, one layer.
inline Vec relu_affine(const Mat& w, const Vec& b, const Vec& x) {
  Vec out(w.size(), 0.0);
  for (std::size_t r = 0; r < w.size(); ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < x.size(); ++c) s += w[r][c] * x[c];
    out[r] = s > 0.0 ? s : 0.0;
  }
  return out;
}

}  // namespace oracle
