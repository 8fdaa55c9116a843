#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "fastmra/error.hpp"

namespace fastmra {

struct RdPoint {
  double rate = 0;  // bits per pixel
  double psnr = 0;  // dB
};

struct RdCurve {
  std::vector<RdPoint> points;

  // Sorted by rate; rejects fewer than four points, non-positive or repeated
  // rates and non-finite qualities.
  void validate() const {
    if (points.size() < 4) throw PreconditionError("RD curve needs at least 4 points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i].rate > 0) || !std::isfinite(points[i].rate) || !std::isfinite(points[i].psnr))
        throw PreconditionError("RD curve point has a non-positive rate or non-finite quality");
      if (i && !(points[i].rate > points[i - 1].rate))
        throw PreconditionError("RD curve rates must be strictly increasing");
    }
  }
  void sort() {
    std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });
  }
};

namespace detail {

// Least-squares cubic for log10(rate) over normalised PSNR t = (psnr - c) / s.
struct LogRateFit {
  std::array<double, 4> coef{};
  double centre = 0, scale = 1;

  double antiderivative(double psnr) const {
    const double t = (psnr - centre) / scale;
    return scale * (coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 + coef[3] * t * t * t * t / 4);
  }
};

inline LogRateFit fit_log_rate(const RdCurve& c) {
  LogRateFit f;
  double lo = c.points.front().psnr, hi = lo;
  for (const auto& p : c.points) {
    lo = std::min(lo, p.psnr);
    hi = std::max(hi, p.psnr);
  }
  f.centre = (lo + hi) / 2;
  f.scale = hi > lo ? (hi - lo) / 2 : 1.0;

  std::array<std::array<double, 5>, 4> m{};  // normal equations, augmented
  for (const auto& p : c.points) {
    const double t = (p.psnr - f.centre) / f.scale;
    const std::array<double, 4> basis = {1, t, t * t, t * t * t};
    const double y = std::log10(p.rate);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t k = 0; k < 4; ++k) m[r][k] += basis[r] * basis[k];
      m[r][4] += basis[r] * y;
    }
  }
  for (std::size_t col = 0; col < 4; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-300) throw PreconditionError("RD curve is degenerate for a cubic fit");
    std::swap(m[col], m[piv]);
    for (std::size_t r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double k = m[r][col] / m[col][col];
      for (std::size_t j = col; j < 5; ++j) m[r][j] -= k * m[col][j];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) f.coef[i] = m[i][4] / m[i][i];
  return f;
}

inline std::pair<double, double> psnr_range(const RdCurve& c) {
  auto [a, b] = std::minmax_element(c.points.begin(), c.points.end(),
                                    [](const RdPoint& x, const RdPoint& y) { return x.psnr < y.psnr; });
  return {a->psnr, b->psnr};
}

}  // namespace detail

// Mean log10-rate difference (test minus anchor) over the shared PSNR interval.
inline double bd_log_rate_delta(const RdCurve& anchor, const RdCurve& test) {
  anchor.validate();
  test.validate();
  const auto [alo, ahi] = detail::psnr_range(anchor);
  const auto [tlo, thi] = detail::psnr_range(test);
  const double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
  if (!(hi > lo)) throw PreconditionError("RD curves have no overlapping PSNR interval");
  const auto fa = detail::fit_log_rate(anchor);
  const auto ft = detail::fit_log_rate(test);
  const double ia = fa.antiderivative(hi) - fa.antiderivative(lo);
  const double it = ft.antiderivative(hi) - ft.antiderivative(lo);
  return (it - ia) / (hi - lo);
}

// Bjontegaard delta rate in percent; negative means the test curve saves bits.
inline double bd_rate(const RdCurve& anchor, const RdCurve& test) {
  return 100.0 * (std::pow(10.0, bd_log_rate_delta(anchor, test)) - 1.0);
}

}  // namespace fastmra
