#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <utility>

#include "opcomp/error.hpp"

namespace opcomp {

template <typename Scalar>
struct RateFit {
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar r_squared = 0;
};

/// Least-squares line through (log h, log e). R^2 is 1 when the data carry no
/// variance to explain (e.g. constant errors), so a flat line reports a
/// perfect fit rather than NaN.
template <typename Scalar>
RateFit<Scalar> rate_fit(std::span<const std::pair<Scalar, Scalar>> points) {
  require(points.size() >= 3, "rate_fit needs at least 3 points");
  Scalar sx = 0, sy = 0;
  for (const auto& [h, e] : points) {
    require(h > 0 && e > 0, "rate_fit needs positive mesh sizes and errors");
    sx += std::log(h);
    sy += std::log(e);
  }
  const Scalar n = static_cast<Scalar>(points.size());
  const Scalar mx = sx / n, my = sy / n;
  Scalar sxx = 0, sxy = 0, syy = 0;
  for (const auto& [h, e] : points) {
    const Scalar dx = std::log(h) - mx, dy = std::log(e) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0, "rate_fit needs at least two distinct mesh sizes", ErrorKind::FitUndefined);
  RateFit<Scalar> fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : Scalar(1);
  return fit;
}

template <typename Scalar>
RateFit<Scalar> rate_fit(std::initializer_list<std::pair<Scalar, Scalar>> points) {
  return rate_fit<Scalar>(std::span<const std::pair<Scalar, Scalar>>(points.begin(), points.size()));
}

/// Least-squares line y = intercept + slope * x through (x, log y), y > 0.
template <typename Scalar>
RateFit<Scalar> semilog_fit(std::span<const std::pair<Scalar, Scalar>> points) {
  require(points.size() >= 3, "semilog_fit needs at least 3 points", ErrorKind::FitUndefined);
  Scalar sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    require(y > 0, "semilog_fit needs positive values");
    sx += x;
    sy += std::log(y);
  }
  const Scalar n = static_cast<Scalar>(points.size());
  const Scalar mx = sx / n, my = sy / n;
  Scalar sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : points) {
    const Scalar dx = x - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0, "semilog_fit needs at least two distinct abscissae", ErrorKind::FitUndefined);
  RateFit<Scalar> fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : Scalar(1);
  return fit;
}

}  // namespace opcomp
