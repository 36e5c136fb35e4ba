#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace fspda {

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

// Ordinary least squares y = slope*x + intercept with coefficient of
// determination.
inline LinearFit linear_fit(std::span<const double> xs,
                            std::span<const double> ys) {
  const size_t m = xs.size();
  if (m != ys.size() || m < 2)
    throw std::invalid_argument("linear_fit: need >= 2 paired points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < m; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < m; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (size_t i = 0; i < m; ++i) {
    const double r = ys[i] - (f.slope * xs[i] + f.intercept);
    ss_res += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

struct MeanStderr {
  double mean = 0;
  double stderr_ = 0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  const size_t m = xs.size();
  if (m == 0) throw std::invalid_argument("mean_stderr: empty sample");
  double mean = 0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(m);
  if (m == 1) return {mean, 0.0};
  double var = 0;
  for (double v : xs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(m - 1);
  return {mean, std::sqrt(var / static_cast<double>(m))};
}

}  // namespace fspda
