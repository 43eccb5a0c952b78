#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nma {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

// log(1 + e^x) without overflow
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double inv_logit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Normal log-density parameterized by precision
inline double norm_logpdf_prec(double x, double mean, double prec) {
  const double z = x - mean;
  return 0.5 * (std::log(prec) - kLog2Pi) - 0.5 * prec * z * z;
}

// Half-Cauchy on (0, inf): 2 / (pi * s * (1 + (x/s)^2))
inline double half_cauchy_logpdf(double x, double scale) {
  if (x <= 0 || scale <= 0) return kNegInf;
  const double z = x / scale;
  return std::log(2.0 / M_PI) - std::log(scale) - std::log1p(z * z);
}

// Gamma(shape, rate)
inline double gamma_logpdf(double x, double shape, double rate) {
  if (x <= 0) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double beta_logpdf(double x, double a, double b) {
  if (x <= 0 || x >= 1) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

// Quantile of an unsorted sample, linear interpolation between order
// statistics (matches R's default type 7).
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  if (v.size() == 1) return v[0];
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = h - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, q);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (static_cast<double>(v.size()) - 1.0);
}

}  // namespace nma
