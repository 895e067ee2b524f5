#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace tcvae {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// log(sum(exp(values))) with max-shift. Throws on empty input.
double logsumexp(std::span<const double> values);

// Numerically stable log(1 + exp(x)).
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace tcvae
