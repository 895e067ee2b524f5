#include "tcvae/math.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace tcvae {

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("logsumexp of empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace tcvae
