#include "tcvae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tcvae {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + kGolden) ^ mix64(stream * kGolden + 0x632BE59BD9B4E019ULL));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(derive_key(seed, stream)) {}

RngStream::RngStream(std::uint64_t seed, std::uint64_t key, std::uint64_t counter)
    : seed_(seed), key_(key), counter_(counter) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ ^ (c * kGolden)) + c);
}

double RngStream::uniform() {
  // 53 random bits, shifted half a step off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below(0)");
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  while (true) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, mix64(key_ ^ mix64(child + 0xD1B54A32D192ED03ULL)), 0);
}

void fill_standard_normal(RngStream& rng, std::span<double> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i++] = r * std::cos(theta);
    if (i < out.size()) out[i++] = r * std::sin(theta);
  }
}

Tensor gaussian_sample(RngStream& rng, const Shape& shape) {
  Tensor t(shape);
  fill_standard_normal(rng, t.values());
  return t;
}

}  // namespace tcvae
