#pragma once

#include <cstdint>
#include <span>

#include "tcvae/tensor.hpp"

namespace tcvae {

// Counter-based random stream: draw i is a pure function of (key, i), so a
// stream can be split or replayed without shared mutable state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream; the parent is left untouched.
  RngStream split(std::uint64_t child) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t counter) { counter_ = counter; }

 private:
  RngStream(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fill with i.i.d. standard normal draws (Box-Muller, both branches used).
void fill_standard_normal(RngStream& rng, std::span<double> out);
Tensor gaussian_sample(RngStream& rng, const Shape& shape);

}  // namespace tcvae
