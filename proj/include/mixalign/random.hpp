#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mixalign {

// Seeded generator shared by sampling, shuffling and augmentation. Every
// draw constructs its distribution fresh, so the engine state alone
// determines the future stream and checkpointing it is sufficient.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  bool bernoulli(double p);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  std::vector<std::size_t> permutation(std::size_t n);

  std::string state() const;
  void set_state(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Beta(alpha, alpha) via the ratio of two Gamma(alpha) draws.
double sample_beta(double alpha, Rng& rng);

// Stateless 64-bit mixing of up to three keys (splitmix64 finalizer chain).
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace mixalign
