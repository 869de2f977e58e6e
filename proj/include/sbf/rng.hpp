#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sbf {

// Deterministic random stream. Distributions are implemented here rather than
// through <random> adaptors so that streams are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Child seed derived from a parent seed and a label, so that adding a new
// consumer never perturbs the streams of existing ones.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index);

// FNV-1a, used for seed labels and configuration fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace sbf
