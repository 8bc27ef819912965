#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace comet {

/// Mixes a base seed with a textual tag (and optional index) into a new seed.
/// Each logical random stream in the pipeline (source data, target batch t,
/// augmentation for batch t, weight init, ...) derives its own seed this way,
/// so adding or dropping one consumer never perturbs the others.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index);

/// Deterministic random source. Wraps std::mt19937_64 (whose output sequence
/// the standard pins down exactly) but does its own uniform/normal conversion:
/// the std distributions are implementation-defined, which would silently
/// break byte-identical reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; pairs are generated together and the
  /// spare is served on the next call.
  double normal();

  /// Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::swap(v[i], v[index(i + 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace comet
