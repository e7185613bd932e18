#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace umfi {

// splitmix64 finalizer; used both for seed derivation and content hashing.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value));
}

std::uint64_t hash_doubles(std::span<const double> values) noexcept;
std::uint64_t hash_string(std::string_view s) noexcept;

// Named stream families, so that e.g. tree 3 and replication 3 never share a stream.
enum class StreamKind : std::uint64_t {
  kTree = 1,
  kReplication = 2,
  kFeature = 3,
  kEvaluation = 4,
  kSubsetDraw = 5,
  kTrial = 6,
  kSynthetic = 7,
};

// Master seed plus a deterministic derivation of independent sub-streams. Every random
// draw in the library comes from a stream derived here, so results never depend on
// scheduling.
class SeedSpec {
 public:
  constexpr SeedSpec() = default;
  constexpr explicit SeedSpec(std::uint64_t master) : master_(master) {}

  constexpr std::uint64_t master() const noexcept { return master_; }

  // Child spec for (kind, index); derivations compose.
  SeedSpec derive(StreamKind kind, std::uint64_t index) const noexcept {
    return SeedSpec(hash_combine(hash_combine(master_, static_cast<std::uint64_t>(kind)), index));
  }
  SeedSpec derive_content(std::uint64_t content_hash) const noexcept {
    return SeedSpec(hash_combine(master_ ^ 0x5bd1e995ULL, content_hash));
  }

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;

 private:
  std::uint64_t master_ = 42;
};

// Thin wrapper over mt19937_64 with distribution code written out here so that
// draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(SeedSpec seed) : engine_(mix64(seed.master())) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform in (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }
  // Uniform integer in [0, bound), bound > 0.
  std::size_t index(std::size_t bound);
  double normal(double mean = 0.0, double sd = 1.0);
  double exponential(double rate);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace umfi
