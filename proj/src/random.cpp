#include "umfi/random.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "umfi/error.hpp"

namespace umfi {

std::uint64_t hash_doubles(std::span<const double> values) noexcept {
  std::uint64_t h = mix64(values.size());
  for (double v : values) {
    // -0.0 and 0.0 compare equal and must hash equal.
    const double canonical = v == 0.0 ? 0.0 : v;
    h = hash_combine(h, std::bit_cast<std::uint64_t>(canonical));
  }
  return h;
}

std::uint64_t hash_string(std::string_view s) noexcept {
  // FNV-1a, then finalized.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

std::size_t Rng::index(std::size_t bound) {
  // Lemire's nearly divisionless bounded draw.
  const auto range = static_cast<std::uint64_t>(bound);
  auto product = static_cast<unsigned __int128>(engine_()) * range;
  auto low = static_cast<std::uint64_t>(product);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(engine_()) * range;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::size_t>(product >> 64);
}

double Rng::normal(double mean, double sd) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + sd * spare_normal_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  has_spare_ = true;
  return mean + sd * u * factor;
}

double Rng::exponential(double rate) {
  if (!(rate > 0.0)) throw UmfiError(ErrorCode::kInvalidArgument, "exponential rate must be positive");
  return -std::log(uniform_open()) / rate;
}

}  // namespace umfi
