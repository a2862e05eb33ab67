#include "dice/rng.hpp"

#include <cmath>
#include <numbers>

namespace dice {

namespace {

constexpr uint32_t kM0 = 0xD2511F53u;
constexpr uint32_t kM1 = 0xCD9E8D57u;
constexpr uint32_t kW0 = 0x9E3779B9u;
constexpr uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  hi = static_cast<uint32_t>(p >> 32);
  lo = static_cast<uint32_t>(p);
}

}  // namespace

Philox4x32Ctr philox4x32_10(Philox4x32Ctr c, Philox4x32Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

SeededRng::SeededRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

SeededRng SeededRng::derive(std::string_view tag, uint64_t index) const {
  // child seed = one philox block keyed by the parent seed
  uint64_t t = fnv1a64(tag) ^ (stream_ * 0x9E3779B97F4A7C15ull);
  Philox4x32Ctr c{static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                  static_cast<uint32_t>(t), static_cast<uint32_t>(t >> 32)};
  Philox4x32Key k{static_cast<uint32_t>(seed_) ^ 0xA5A5A5A5u,
                  static_cast<uint32_t>(seed_ >> 32) ^ 0x5A5A5A5Au};
  auto out = philox4x32_10(c, k);
  uint64_t child = (static_cast<uint64_t>(out[0]) << 32) | out[1];
  uint64_t child_stream = (static_cast<uint64_t>(out[2]) << 32) | out[3];
  return SeededRng(child, child_stream);
}

void SeededRng::refill() {
  Philox4x32Ctr c{static_cast<uint32_t>(block_), static_cast<uint32_t>(block_ >> 32),
                  static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
  Philox4x32Key k{static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)};
  buf_ = philox4x32_10(c, k);
  ++block_;
  pos_ = 0;
}

uint32_t SeededRng::next_u32() {
  if (pos_ >= 4) refill();
  return buf_[pos_++];
}

uint64_t SeededRng::next_u64() {
  uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0,1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  have_spare_ = true;
  return r * std::cos(th);
}

uint64_t SeededRng::below(uint64_t n) {
  if (n <= 1) return 0;
  // rejection on the top of the range
  uint64_t lim = UINT64_MAX - (UINT64_MAX % n);
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= lim);
  return x % n;
}

}  // namespace dice
