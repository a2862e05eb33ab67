#pragma once
#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dice {

using Philox4x32Ctr = std::array<uint32_t, 4>;
using Philox4x32Key = std::array<uint32_t, 2>;

// Philox4x32-10 block function
Philox4x32Ctr philox4x32_10(Philox4x32Ctr ctr, Philox4x32Key key);

// 64-bit FNV-1a, used to turn purpose tags into stream ids
uint64_t fnv1a64(std::string_view s);

// Counter-based generator. Key = seed, counter = (block, stream).
// Child streams come from derive(); instances are single-owner.
class SeededRng {
public:
  explicit SeededRng(uint64_t seed = 0, uint64_t stream = 0);

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

  SeededRng derive(std::string_view tag, uint64_t index = 0) const;

  uint32_t next_u32();
  uint64_t next_u64();
  double uniform();                 // [0,1), 53 bits
  double uniform(double lo, double hi);
  double normal();                  // Box-Muller, caches the second value
  uint64_t below(uint64_t n);      // uniform in [0,n)
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  void refill();

  uint64_t seed_;
  uint64_t stream_;
  uint64_t block_ = 0;
  Philox4x32Ctr buf_{};
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dice
