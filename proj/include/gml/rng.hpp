#pragma once

#include <cstdint>

namespace gml {

// Philox4x32-10 counter-based generator (Salmon et al. reference constants).
// A stream is addressed by (seed, stream_id); draws within a stream advance a
// 64-bit block counter. Streams never overlap and any draw is reachable in
// O(1), which is what makes worker-count-invariant Monte Carlo cheap.
class Philox {
public:
  Philox(std::uint64_t seed, std::uint64_t stream_id)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        ctr2_(static_cast<std::uint32_t>(stream_id)),
        ctr3_(static_cast<std::uint32_t>(stream_id >> 32)) {}

  std::uint32_t next_u32() {
    if (have_ == 0) refill();
    return out_[4 - have_--];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
  static void round_once(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2,
                         std::uint32_t& c3, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t m0 = 0xD2511F53ull * c0;
    const std::uint64_t m1 = 0xCD9E8D57ull * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(m0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(m0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(m1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(m1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
  }

  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = ctr2_;
    std::uint32_t c3 = ctr3_;
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int r = 0; r < 10; ++r) {
      round_once(c0, c1, c2, c3, k0, k1);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = c0;
    out_[1] = c1;
    out_[2] = c2;
    out_[3] = c3;
    ++block_;
    have_ = 4;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t ctr2_, ctr3_;
  std::uint64_t block_ = 0;
  std::uint32_t out_[4] = {};
  int have_ = 0;
};

}  // namespace gml
