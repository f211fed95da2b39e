#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fdpu {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Streams are cheap value types keyed by (key, stream, substream); the block
// counter advances as words are consumed. Draws from disjoint
// (stream, substream) pairs are independent regardless of scheduling, which
// is what makes parallel sweeps reproducible at any worker count.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t key, std::uint64_t stream, std::uint32_t substream)
      : key0_(static_cast<std::uint32_t>(key)),
        key1_(static_cast<std::uint32_t>(key >> 32)),
        ctr1_(substream),
        ctr2_(static_cast<std::uint32_t>(stream)),
        ctr3_(static_cast<std::uint32_t>(stream >> 32)) {}

  // One Philox4x32-10 block: 4 output words from (counter, key).
  static void raw_block(const std::uint32_t ctr[4], const std::uint32_t key[2],
                        std::uint32_t out[4]) {
    std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
      const std::uint32_t n1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
  }

  std::uint32_t next_u32() {
    if (idx_ == 4) {
      const std::uint32_t ctr[4] = {ctr0_, ctr1_, ctr2_, ctr3_};
      const std::uint32_t key[2] = {key0_, key1_};
      raw_block(ctr, key, out_);
      ++ctr0_;
      idx_ = 0;
    }
    return out_[idx_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Marsaglia's polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Standard Cauchy (location 0, scale 1).
  double cauchy() { return std::tan(std::numbers::pi * (uniform() - 0.5)); }

  // Uniform on (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint32_t key0_, key1_;
  std::uint32_t ctr0_ = 0, ctr1_, ctr2_, ctr3_;
  std::uint32_t out_[4] = {0, 0, 0, 0};
  int idx_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Purpose salts keep unrelated sub-streams of one root seed apart.
enum class RngPurpose : std::uint64_t {
  model_loadings = 1,
  sigma_draws = 2,
  replicate = 3,
  pair_mc = 4,
  cv_folds = 5,
  alt_placement = 6,
};

inline PhiloxStream make_stream(std::uint64_t seed, RngPurpose purpose,
                                std::uint64_t stream, std::uint32_t substream = 0) {
  const std::uint64_t salted = (static_cast<std::uint64_t>(purpose) << 56) ^ stream;
  return PhiloxStream(seed, salted, substream);
}

}  // namespace fdpu
