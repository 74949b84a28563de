#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

namespace velo {

// Counter-based splittable RNG built on the Philox4x32-10 block cipher.
//
// A generator is identified by a 64-bit key (the seed) plus a 64-bit stream
// id; the Philox counter words are (ctr_lo, ctr_hi, stream_lo, stream_hi).
// The 64-bit block index space of one (key, stream) pair is partitioned so
// that sequential draws and derivation never collide:
//
//   [0, 2^62)        sequential draws (RngStream)
//   [2^62, 2^62+2)   split() -- two blocks, one per child
//   [2^63, 2^64)     fold(salt) -- block 2^63 + (salt mod 2^63)
//
// split() and fold() read whole 128-bit blocks and use them as the child's
// (key, stream), so children are independent generators, and deriving is a
// pure function: the same parent always yields the same children.

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

struct RngKey {
  std::uint32_t k0 = 0, k1 = 0;  // cipher key (from the seed)
  std::uint32_t s0 = 0, s1 = 0;  // stream id (counter words 2 and 3)

  static RngKey from_seed(std::uint64_t seed);

  std::array<std::uint32_t, 4> block(std::uint64_t index) const;

  std::pair<RngKey, RngKey> split() const;
  RngKey fold(std::uint64_t salt) const;
  // fold() keyed by a string (FNV-1a 64 of the bytes).
  RngKey fold_str(const std::string& salt) const;
};

std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Stateful sequential view over one RngKey. Draws consume block indices
// 0, 1, 2, ... of the key's sequential region.
class RngStream {
 public:
  explicit RngStream(RngKey key) : key_(key) {}

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1), 53-bit mantissa.
  double next_double();
  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi);
  // exp(uniform in [ln lo, ln hi)); requires 0 < lo <= hi.
  double next_log_uniform(double lo, double hi);
  // Uniform integer in [0, n), unbiased (rejection).
  std::uint64_t next_below(std::uint64_t n);
  // Standard normal via Box-Muller; caches the second value.
  double next_normal();
  // Standard normal conditioned on |z| <= 2 (rejection).
  double next_trunc_normal();

  const RngKey& key() const { return key_; }

 private:
  RngKey key_;
  std::uint64_t ctr_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;  // empty
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace velo
