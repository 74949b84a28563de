#include "velo/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace velo {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& c, const std::array<std::uint32_t, 2>& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

constexpr std::uint64_t kSplitBase = 1ull << 62;
constexpr std::uint64_t kFoldBase = 1ull << 63;

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, key);
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

RngKey RngKey::from_seed(std::uint64_t seed) {
  RngKey k;
  k.k0 = static_cast<std::uint32_t>(seed);
  k.k1 = static_cast<std::uint32_t>(seed >> 32);
  return k;
}

std::array<std::uint32_t, 4> RngKey::block(std::uint64_t index) const {
  return philox4x32_10({static_cast<std::uint32_t>(index),
                        static_cast<std::uint32_t>(index >> 32), s0, s1},
                       {k0, k1});
}

std::pair<RngKey, RngKey> RngKey::split() const {
  const auto a = block(kSplitBase);
  const auto b = block(kSplitBase + 1);
  return {RngKey{a[0], a[1], a[2], a[3]}, RngKey{b[0], b[1], b[2], b[3]}};
}

RngKey RngKey::fold(std::uint64_t salt) const {
  const auto w = block(kFoldBase + (salt & (kFoldBase - 1)));
  return RngKey{w[0], w[1], w[2], w[3]};
}

RngKey RngKey::fold_str(const std::string& salt) const { return fold(fnv1a64(salt)); }

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint32_t RngStream::next_u32() {
  if (buf_pos_ == 4) {
    buf_ = key_.block(ctr_++);
    buf_pos_ = 0;
  }
  return buf_[buf_pos_++];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t lo = next_u32();
  const std::uint64_t hi = next_u32();
  return lo | (hi << 32);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double RngStream::next_log_uniform(double lo, double hi) {
  if (!(lo > 0.0) || hi < lo)
    throw std::invalid_argument("next_log_uniform: need 0 < lo <= hi");
  return std::exp(next_uniform(std::log(lo), std::log(hi)));
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_below(0)");
  const std::uint64_t rem = (-n) % n;  // 2^64 mod n
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r < rem);
  return (r - rem) % n;
}

double RngStream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - next_double();  // (0, 1]
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double RngStream::next_trunc_normal() {
  for (;;) {
    const double z = next_normal();
    if (std::fabs(z) <= 2.0) return z;
  }
}

}  // namespace velo
