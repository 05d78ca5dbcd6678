#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace gds {

// Philox4x32-10 counter-based generator. A generator state is the pair
// (64-bit key = seed, 128-bit counter); the counter's high 64 bits hold the
// stream id and the low 64 bits the position within the stream, so distinct
// (seed, stream) pairs index disjoint counter blocks and never overlap.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic stream-id derivation. Modules tag their streams with a domain
// byte so independent consumers of the same seed never share a counter block.
enum class StreamDomain : std::uint64_t {
  kTarget = 1,
  kDataset = 2,
  kInit = 3,
  kDmftPaths = 4,
  kTestBank = 5,
  kSpiked = 6,
  kTestSet = 7,
  kMisc = 8,
};

inline std::uint64_t make_stream(StreamDomain domain, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(static_cast<std::uint64_t>(domain) ^ 0xA5A5A5A5A5A5A5A5ull);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return s;
}

// One logical random stream: uniforms, normals (Box-Muller), and bulk fills.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;
    const double u2 = (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = normal();
  }

  void fill_uniform(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = uniform();
  }

  std::uint64_t seed() const {
    return (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0];
  }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_ >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    buf_ = Philox4x32::block(ctr, key_);
    ++pos_;
    buf_pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_ = 0;
  std::uint64_t pos_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gds
