#ifndef IRV_RNG_HPP
#define IRV_RNG_HPP

// Counter-based normal generator: Philox4x32-10 keyed by the master seed,
// with the counter formed from (path index, step index, channel).  Every
// draw is a pure function of those four values, which makes ensembles
// bit-identical regardless of how paths are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>

namespace irv {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0,
                         std::uint32_t k1) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

}  // namespace detail

inline std::array<std::uint32_t, 4> philox4x32_10(
    std::array<std::uint32_t, 4> ctr, std::uint32_t key0, std::uint32_t key1) {
  for (int r = 0; r < 10; ++r) {
    detail::philox_round(ctr, key0, key1);
    key0 += detail::kPhiloxW0;
    key1 += detail::kPhiloxW1;
  }
  return ctr;
}

// Channel assignments used across the library.
enum : std::uint32_t {
  kChannelAssetW = 0,
  kChannelVarianceZ = 1,
  kChannelAux1 = 2,
  kChannelAux2 = 3,
  kChannelAux3 = 4,
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t master_seed) : seed_(master_seed) {}

  std::uint64_t master_seed() const { return seed_; }

  // One standard normal per (path, step, channel): a single Philox block
  // yields two 64-bit lanes feeding the Box-Muller cosine branch.
  double normal(std::uint64_t path, std::uint32_t step,
                std::uint32_t channel) const {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(path),
        static_cast<std::uint32_t>(path >> 32), step, channel};
    const auto block =
        philox4x32_10(ctr, static_cast<std::uint32_t>(seed_),
                      static_cast<std::uint32_t>(seed_ >> 32));
    const std::uint64_t lane0 =
        static_cast<std::uint64_t>(block[0]) |
        (static_cast<std::uint64_t>(block[1]) << 32);
    const std::uint64_t lane1 =
        static_cast<std::uint64_t>(block[2]) |
        (static_cast<std::uint64_t>(block[3]) << 32);
    // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
    const double u1 = 1.0 - static_cast<double>(lane0 >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(lane1 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t seed_;
};

}  // namespace irv

#endif  // IRV_RNG_HPP
