#pragma once
// Counter-based random number generation.
//
// Philox4x64-10 is used throughout: a keyed bijection from a 256-bit counter
// to four 64-bit words. Every observation / replication / simulation draw
// owns an independent substream addressed by (seed, stream) with a running
// block counter, so results are identical no matter how work is scheduled
// across threads.

#include <array>
#include <cmath>
#include <cstdint>

namespace wrightiv {

namespace detail {

inline std::uint64_t mul_hi64(std::uint64_t a, std::uint64_t b) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(a) * b) >> 64);
}

}  // namespace detail

// One Philox4x64-10 block: counter = (c0, c1, c2, c3), key = (k0, k1).
inline std::array<std::uint64_t, 4> philox4x64(
    std::array<std::uint64_t, 4> ctr, std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
    constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;  // golden ratio
    constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;  // sqrt(3) - 1
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t hi0 = detail::mul_hi64(kMul0, ctr[0]);
        const std::uint64_t lo0 = kMul0 * ctr[0];
        const std::uint64_t hi1 = detail::mul_hi64(kMul1, ctr[2]);
        const std::uint64_t lo1 = kMul1 * ctr[2];
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

// Deterministic seed mixing: hash(base_seed, index). Used to hand every
// replication / draw its own seed independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
    return philox4x64({index, 0, 0, 0x5EEDULL}, {base_seed, 0})[0];
}

// A substream of the keyed Philox generator: key = (seed, stream), counter
// increments per block. Words of each block are consumed in order.
class SubstreamRng {
  public:
    SubstreamRng(std::uint64_t seed, std::uint64_t stream)
        : key_{seed, stream} {}

    std::uint64_t next_u64() {
        if (word_ == 4) {
            ++block_;
            word_ = 0;
        }
        if (word_ == 0) {
            buffer_ = philox4x64({block_, 0, 0, 0}, key_);
        }
        return buffer_[word_++];
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; safe as a logarithm argument.
    double uniform_open0() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (two uniforms per variate; the sine
    // branch is discarded to keep the draw sequence position-independent).
    double normal() {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::array<std::uint64_t, 2> key_;
    std::array<std::uint64_t, 4> buffer_{};
    std::uint64_t block_ = 0;
    int word_ = 0;
};

}  // namespace wrightiv
