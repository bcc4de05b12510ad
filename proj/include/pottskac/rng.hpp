#pragma once

// Counter-based random numbers (Philox4x32-10).  Every draw is a pure
// function of (seed, stream, counter), so parallel chains keyed by stream
// index reproduce bit-identically regardless of scheduling.

#include <array>
#include <cstdint>

namespace pottskac {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& x,
                         std::uint32_t k0, std::uint32_t k1) {
    constexpr std::uint32_t M0 = 0xD2511F53u;
    constexpr std::uint32_t M1 = 0xCD9E8D57u;
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * x[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * x[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
}

} // namespace detail

// One 10-round Philox block: 128 bits of counter -> 128 bits of output.
inline std::array<std::uint32_t, 4>
philox4x32_10(std::array<std::uint32_t, 4> counter,
              std::uint32_t key0, std::uint32_t key1) {
    constexpr std::uint32_t W0 = 0x9E3779B9u;
    constexpr std::uint32_t W1 = 0xBB67AE85u;
    detail::philox_round(counter, key0, key1);
    for (int r = 1; r < 10; ++r) {
        key0 += W0;
        key1 += W1;
        detail::philox_round(counter, key0, key1);
    }
    return counter;
}

class Rng {
public:
    // stream picks an independent sequence under the same seed; used to key
    // Monte Carlo chains as (seed, chain index).
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // uniform on [0,1) with 53 random bits
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform on {0,...,n-1}; rejection keeps the draw exactly uniform
    std::uint32_t uniform_int(std::uint32_t n) {
        const std::uint64_t span = 1ull << 32;
        const std::uint64_t limit = span - span % n;
        std::uint32_t r;
        do {
            r = next_u32();
        } while (static_cast<std::uint64_t>(r) >= limit);
        return static_cast<std::uint32_t>(r % n);
    }

    // position the generator at an absolute block index (128 bits per block)
    void seek_block(std::uint64_t block) {
        block_ = block;
        pos_ = 4;
    }

private:
    void refill() {
        buf_ = philox4x32_10({static_cast<std::uint32_t>(block_),
                              static_cast<std::uint32_t>(block_ >> 32),
                              stream_lo_, stream_hi_},
                             key0_, key1_);
        ++block_;
        pos_ = 0;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
};

} // namespace pottskac
