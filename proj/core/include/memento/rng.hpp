#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace memento {

// splitmix64; used to derive stream keys from seed material.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }

// Purpose tags keep streams for unrelated draws statically disjoint.
enum class RngDomain : uint64_t {
    DataGen = 1,
    ParamInit = 2,
    Rollout = 3,
    TrainBatch = 4,
    Test = 5,
};

// Philox4x32-10 counter-based generator. A stream is (key, counter); jumping
// to any draw index is O(1), so parallel schedules cannot perturb the
// sequence: draw i of a stream is a pure function of (key, i).
class RngStream {
  public:
    RngStream() : RngStream(0) {}
    explicit RngStream(uint64_t key) : key_(key), draw_(0) {}

    // Derive a stream from seed material. All arguments are hashed into the
    // Philox key, so distinct tuples give statically independent streams.
    static RngStream derive(uint64_t seed, RngDomain domain, uint64_t a = 0, uint64_t b = 0,
                            uint64_t c = 0) {
        uint64_t k = mix64(seed, static_cast<uint64_t>(domain));
        k = mix64(k, a);
        k = mix64(k, b);
        k = mix64(k, c);
        return RngStream(k);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n). Lemire rejection.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        while (true) {
            uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            uint64_t lo = static_cast<uint64_t>(m);
            if (lo >= n) return static_cast<uint64_t>(m >> 64);
            uint64_t t = (0 - n) % n;
            if (lo >= t) return static_cast<uint64_t>(m >> 64);
        }
    }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    uint64_t next_u64() {
        uint64_t idx = draw_++;
        std::array<uint32_t, 4> ctr = {static_cast<uint32_t>(idx), static_cast<uint32_t>(idx >> 32),
                                       0u, 0u};
        std::array<uint32_t, 2> key = {static_cast<uint32_t>(key_),
                                       static_cast<uint32_t>(key_ >> 32)};
        philox_rounds(ctr, key);
        return (static_cast<uint64_t>(ctr[1]) << 32) | ctr[0];
    }

    uint64_t key() const { return key_; }
    uint64_t draws() const { return draw_; }

  private:
    static void philox_rounds(std::array<uint32_t, 4>& ctr, std::array<uint32_t, 2> key) {
        constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
            uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
            uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
            uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += W0;
            key[1] += W1;
        }
    }

    uint64_t key_;
    uint64_t draw_;
};

}  // namespace memento
