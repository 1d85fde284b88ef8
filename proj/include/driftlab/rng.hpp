#pragma once

// Counter-based splittable random streams. Every consumer derives its own
// stream from (root seed, stream keys), so parallel generation of sample i
// never depends on what happened to samples 0..i-1.

#include <cmath>
#include <cstdint>
#include <vector>

namespace driftlab {

namespace detail {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(detail::mix64(seed)) {}

    // Derive a stream from a root seed and up to three key words.
    static RngStream keyed(std::uint64_t seed, std::uint64_t k1,
                           std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
        std::uint64_t s = detail::mix64(seed);
        s = detail::mix64(s ^ detail::mix64(k1 + 0x632be59bd9b4e019ULL));
        s = detail::mix64(s ^ detail::mix64(k2 + 0x9e3779b97f4a7c15ULL));
        s = detail::mix64(s ^ detail::mix64(k3 + 0xd1b54a32d192ed03ULL));
        return RngStream(FromState{}, s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the second variate is cached.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_gaussian(std::vector<double>& out) {
        for (double& v : out) v = next_gaussian();
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Lemire's multiply-shift rejection.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t thresh = (0 - n) % n;
            while (lo < thresh) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    struct FromState {};
    RngStream(FromState, std::uint64_t s) : state_(s) {}

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Well-known stream ids so independent modules never collide on keys.
namespace stream_id {
inline constexpr std::uint64_t kSample = 1;
inline constexpr std::uint64_t kForward = 2;
inline constexpr std::uint64_t kTraining = 3;
inline constexpr std::uint64_t kBootstrap = 4;
inline constexpr std::uint64_t kGridSearch = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kCounterfactual = 7;
} // namespace stream_id

} // namespace driftlab
