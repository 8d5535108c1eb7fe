#pragma once

// Counter-based deterministic randomness.
//
// Every random decision in the simulator is derived from a 64-bit key built
// out of (seed, purpose tag, indices...) with the SplitMix64 finalizer.
// Keyed draws are pure functions of the key, so results do not depend on
// evaluation order or worker count; sequential streams are SplitMix64
// generators whose initial state is such a key.

#include <cmath>
#include <cstdint>

namespace cogc::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 output finalizer.
inline constexpr std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

inline constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix(h ^ (v + kGolden + (h << 6) + (h >> 2)));
}

// Purpose tags keep unrelated stream families disjoint for the same seed.
enum class Tag : std::uint64_t {
    blob_centers = 1,
    blob_train,
    blob_test,
    partition,
    model_init,
    sgd_batch,
    quantizer,
    link_d2d,
    link_d2p,
    mc_trial,
    gc_construct,
};

inline constexpr std::uint64_t key(std::uint64_t seed, Tag tag, std::uint64_t a = 0,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix(seed + kGolden);
    h = combine(h, static_cast<std::uint64_t>(tag));
    h = combine(h, a);
    h = combine(h, b);
    h = combine(h, c);
    return h;
}

inline constexpr double to_u01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stateless keyed draw in [0, 1): used for per-(round, link) channel draws.
inline constexpr double keyed_u01(std::uint64_t k) { return to_u01(mix(k)); }

// Sequential SplitMix64 stream.
class Stream {
public:
    explicit Stream(std::uint64_t k) : state_(k) {}

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    double next_u01() { return to_u01(next_u64()); }

    // Uniform integer in [0, n) via 128-bit multiply-shift.
    std::uint64_t next_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; generates a pair, caches the second.
    double next_gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_u01();
        double u2 = next_u01();
        // Avoid log(0).
        while (u1 <= 0.0) u1 = next_u01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace cogc::rng
