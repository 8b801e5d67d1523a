#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cscope {

/// splitmix64 step; used to expand seeds and derive stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** (Blackman & Vigna) seeded through splitmix64.
///
/// All conversions to floating point are done here rather than through
/// <random> distributions, whose output is implementation-defined, so a
/// given seed yields the same stream on every platform.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& s : state_) s = splitmix64(sm);
    }

    /// Independent stream `stream_id` derived from `seed`. Streams with
    /// different ids are decorrelated by two rounds of splitmix64.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) noexcept {
        std::uint64_t sm = seed ^ 0x6A09E667F3BCC909ULL;
        std::uint64_t a = splitmix64(sm);
        std::uint64_t sid = stream_id + 0xB7E151628AED2A6BULL;
        std::uint64_t b = splitmix64(sid);
        return Rng(a ^ (b * 0x9E3779B97F4A7C15ULL));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection (no modulo bias). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % n;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Named stream ids so that every consumer of the top-level seed draws
/// from its own documented substream.
namespace streams {
inline constexpr std::uint64_t simulation = 1;
inline constexpr std::uint64_t init_weights = 2;
inline constexpr std::uint64_t directions = 3;
inline constexpr std::uint64_t null_directions = 4;
inline constexpr std::uint64_t kmeans = 5;
inline constexpr std::uint64_t pca_subsample = 6;
} // namespace streams

} // namespace cscope

namespace cscope {

/// First output of substream `stream_id`; a 64-bit seed for nested consumers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) noexcept {
    return Rng::stream(seed, stream_id).next();
}

} // namespace cscope
