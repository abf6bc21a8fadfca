#ifndef OPVI_RNG_HPP
#define OPVI_RNG_HPP

#include <array>
#include <cstdint>
#include <span>

namespace opvi {

/// SplitMix64 finalizer. Used for seeding and for deriving stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Order-sensitive hash of a sequence of 64-bit words. Stable across
/// platforms; cell seeds and sub-stream keys are built with it.
std::uint64_t hash_words(std::span<const std::uint64_t> words) noexcept;

template <class... Ts>
std::uint64_t hash_seed(Ts... words) noexcept
{
    const std::array<std::uint64_t, sizeof...(Ts)> w{static_cast<std::uint64_t>(words)...};
    return hash_words(w);
}

/**
 * xoshiro256** generator with portable distribution helpers.
 *
 * Streams: `Rng::stream(seed, id)` seeds a fresh generator from
 * hash(seed, id) through SplitMix64. The simulators open stream 0 for
 * initial conditions and stream t+1 for time step t, so a trajectory does
 * not depend on how many draws earlier steps consumed.
 *
 * All variates are computed from the raw 64-bit output with explicit
 * formulas (no std::*_distribution), so sequences match across standard
 * library implementations.
 */
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept;

    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    {
        return Rng(hash_seed(seed, stream_id));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }
    result_type next() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    /// Uniform on (0, 1).
    double uniform_open() noexcept
    {
        return (static_cast<double>(next() >> 12) + 0.5) * 0x1.0p-52;
    }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound) noexcept;

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller; the spare variate is cached.
    double normal() noexcept;

    /// Standard Gumbel: -log(-log U).
    double gumbel() noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace opvi

#endif // OPVI_RNG_HPP
