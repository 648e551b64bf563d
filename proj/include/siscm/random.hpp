#pragma once

// Seeded random streams with deterministic, scheduling-independent substreams.
//
// Every stochastic stage derives its stream from (master seed, stage name,
// task key) through `Rng::substream`. The derivation depends only on the
// seed the stream was constructed with, never on how many values it has
// produced, so a task gets the same numbers whichever thread runs it.
//
// Only the raw 64-bit output of std::mt19937_64 is used (its sequence is
// fixed by the standard); uniform doubles and bounded integers are derived
// here rather than through the implementation-defined std distributions.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <type_traits>

namespace siscm {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t mix(std::uint64_t state, std::uint64_t key) noexcept {
    return splitmix64(state ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

template <class Key>
constexpr std::uint64_t key_hash(const Key& key) noexcept {
    if constexpr (std::is_convertible_v<const Key&, std::string_view>) {
        return fnv1a(std::string_view(key));
    } else {
        static_assert(std::is_integral_v<Key>, "substream keys are strings or integers");
        return static_cast<std::uint64_t>(key);
    }
}

}  // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream keyed by `keys`; a pure function of (seed, keys).
    template <class... Keys>
    Rng substream(const Keys&... keys) const {
        std::uint64_t s = seed_;
        ((s = detail::mix(s, detail::key_hash(keys))), ...);
        return Rng(s);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % n;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Inverse CDF of the standard Gumbel distribution.
inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

inline double sample_gumbel(Rng& rng) { return gumbel_from_uniform(rng.uniform_open()); }

/// Gumbel(location) conditioned to lie below `bound`.
inline double sample_truncated_gumbel(double location, double bound, Rng& rng) {
    const double u = rng.uniform_open();
    return location - std::log(std::exp(location - bound) - std::log(u));
}

}  // namespace siscm
