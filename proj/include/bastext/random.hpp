#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace bastext {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based generator: output k of stream s under key is a pure
/// function of (key, s, k). Any worker can reproduce any stream without
/// sharing state, which is what makes parallel runs match serial ones.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng() = default;
    CounterRng(std::uint64_t key, std::uint64_t stream)
        : base_(splitmix64(splitmix64(key) ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL))) {}

    /// Derive a sub-stream keyed by several integers.
    template <typename... Ts>
    static CounterRng keyed(std::uint64_t key, Ts... parts) {
        std::uint64_t stream = 0x5851f42d4c957f2dULL;
        ((stream = splitmix64(stream ^ static_cast<std::uint64_t>(parts))), ...);
        return CounterRng(key, stream);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return splitmix64(base_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

    /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        for (;;) {
            const std::uint64_t x = (*this)();
            const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
            const auto low = static_cast<std::uint64_t>(m);
            if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates with our own generator so shuffles are identical across
/// standard library implementations.
template <typename T>
void shuffle(std::span<T> items, CounterRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace bastext
