#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <utility>

namespace cqrank {

/// SplitMix64 generator. Small state, cheap to seed per example, and its
/// output sequence is fully specified, so derived streams are portable.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Hashes a seed together with coordinates (epoch, batch, example, ...)
/// into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = SplitMix64(seed)();
    for (auto c : coords) h = SplitMix64(h ^ (c * 0xD6E8FEB86659FD93ULL))();
    return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
template <typename G>
double uniform01(G& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; n > 0.
template <typename G>
std::uint64_t uniform_below(G& gen, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = gen();
    } while (x >= limit);
    return x % n;
}

/// Fisher-Yates with a portable draw sequence (std::shuffle is not).
template <typename T, typename G>
void portable_shuffle(std::span<T> items, G& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform_below(gen, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace cqrank
