#pragma once
// Deterministic 64-bit RNG used everywhere reproducibility is contractual
// (weight init, dataset splits, epoch shuffles). SplitMix64: the output
// sequence is fully specified by the constants below, so streams are
// identical across platforms and standard libraries.

#include <cstdint>
#include <utility>
#include <vector>

namespace cogspeech {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, bound). Modulo bias is irrelevant at the
    // bounds used here (shuffles over < 2^20 elements).
    std::uint64_t next_below(std::uint64_t bound) {
        return bound == 0 ? 0 : next_u64() % bound;
    }

private:
    std::uint64_t state_;
};

// Derives an independent stream seed; mixing through one SplitMix64 step
// keeps substreams decorrelated even for adjacent salts.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    SplitMix64 rng(seed ^ (0x632be59bd9b4e019ULL * (salt + 1)));
    return rng.next_u64();
}

// Fisher-Yates with a SplitMix64 stream.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace cogspeech
