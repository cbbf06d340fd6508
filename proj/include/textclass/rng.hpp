#pragma once

#include <cstdint>
#include <vector>

namespace textclass {

// splitmix64 generator (Steele, Lea, Vigna). 64-bit state, one multiply-xor
// round per draw. Used for every seeded operation in the library so that
// splits, parameter draws and masking are reproducible across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Modulo draw; the bias is < n / 2^64, irrelevant at
    // the corpus sizes handled here, and keeps the stream layout simple.
    uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Uniform in (-a, a).
    double next_symmetric(double a) { return (2.0 * next_double() - 1.0) * a; }

    bool next_bernoulli(double p) { return next_double() < p; }

private:
    uint64_t state_;
};

// Fisher-Yates shuffle driven by SplitMix64; one next_below per swap,
// walking from the back of the range.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace textclass
