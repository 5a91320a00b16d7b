#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace arithlab {

// Seed expansion for deriving independent substreams from one master seed.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// mt19937_64 is fully specified by the standard, so sequences are identical
// across platforms. The std distributions are not, hence the hand-rolled
// draws below.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    // Independent stream derived from this rng's seed; `salt` picks siblings.
    Rng child(uint64_t salt) const {
        uint64_t s = seed_ ^ (0xa5a5a5a55a5a5a5aull + salt * 0x9e3779b97f4a7c15ull);
        uint64_t a = splitmix64(s);
        uint64_t b = splitmix64(s);
        return Rng(a ^ (b << 1) ^ salt);
    }

    uint64_t seed() const { return seed_; }
    uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n + 1) % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v > limit);
        return v % n;
    }

    long long range(long long lo, long long hi) {  // inclusive bounds
        return lo + static_cast<long long>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Uniform in [0, 1) with 53 random bits.
    double real01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool coin() { return (engine_() & 1ull) != 0; }

    // Box-Muller, uncached so the draw count stays predictable.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        double u1;
        do {
            u1 = real01();
        } while (u1 <= 0.0);
        double u2 = real01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace arithlab
