#ifndef UDA_RNG_HPP
#define UDA_RNG_HPP

#include <cstdint>

namespace uda {

// Deterministic splitmix64 generator. Implemented by hand so that streams
// are reproducible byte-for-byte across platforms and standard libraries
// (std::uniform_int_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) by rejection, n >= 1.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~0ULL - (~0ULL % n);
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Derives an independent stream from a seed and stream labels. Mixing
    // through the generator itself keeps nearby labels decorrelated.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        Rng mixer(seed);
        std::uint64_t s = mixer.next();
        s ^= Rng(a ^ 0x517cc1b727220a95ULL).next();
        s ^= Rng(b ^ 0x2545f4914f6cdd1dULL).next();
        s ^= Rng(c ^ 0x9e3779b97f4a7c15ULL).next();
        return Rng(s);
    }

private:
    std::uint64_t state_;
};

}  // namespace uda

#endif
