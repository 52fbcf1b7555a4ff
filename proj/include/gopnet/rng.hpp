#pragma once

#include <cmath>
#include <cstdint>

namespace gopnet {

// splitmix64 finalizer. Also used to fold stream identifiers into a seed so
// that each derived stream is decorrelated from its siblings.
inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
    h += 0x9e3779b97f4a7c15ULL + v;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

// Deterministic generator with an implementation-pinned output sequence, so
// runs are reproducible across standard libraries and across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased-enough index in [0, n) via multiply-shift.
    std::uint64_t index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal draw (Box-Muller, two uniforms consumed per call).
    double gaussian() {
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::uint64_t state_;
};

// Independent stream addressed by (seed, stream id, index). Candidate search
// uses (seed, step, operator-set index) so serial and parallel evaluation
// sample identical weights.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return Rng(mix_u64(mix_u64(seed, stream), index));
}

}  // namespace gopnet
