#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dpipe {

/// SplitMix64 finalizer; full-avalanche 64-bit mixing.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random generator. A draw is a pure function of
/// (seed, stream, counter), so identical seeds give identical streams on all
/// platforms and parallel callers can share one generator by partitioning the
/// counter space. `stream` is typically an image or sample index.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix64(mix64(seed) ^ 0x6a09e667f3bcc909ULL ^ mix64(stream * 0x9e3779b97f4a7c15ULL + 1))) {}

    /// Derive an independent sub-stream (e.g. one per image).
    Rng stream(std::uint64_t idx) const {
        Rng r = *this;
        r.key_ = mix64(key_ ^ mix64(idx + 0x51afd7ed558ccd25ULL));
        r.counter_ = 0;
        return r;
    }

    std::uint64_t bits_at(std::uint64_t counter) const { return mix64(key_ ^ (counter + 1) * 0x2545f4914f6cdd1dULL); }

    /// Uniform in [0, 1).
    double uniform_at(std::uint64_t counter) const {
        return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes counters `counter` and `counter + 1`.
    double gaussian_at(std::uint64_t counter) const {
        // u1 in (0, 1] so the log is finite.
        const double u1 = (static_cast<double>(bits_at(counter) >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform_at(counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Sequential convenience; advances an internal counter.
    double next_uniform() { return uniform_at(counter_++); }
    double next_gaussian() {
        const double g = gaussian_at(counter_);
        counter_ += 2;
        return g;
    }
    std::uint64_t next_bits() { return bits_at(counter_++); }
    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n ? next_bits() % n : 0; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace dpipe
