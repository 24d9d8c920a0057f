#pragma once

#include <cstdint>

namespace oraclesim {

// SplitMix64 finalizer. Full-avalanche mix used both as the generator step
// and to derive independent streams from (seed, index) pairs.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/**
 * Counter-based pseudo-random stream.
 *
 * Every simulation in this project identifies a draw by position (seed,
 * trial, node, ...) rather than by call order, so results are reproducible
 * bit-for-bit no matter how work is scheduled across threads. split(i)
 * derives stream i of this stream; the derived streams are independent of
 * how much the parent has been consumed.
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x4d595df4d0f33173ull)), ctr_(0) {}

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(++ctr_)); }

    // Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Fixed-point multiply keeps the mapping
    // branch-free and identical across platforms; the bias is O(n / 2^64).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Child stream `index` of this stream's identity (not of its position).
    Rng split(std::uint64_t index) const { return Rng(mix64(key_ + 0x9e3779b97f4a7c15ull * (index + 1))); }

    std::uint64_t key() const { return key_; }

  private:
    std::uint64_t key_;
    std::uint64_t ctr_;
};

// One-shot draws addressed by position (stream key, major index, minor
// index); avoids constructing an Rng in the hot simulation loops.
inline std::uint64_t counter_u64(std::uint64_t key, std::uint64_t a, std::uint64_t b) {
    return mix64(key ^ mix64(a ^ 0x94d049bb133111ebull) ^ (b * 0xda942042e4dd58b5ull));
}

inline double counter_uniform(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0) {
    return static_cast<double>(counter_u64(key, a, b) >> 11) * 0x1.0p-53;
}

inline std::uint64_t counter_below(std::uint64_t key, std::uint64_t a, std::uint64_t b,
                                   std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(counter_u64(key, a, b)) * n) >> 64);
}

}  // namespace oraclesim
