#pragma once

// ---------------------------------------------------------------------------
// Counter-based random streams.
//
// A stream is a (key, counter) pair; draw i is splitmix64(key + i * golden).
// Substreams are keyed by mix(base_seed, index), so sample j of a dataset
// sees the same numbers no matter which thread generates it or in which
// order samples are produced.
// ---------------------------------------------------------------------------

#include <cstdint>

namespace reglearn {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t index);

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : key_(splitmix64(seed)) {}

    static RngStream substream(std::uint64_t base_seed, std::uint64_t index) {
        return RngStream(mix_seed(base_seed, index));
    }

    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double next_unit();

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Uniform on [lo, hi); returns lo exactly when lo == hi.
double rng_uniform(RngStream& stream, double lo, double hi);
// Box-Muller. std == 0 returns mean exactly (the stream still advances).
double rng_normal(RngStream& stream, double mean, double stddev);
// Uniform integer in [0, n).
std::uint64_t rng_index(RngStream& stream, std::uint64_t n);

}  // namespace reglearn
