#pragma once

// Counter-based SplitMix64 generator. Output k of stream (seed, stream) is a
// pure function of (seed, stream, k), so independent substreams never overlap
// and a run is reproducible from its seed alone.

#include <cstdint>
#include <limits>
#include <random>

namespace raps {

class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Output at an arbitrary counter position without advancing.
    result_type at(std::uint64_t counter) const;
    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Convenience wrapper with the draws the simulator needs.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(seed, stream) {}

    /// Uniform on [lo, hi).
    double uniform(double lo = 0.0, double hi = 1.0);
    /// Normal with the given mean and standard deviation.
    double normal(double mean = 0.0, double stddev = 1.0);

    SplitMix64& engine() { return engine_; }

private:
    SplitMix64 engine_;
};

}  // namespace raps
