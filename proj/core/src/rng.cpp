#include "raps/rng.hpp"

namespace raps {

namespace {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t SplitMix64::mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SplitMix64::SplitMix64(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed ^ mix(stream + kGamma))) {}

SplitMix64::result_type SplitMix64::at(std::uint64_t counter) const {
    return mix(key_ + (counter + 1) * kGamma);
}

SplitMix64::result_type SplitMix64::operator()() { return at(counter_++); }

double Rng::uniform(double lo, double hi) {
    // 53 random mantissa bits, exact on every platform.
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

double Rng::normal(double mean, double stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return mean + stddev * dist(engine_);
}

}  // namespace raps
