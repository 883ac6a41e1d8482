#include "reglearn/core/rng.hpp"

#include <cmath>
#include <numbers>

namespace reglearn {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
    std::uint64_t z = x + kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t index) {
    return splitmix64(splitmix64(base_seed) ^ splitmix64(index ^ 0x5851f42d4c957f2dULL));
}

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return splitmix64(key_ + counter_ * kGolden);
}

double RngStream::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double rng_uniform(RngStream& stream, double lo, double hi) {
    const double u = stream.next_unit();
    if (lo == hi) return lo;
    const double v = lo + (hi - lo) * u;
    return v < hi ? v : lo;
}

double rng_normal(RngStream& stream, double mean, double stddev) {
    const double u1 = 1.0 - stream.next_unit();  // (0, 1]
    const double u2 = stream.next_unit();
    if (stddev == 0.0) return mean;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
}

std::uint64_t rng_index(RngStream& stream, std::uint64_t n) {
    const unsigned __int128 prod = static_cast<unsigned __int128>(stream.next_u64()) * n;
    return static_cast<std::uint64_t>(prod >> 64);
}

}  // namespace reglearn
