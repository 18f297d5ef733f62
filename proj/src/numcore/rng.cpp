#include "aptm/numcore/rng.hpp"

#include <cmath>

#include "aptm/errors.hpp"

namespace aptm::numcore {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer; bijective on u64.
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id),
      state_(mix64(mix64(seed + kGamma) ^ (stream_id * 0xDA942042E4DD58B5ull))) {}

std::uint64_t RngStream::next_u64() {
    state_ += kGamma;
    return mix64(state_);
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw ContractError("RngStream::next_below: n must be >= 1");
    const std::uint64_t rem = (~std::uint64_t{0}) % n;
    const std::uint64_t limit = ~std::uint64_t{0} - rem;  // multiple of n
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
}

double RngStream::next_normal() {
    for (;;) {
        const double u = 2.0 * next_double() - 1.0;
        const double v = 2.0 * next_double() - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

double RngStream::next_trunc_normal(double stddev, double clip) {
    for (;;) {
        const double x = stddev * next_normal();
        if (std::fabs(x) <= clip) return x;
    }
}

RngStream RngStream::split(std::uint64_t child_id) const {
    return RngStream(mix64(state_ ^ mix64(child_id + kGamma)), child_id);
}

}  // namespace aptm::numcore
