#pragma once
#include <cstdint>

namespace aptm::numcore {

// Counter-based random stream. The n-th draw is a pure function of
// (seed, stream_id, n), so any stochastic site keyed by (seed, site, step)
// reproduces its draws without serialized state. Integer and uniform draws
// use integer arithmetic only and are identical on every platform.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    // Uniform integer in [0, n), n >= 1, rejection-sampled (unbiased).
    std::uint64_t next_below(std::uint64_t n);
    bool next_coin() { return (next_u64() & 1u) != 0; }

    // Standard normal via the polar method (no cached spare).
    double next_normal();
    // Normal(0, stddev) resampled until |x| <= clip.
    double next_trunc_normal(double stddev, double clip);

    // Independent child stream; does not advance this stream.
    RngStream split(std::uint64_t child_id) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t state_;
};

}  // namespace aptm::numcore
