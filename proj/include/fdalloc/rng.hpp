#pragma once

#include <cstdint>
#include <string_view>

namespace fdalloc {

/// Deterministic counter-free PRNG (xoshiro256**) with named sub-streams.
///
/// Every consumer derives its own stream from (master seed, stream name), so
/// adding a robot or reordering draws in one stream never perturbs another.
/// The generator is self-contained: identical seeds produce identical draws
/// on every platform, independent of the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { seed_state(seed); }

    /// Derive an independent stream for (seed, name, index).
    static Rng stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Marsaglia polar method.
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    void seed_state(std::uint64_t seed);

    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fdalloc
