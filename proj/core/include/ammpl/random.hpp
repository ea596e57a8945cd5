#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace ammpl {

/// 64-bit FNV-1a, used to turn stream names and class labels into keys.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Seedable counter-based random stream.
///
/// The key is derived from (seed, name); draw n evaluates Philox on counter n,
/// so the sequence is a pure function of (seed, name, draw index) and does not
/// depend on the platform's <random> implementation.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    /// Standard normal via Box-Muller (one normal per two uniforms, no caching).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// 1 with probability p (p is expected in [0, 1]).
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Independent child stream; does not advance this one.
    RandomStream fork(std::string_view name) const;

    std::uint64_t draws() const noexcept { return counter_; }
    std::uint64_t key() const noexcept { return key_; }

private:
    RandomStream(std::uint64_t key, int);

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace ammpl
