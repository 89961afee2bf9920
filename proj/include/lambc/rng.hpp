#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lambc {

// splitmix64 finalizer. Used to derive stream seeds (per-epoch shuffles,
// per-component seeds) from one experiment seed; fixed here so identical
// configs shuffle identically on every platform.
std::uint64_t mix64(std::uint64_t seed, std::uint64_t index);

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the distributions are hand-rolled because the std ones are
// implementation-defined and would break bitwise reproducibility across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (first value of each pair; no cache).
    double normal();

    // Uniform index in [0, n), rejection sampled so the stream is unbiased.
    std::size_t index(std::size_t n);

private:
    std::mt19937_64 gen_;
};

// Fisher-Yates permutation of {0, ..., n-1}.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace lambc
