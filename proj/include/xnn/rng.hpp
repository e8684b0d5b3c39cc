#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xnn {

// 64-bit mixing function used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random source.
//
// The engine is std::mt19937_64, whose output sequence for a given seed is
// fixed by the C++ standard, so streams are reproducible across platforms.
// The distributions are implemented here instead of using the <random>
// distribution templates, whose algorithms the standard leaves unspecified:
//   uniform [0,1): top 53 bits of one engine output scaled by 2^-53
//   normal:        Marsaglia polar method (one cached spare per pair)
//   integers:      rejection sampling, unbiased
//   permutation:   Fisher-Yates, descending index
//
// Stream splitting: fork(tag) derives a child seed from the parent's base
// seed and an FNV-1a hash of the tag via splitmix64. Child streams are
// independent of how far the parent has advanced, so a fixed (seed, tag)
// pair always names the same stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t base_seed() const { return base_; }

    Rng fork(std::string_view tag) const;

    // Uniform on [0, 1).
    double uniform();
    // Uniform on [a, b).
    double uniform(double a, double b);
    // Standard normal.
    double normal();
    double normal(double mean, double sd);
    // Uniform on {0, ..., n-1}; n >= 1.
    std::uint64_t uniform_index(std::uint64_t n);
    // Uniform random permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t base_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace xnn
