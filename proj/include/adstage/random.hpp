#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace adstage {

/// Seeded generator built on the standard 64-bit Mersenne Twister.
///
/// std::mt19937_64 produces the same stream on every conforming platform, but
/// the std distributions do not, so the conversions to uniform, normal and
/// index draws are implemented here with fixed formulas.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [0, 1] (both endpoints reachable).
    double uniform_closed();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);
    /// Standard normal draw (Box-Muller).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::span<T> values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
};

} // namespace adstage
