#include "adstage/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace adstage {

Rng::Rng(std::uint64_t seed)
    : engine_(seed)
{
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_closed()
{
    return static_cast<double>(engine_() >> 11) / static_cast<double>((std::uint64_t{1} << 53) - 1);
}

std::size_t Rng::index(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("Rng::index needs n > 0");
    // rejection sampling keeps the draw unbiased
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return static_cast<std::size_t>(v % bound);
}

double Rng::normal()
{
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> Rng::permutation(std::size_t n)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(p));
    return p;
}

} // namespace adstage
