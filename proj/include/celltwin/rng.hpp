#pragma once

/**
 * Counter-based random numbers.
 *
 * Every draw is a pure function of (seed, stream, cycle, index, lane), so a
 * particle's noise at a given cycle does not depend on how many draws came
 * before it or which thread produced it. Bits come from the splitmix64
 * finalizer applied to the folded key; normals use Box-Muller on two lanes.
 *
 * The generator is versioned: changing any constant here changes every
 * seeded output of the toolkit and must bump kGeneratorName.
 */

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace celltwin::rng
{

inline constexpr std::string_view kGeneratorName = "splitmix64-counter-v1";

enum class Stream : std::uint64_t
{
    InitLog10A = 1,
    InitB = 2,
    ProcessLog10A = 3,
    ProcessB = 4,
    Resample = 5,
    Synthetic = 6,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Key
{
    std::uint64_t seed = 0;
    Stream stream = Stream::Synthetic;
    std::uint64_t cycle = 0;
    std::uint64_t index = 0;
    std::uint64_t lane = 0;
};

constexpr std::uint64_t bits(const Key& key) noexcept
{
    std::uint64_t h = mix64(key.seed);
    h = mix64(h ^ static_cast<std::uint64_t>(key.stream));
    h = mix64(h ^ key.cycle);
    h = mix64(h ^ key.index);
    return mix64(h ^ key.lane);
}

/// Uniform on [0, 1) with 53 random bits.
constexpr double uniform01(const Key& key) noexcept
{
    return static_cast<double>(bits(key) >> 11) * 0x1.0p-53;
}

/// Uniform on the open interval (0, 1).
constexpr double uniform_open(const Key& key) noexcept
{
    return (static_cast<double>(bits(key) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw. Uses lanes 2*key.lane and 2*key.lane + 1.
inline double standard_normal(Key key) noexcept
{
    const std::uint64_t lane = key.lane;
    key.lane = 2 * lane;
    const double u1 = uniform_open(key);
    key.lane = 2 * lane + 1;
    const double u2 = uniform01(key);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Stable 64-bit seed for a named entity (FNV-1a over the name, mixed with the base seed).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view name) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : name)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(mix64(base) ^ h);
}

/// Sequential convenience wrapper over the counter generator.
class CounterRng
{
  public:
    explicit CounterRng(std::uint64_t seed, Stream stream = Stream::Synthetic) : seed_(seed), stream_(stream) {}

    double uniform() { return uniform01(next_key()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double stddev = 1.0) { return mean + stddev * standard_normal(next_key()); }

    std::uint64_t counter() const { return counter_; }

  private:
    Key next_key() { return Key{seed_, stream_, 0, counter_++, 0}; }

    std::uint64_t seed_;
    Stream stream_;
    std::uint64_t counter_ = 0;
};

} // namespace celltwin::rng
