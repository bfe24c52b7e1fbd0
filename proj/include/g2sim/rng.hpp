#pragma once

// Random number generation with a fixed, published algorithm so that a
// (seed, stream id) pair reproduces the same variates on every platform.
// Engine: xoshiro256** (Blackman & Vigna), state filled by splitmix64.
// Variates are derived here rather than through <random> distributions,
// whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <limits>

namespace g2sim {

inline constexpr const char* kRngAlgorithm = "xoshiro256**/splitmix64";

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent sub-seed for a named stage / segment.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) noexcept {
    std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ULL);
    splitmix64(s);
    s ^= index * 0x8CB92BA72F3D8DD7ULL;
    return splitmix64(s);
}

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1].
    double uniform_pos() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    double exponential(double mean) noexcept { return -mean * std::log(uniform_pos()); }

    // Marsaglia polar method; the spare variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Number of Bernoulli(p) trials up to and including the first success (support 1, 2, ...).
    std::uint64_t geometric(double p) noexcept {
        if (p >= 1.0) return 1;
        const double k = std::floor(std::log(uniform_pos()) / std::log1p(-p));
        if (k >= 9.0e18) return std::numeric_limits<std::uint64_t>::max();
        return static_cast<std::uint64_t>(k) + 1;
    }

    // Gamma(shape, scale), Marsaglia & Tsang. Shapes below 1 use the u^(1/shape) boost.
    double gamma(double shape, double scale) noexcept {
        if (shape < 1.0) {
            return gamma(shape + 1.0, scale) * std::pow(uniform_pos(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    // Poisson variate: inversion for small means, Hormann's PTRS rejection otherwise.
    std::uint64_t poisson(double mean) noexcept;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stage identifiers used with derive_seed so each stochastic stage draws from its own stream.
namespace rng_stream {
inline constexpr std::uint64_t kSource = 1;
inline constexpr std::uint64_t kSourceBackground = 2;
inline constexpr std::uint64_t kCoupler = 3;
inline constexpr std::uint64_t kConversion = 4;
inline constexpr std::uint64_t kFilter = 5;
inline constexpr std::uint64_t kUspdc = 6;
inline constexpr std::uint64_t kSplit = 7;
inline constexpr std::uint64_t kDetector1 = 8;
inline constexpr std::uint64_t kDetector2 = 9;
inline constexpr std::uint64_t kPulses = 10;
}  // namespace rng_stream

}  // namespace g2sim
