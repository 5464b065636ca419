#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sitewatch {

/// Seeded generator whose output is identical across standard libraries.
/// std::mt19937_64's sequence is fixed by the standard, but the std
/// distributions are not, so the conversions live here.
class DeterministicRng {
public:
    explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; the paired value is discarded so the
    /// stream position depends only on the number of calls.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (stddev == 0.0) return mean;
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Poisson by product of uniforms; fine for the small rates used here.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace sitewatch
