#ifndef ENVCALVI_RNG_HPP
#define ENVCALVI_RNG_HPP

#include <cstdint>

#include "envcalvi/linalg.hpp"

namespace envcalvi {

// SplitMix64 stream: a counter-based 64-bit generator. Output i is a fixed
// mix of seed + i * 0x9E3779B97F4A7C15, so sequences are reproducible
// bit-for-bit for a given seed regardless of platform or thread count.
// Normal variates use Box-Muller, gamma variates Marsaglia-Tsang, so the
// full draw sequence is pinned by this one primitive.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    // Gamma(shape, 1), shape > 0.
    double gamma(double shape);
    double chisq(double df);

    Vector normal_vector(Index n);
    // mean + chol_lower * z with z standard normal.
    Vector normal_from_chol(const Vector& mean, const Matrix& chol_lower);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace envcalvi

#endif
