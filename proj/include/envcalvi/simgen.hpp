#ifndef ENVCALVI_SIMGEN_HPP
#define ENVCALVI_SIMGEN_HPP

#include <cstdint>

#include "envcalvi/predictor_calvi.hpp"
#include "envcalvi/response_model.hpp"
#include "envcalvi/rng.hpp"

namespace envcalvi {

// Synthetic-data generators. All draws come from the counter-based stream in
// Rng, so outputs are bit-identical for a given seed.

struct ResponseGenRanges {
    double mu_lo = 0.0, mu_hi = 10.0;
    double eta_lo = 0.0, eta_hi = 10.0;
    double a_lo = -1.0, a_hi = 1.0;
    double omega_lo = 0.0, omega_hi = 1.0;   // diagonal of the material factor
    double omega0_lo = 5.0, omega0_hi = 10.0; // diagonal of the immaterial factor
    enum class XDist { Normal, Uniform };
    XDist x_dist = XDist::Normal; // law of the predictors
};

struct ResponseTruth {
    NaturalParams params;
    Matrix beta; // r x p
};

std::pair<Dataset, ResponseTruth> gen_response(const ResponseEnvSpec& spec, Index n,
                                               std::uint64_t seed,
                                               const ResponseGenRanges& ranges = {});

struct PredictorGenRanges {
    double mu_lo = -10.0, mu_hi = 10.0;
    double eta_lo = 5.0, eta_hi = 10.0;
    double a_lo = 0.0, a_hi = 5.0;
    // Scale/df knobs of the covariance draws; defaults mirror the design
    // Omega1 ~ 5 IW_m(m+2, 5I), Omega0 ~ IW_{p-m}(p-m+2, 0.1I),
    // SigmaYX ~ IW_r(r+1, 5I).
    double omega1_mult = 5.0, omega1_scale = 5.0;
    double omega0_scale = 0.1;
    double sigma_scale = 5.0;
};

struct PredictorTruth {
    Vector mu_x;   // p
    Vector mu_y;   // r
    Matrix eta;    // m x r, natural coordinates
    Matrix A;      // (p-m) x m
    Matrix omega1; // m x m
    Matrix omega0; // (p-m) x (p-m)
    Matrix sigma;  // r x r
    Matrix beta;   // r x p
};

std::pair<Dataset, PredictorTruth> gen_predictor(const PredictorEnvSpec& spec, Index n,
                                                 std::uint64_t seed,
                                                 const PredictorGenRanges& ranges = {});

// Bartlett-decomposition sampler. df > d - 1 with scale d x d.
Matrix sample_inverse_wishart(double df, const Matrix& scale, Rng& rng);
Matrix sample_inverse_wishart(double df, const Matrix& scale, std::uint64_t seed);
Matrix sample_wishart(double df, const Matrix& scale, Rng& rng);

} // namespace envcalvi

#endif
