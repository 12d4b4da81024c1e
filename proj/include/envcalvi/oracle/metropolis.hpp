#ifndef ENVCALVI_ORACLE_METROPOLIS_HPP
#define ENVCALVI_ORACLE_METROPOLIS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "envcalvi/predictor_calvi.hpp"
#include "envcalvi/response_model.hpp"

namespace envcalvi::oracle {

// Reference sampler: block random-walk Metropolis on unconstrained
// coordinates. Step sizes are adapted per block toward the target acceptance
// rate during burn-in (the first half of the chain) and frozen afterwards,
// so the post-burn-in kernel is fixed.

struct MhResult {
    std::vector<Vector> draws;      // post burn-in states
    std::vector<double> acceptance; // per block, measured after burn-in
    bool warning = false;           // any block outside (0.02, 0.8)
};

MhResult block_metropolis(const std::function<double(const Vector&)>& log_target,
                          const Vector& x0, const std::vector<Index>& block_sizes,
                          int iters, std::uint64_t seed, double init_step,
                          double target_accept = 0.25);

// Batch-means Monte Carlo standard error of the mean, entrywise over a
// sequence of equally shaped matrices.
struct ChainSummary {
    Matrix mean;
    Matrix mcse;
};
ChainSummary summarize_chain(const std::vector<Matrix>& draws, int batches = 50);

struct ResponseMhResult {
    std::vector<Matrix> beta_draws; // r x p per kept draw
    ChainSummary beta;
    std::vector<double> acceptance;
    bool warning = false;
};

// Targets the exact unnormalized posterior of the natural-coordinate
// response model; covariance factors move in log-Cholesky coordinates.
ResponseMhResult rw_metropolis_response(const Dataset& ds, const ResponseEnvSpec& spec,
                                        const ResponsePriors& priors, int iters,
                                        std::uint64_t seed, double step = 0.1);

struct PredictorMhResult {
    std::vector<Matrix> beta_draws;
    ChainSummary beta;
    std::vector<double> acceptance;
    bool warning = false;
};

PredictorMhResult rw_metropolis_predictor(const Dataset& ds, const PredictorEnvSpec& spec,
                                          const PredictorPriors& priors, int iters,
                                          std::uint64_t seed, double step = 0.1);

// Log-Cholesky helpers shared with the tests.
Matrix logchol_to_spd(const Vector& coords, Index d);
Vector spd_to_logchol(const Matrix& s);
double logchol_jacobian(const Vector& coords, Index d);

} // namespace envcalvi::oracle

#endif
