#ifndef ENVCALVI_MODELSELECT_HPP
#define ENVCALVI_MODELSELECT_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "envcalvi/response_cavi.hpp"

namespace envcalvi {

double bic(double loglik, Index d_M, double n);

// Effective parameter counts of the candidate models.
Index response_param_count(Index r, Index p, Index u);
Index predictor_param_count(Index r, Index p, Index m);

struct DimensionPosterior {
    std::vector<int> dims;
    std::vector<double> logliks;
    std::vector<double> bics;
    std::vector<double> probs;

    int mode() const;
};

// Posterior over candidate dimensions via exp(-BIC/2) times the prior,
// normalized with log-sum-exp. An empty prior means uniform.
DimensionPosterior dim_posterior(const std::vector<int>& dims,
                                 const std::vector<double>& logliks,
                                 const std::vector<double>& bics,
                                 const std::vector<double>& prior = {});

Matrix bma_beta(const std::vector<Matrix>& per_dim_betas, const std::vector<double>& probs);

double mse_beta(const Matrix& beta_hat, const Matrix& beta_star);

struct BootstrapResult {
    double rmse = 0.0;
    std::vector<double> per_replicate; // squared Frobenius deviations / (r p)
    int failures = 0;
};

// Residual bootstrap around a converged fit: resample rows of the fitted
// residuals with replacement, rebuild responses, refit at the same u.
// Replicate b uses the stream seeded with seed ^ b, so results do not depend
// on scheduling.
BootstrapResult residual_bootstrap(const Dataset& ds, const ResponseEnvSpec& spec,
                                   const ResponsePriors& priors, const FitReport& fit_rep,
                                   int B, std::uint64_t seed, const FitOptions& opts = {},
                                   int threads = 1);

// Likelihood evaluation for the boundary dimensions of the response model,
// where no variational fit exists: u = 0 uses the mean/covariance MLE with
// beta = 0, u = r the full multivariate regression MLE.
double response_boundary_loglik(const Dataset& ds, Index u);

struct ResponseSelection {
    DimensionPosterior posterior;
    std::vector<Matrix> betas; // per candidate dimension
    Matrix beta_bma;
    std::vector<int> iterations;
    std::vector<bool> converged;
};

// Fit every candidate dimension (variationally for 1..r-1, MLE plug-in at the
// boundaries) and combine with BIC weights. The prior factory builds the
// u-dependent prior for each candidate; a null factory means vague priors.
using PriorFactory = std::function<ResponsePriors(const ResponseEnvSpec&)>;
ResponseSelection select_response(const Dataset& ds, const ResponseEnvSpec& base,
                                  const PriorFactory& make_priors, Index u_min, Index u_max,
                                  const std::vector<double>& prior_weights,
                                  const FitOptions& opts, int threads);

} // namespace envcalvi

#endif
