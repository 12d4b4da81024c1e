#ifndef ENVCALVI_RESPONSE_CAVI_HPP
#define ENVCALVI_RESPONSE_CAVI_HPP

#include <vector>

#include "envcalvi/response_laplace.hpp"
#include "envcalvi/response_model.hpp"

namespace envcalvi {

// Variational factors of the response model: Gaussian for the centered
// intercept, matrix-normal for the coefficient block, inverse-Wishart for
// the two covariance factors, and a Gaussian Laplace factor for vec(A).
struct ResponseVarState {
    Vector mu_q;      // r
    Matrix Sigma_q;   // r x r SPD
    Matrix eta_q;     // u x p
    Matrix U_eta;     // u x u SPD
    Matrix V_eta;     // p x p SPD
    Matrix Psi1_q;    // u x u SPD
    double nu1_q = 0; // n + nu1 + p
    Matrix Psi0_q;    // (r-u) x (r-u) SPD
    double nu0_q = 0; // n + nu0
    LaplaceFactor laplace;
};

struct FitOptions {
    double tol = 1e-6;
    int max_iter = 10000;
    enum class Init { OlsPilot, Prior };
    Init init = Init::OlsPilot;
    NewtonOptions newton;
    // After the relative-improvement rule first fires, keep sweeping up to
    // this many more iterations while the state still moves by more than
    // 100 tol; weakly identified overfitted dimensions sit on a posterior
    // ridge and never reach the fixed-point floor.
    int polish_sweeps = 50;
};

struct FitReport {
    ResponseVarState state;
    std::vector<double> elbo_trace; // one entry per completed sweep
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0.0;
    Matrix beta_hat; // r x p
    Vector mu_hat;   // r
};

// Relative-change stopping rule: |curr - prev| < tol * |curr|.
bool stop_rule(double prev, double curr, double tol);

ResponseVarState initialize_response_state(const Dataset& ds, const ResponseEnvSpec& spec,
                                           const ResponsePriors& priors,
                                           FitOptions::Init init);

MomentBundle make_moment_bundle(const ResponseVarState& st, const Dataset& ds,
                                const ResponseEnvSpec& spec, const ResponsePriors& priors);

// Conjugate coordinate updates. Each uses the freshest values of the other
// factors held in the state.
void update_eta(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors);
void update_omega(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors);
void update_omega0(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors);
void update_mu(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors);

// One full coordinate sweep: Laplace update of vec(A), then the conjugate
// updates in order.
void sweep(ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
           const ResponsePriors& priors, const NewtonOptions& newton = {});

// Variational bound used for convergence monitoring, with all computable
// constants kept so that only an unknown marginal-likelihood shift separates
// it from the true bound.
double elbo(const ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
            const ResponsePriors& priors, const MomentBundle& mb);
double elbo(const ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
            const ResponsePriors& priors);

FitReport fit(const Dataset& ds, const ResponseEnvSpec& spec, const ResponsePriors& priors,
              const FitOptions& opts = {});

// Largest relative Frobenius change across all variational parameters.
double state_drift(const ResponseVarState& before, const ResponseVarState& after);

// Point estimates implied by a state.
Matrix state_beta(const ResponseVarState& st);
Vector state_mu_hat(const ResponseVarState& st, const Dataset& ds);

// Natural-coordinate parameters at the variational means (inverse-Wishart
// means for the covariance factors), used for likelihood evaluation.
NaturalParams variational_mean_params(const ResponseVarState& st, const Dataset& ds,
                                      const ResponseEnvSpec& spec);

} // namespace envcalvi

#endif
