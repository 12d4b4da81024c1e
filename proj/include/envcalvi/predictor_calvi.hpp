#ifndef ENVCALVI_PREDICTOR_CALVI_HPP
#define ENVCALVI_PREDICTOR_CALVI_HPP

#include <vector>

#include "envcalvi/response_cavi.hpp"
#include "envcalvi/response_laplace.hpp"
#include "envcalvi/response_model.hpp"

namespace envcalvi {

// Predictor envelope regression: the envelope lives in predictor space.
// X is Gaussian with covariance Gamma Omega1 Gamma' + Gamma0 Omega0 Gamma0'
// and Y regresses on the material part of X - mu_X with coefficient
// beta = eta_t' C_A' in the tilde coordinates.

struct PredictorEnvSpec {
    Index r = 0; // response dimension
    Index p = 0; // predictor dimension
    Index m = 0; // envelope dimension
    void validate_fit() const;
};

struct PredictorPriors {
    Matrix PsiY;          // r x r SPD scale of the conditional covariance prior
    double nuY = 0.0;     // > r-1
    double psiX1 = 1e-6;  // isotropic material scale
    double nuX1 = 0.0;    // > m-1
    double psiX0 = 1e-6;  // isotropic immaterial scale
    double nuX0 = 0.0;    // > p-m-1
    double psi_eta0 = 1e6; // scalar multiplier of the coefficient prior row covariance
    Matrix B0;            // p x r coefficient prior anchor
    Matrix A0;            // (p-m) x m
    Matrix U0A;           // (p-m) x (p-m) SPD
    Matrix V0A;           // m x m SPD

    static PredictorPriors vague(const PredictorEnvSpec& spec);
    void validate(const PredictorEnvSpec& spec) const;
};

struct PredictorVarState {
    Vector muX_q;    // p
    Matrix SigmaX_q; // p x p SPD
    Vector muY_q;    // r
    Matrix SigmaY_q; // r x r SPD
    Matrix eta_q;    // m x r
    Matrix Sigma_eta; // mr x mr SPD, covariance of vec(eta_t)
    Matrix PsiY_q;   // r x r SPD
    double nuY_q = 0;
    Matrix PsiX1_q;  // m x m SPD
    double nuX1_q = 0;
    Matrix PsiX0_q;  // (p-m) x (p-m) SPD
    double nuX0_q = 0;
    LaplaceFactor laplace; // over vec(A), (p-m)m
};

// Coefficients of the A-coordinate objective, assembled from the variational
// moments, data and priors.
struct PredictorMoments {
    Index p = 0;
    Index m = 0;
    double kappaX = 0.0; // 2n + nuX1 + nuX0
    Matrix E1;   // m x m: eta_q WY eta_q' + ktr(WY, cov of vec(eta_t'))
    Matrix PG;   // (p-m) x (p-m): L' GpX L
    Matrix WX1;  // m x m expected material precision
    Matrix P4;   // (p-m) x (p-m): L' S4 L
    Matrix WX0;  // (p-m) x (p-m) expected immaterial precision
    Matrix Q5;   // m x m: K' S5 K
    Matrix RG;   // m x (p-m): K' GpX L
    Matrix R4;   // m x (p-m): K' S4 L
    Matrix R5;   // m x (p-m): K' S5 L
    Matrix Cdat; // m x (p-m): (eta_q WY Ymu'Xmu + psi0^-1 WX1 eta_q WY B0') L
    Matrix A0;
    Matrix U0inv;
    Matrix V0inv;

    static PredictorMoments zeroed(Index p, Index m, double kappaX);
};

PredictorMoments make_predictor_moments(const PredictorVarState& st, const Dataset& ds,
                                        const PredictorEnvSpec& spec,
                                        const PredictorPriors& priors);

double ftildeX(const Matrix& a, const PredictorMoments& pm);
Matrix grad_ftildeX(const Matrix& a, const PredictorMoments& pm);
Matrix hess_ftildeX(const Matrix& a, const PredictorMoments& pm);
double ftildeX_const_terms(const PredictorVarState& st, const Dataset& ds,
                           const PredictorEnvSpec& spec, const PredictorPriors& priors);

LaplaceFactor update_vecA(const PredictorVarState& st, const Dataset& ds,
                          const PredictorEnvSpec& spec, const PredictorPriors& priors,
                          const NewtonOptions& newton = {});

void update_SigmaYX(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);
void update_OmegaX1(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);
void update_OmegaX0(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);
void update_eta_vec(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);
void update_muX(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);
void update_muY(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors);

double elbo_pred(const PredictorVarState& st, const Dataset& ds, const PredictorEnvSpec& spec,
                 const PredictorPriors& priors);

struct PredictorFitReport {
    PredictorVarState state;
    std::vector<double> elbo_trace;
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0.0;
    Matrix beta_hat; // r x p, eta_q' C_A'
    Vector mu_hat;   // r, regression intercept muY - beta muX
};

PredictorVarState initialize_predictor_state(const Dataset& ds, const PredictorEnvSpec& spec,
                                             const PredictorPriors& priors,
                                             FitOptions::Init init);
void sweep_pred(PredictorVarState& st, const Dataset& ds, const PredictorEnvSpec& spec,
                const PredictorPriors& priors, const NewtonOptions& newton = {});
double predictor_state_drift(const PredictorVarState& before, const PredictorVarState& after);

PredictorFitReport fit_pred(const Dataset& ds, const PredictorEnvSpec& spec,
                            const PredictorPriors& priors, const FitOptions& opts = {});

Matrix predictor_state_beta(const PredictorVarState& st);

// Joint log likelihood of (X, Y) at the variational means, for BIC.
double predictor_loglik_at_means(const PredictorVarState& st, const Dataset& ds,
                                 const PredictorEnvSpec& spec);

} // namespace envcalvi

#endif
