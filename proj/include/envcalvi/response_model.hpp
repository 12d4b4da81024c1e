#ifndef ENVCALVI_RESPONSE_MODEL_HPP
#define ENVCALVI_RESPONSE_MODEL_HPP

#include "envcalvi/linalg.hpp"

namespace envcalvi {

// Response envelope regression: an r-dimensional response regressed on a
// p-dimensional predictor, with the regression signal confined to a
// u-dimensional subspace of the response space. The subspace is identified
// by an unconstrained (r-u) x u matrix A through
//   Gamma(A)  = C_A (C_A' C_A)^{-1/2},   C_A = [I_u; A],
//   Gamma0(A) = D_A (D_A' D_A)^{-1/2},   D_A = [-A'; I_{r-u}].

struct ResponseEnvSpec {
    Index r = 0; // response dimension
    Index p = 0; // predictor dimension
    Index u = 0; // envelope dimension

    // 1 <= u <= r-1 required for variational fitting.
    void validate_fit() const;
    // u in {0, r} admitted for likelihood/BIC evaluation only.
    void validate_loglik() const;
};

struct ResponsePriors {
    double psi1 = 1e-6; // isotropic scale of the material inverse-Wishart prior
    double nu1 = 0.0;   // its degrees of freedom, > u-1
    double psi0 = 1e-6; // isotropic scale of the immaterial inverse-Wishart prior
    double nu0 = 0.0;   // its degrees of freedom, > r-u-1
    Matrix B0;          // r x p coefficient prior mean
    Matrix M;           // p x p SPD column precision of the coefficient prior
    Matrix A0;          // (r-u) x u prior mean of A
    Matrix U0A;         // (r-u) x (r-u) SPD row covariance of the A prior
    Matrix V0A;         // u x u SPD column covariance of the A prior

    static ResponsePriors vague(const ResponseEnvSpec& spec);
    void validate(const ResponseEnvSpec& spec) const;
};

struct Dataset {
    Matrix Y;    // n x r
    Matrix X;    // n x p
    Vector xbar; // column means of X
    Matrix Xc;   // centered design, Xc' 1 = 0

    Dataset(Matrix y, Matrix x);
    Index n() const { return Y.rows(); }

    Dataset head(Index m) const; // first m observations
};

struct NaturalParams {
    Vector mu;     // r
    Matrix eta;    // u x p
    Matrix Omega;  // u x u SPD
    Matrix Omega0; // (r-u) x (r-u) SPD
    Matrix A;      // (r-u) x u
};

struct TildeParams {
    Vector mu_t;     // r
    Matrix eta_t;    // u x p
    Matrix Omega_t;  // u x u SPD
    Matrix Omega0_t; // (r-u) x (r-u) SPD
    Matrix A;        // (r-u) x u
};

Matrix make_CA(const Matrix& a);           // [I; A]
Matrix make_DA(const Matrix& a);           // [-A'; I]
Matrix selector_K(Index r, Index u);       // [I_u; 0]
Matrix selector_L(Index r, Index u);       // [0; I_{r-u}]

struct GammaPair {
    Matrix Gamma;  // r x u, orthonormal columns
    Matrix Gamma0; // r x (r-u), orthonormal columns, Gamma' Gamma0 = 0
};
GammaPair gamma_from_A(const Matrix& a);

// Map between the natural coordinates and the tilde coordinates in which the
// inverse square-root factors cancel out of the likelihood:
//   eta_t    = J^{1/2} eta,             J  = I + A'A
//   Omega_t  = J^{1/2} Omega J^{1/2}
//   Omega0_t = J0^{1/2} Omega0 J0^{1/2}, J0 = I + AA'
//   mu_t     = mu + C_A J^{-1} eta_t xbar
TildeParams reparameterize(const NaturalParams& np, const Vector& xbar);
NaturalParams inverse_reparameterize(const TildeParams& tp, const Vector& xbar);

// beta = C_A J(A)^{-1} eta_t  (equals Gamma(A) eta in natural coordinates)
Matrix beta_from_tilde(const Matrix& a, const Matrix& eta_t);

struct SuffStats {
    Matrix Gr1;  // r x r
    Matrix Gr2;  // r x r
    Matrix Hmat; // p x r
};
// Gr1 = (Y - 1 mu_q')'(Y - 1 mu_q') + n Sigma_q + psi1 I + B0 M B0'
// Gr2 = (Y - 1 mu_q')'(Y - 1 mu_q') + n Sigma_q + psi0 I
// Hmat = Xc' Y + M B0'
SuffStats suff_stats(const Dataset& ds, const Vector& mu_q, const Matrix& sigma_q,
                     const ResponsePriors& priors);

// Exact Gaussian log likelihood of the data at the given natural parameters.
// u = 0 is read as beta = 0 with Sigma = Omega0 (r x r); u = r as Sigma = Omega.
double loglik_at(const NaturalParams& params, const Dataset& ds);

// Generic multivariate normal evaluation helper shared with the oracles.
double mvn_loglik_rows(const Matrix& y, const Matrix& means, const Matrix& cov);

} // namespace envcalvi

#endif
