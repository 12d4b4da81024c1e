#include "envcalvi/response_model.hpp"

#include <cmath>
#include <sstream>

namespace envcalvi {

void ResponseEnvSpec::validate_fit() const {
    if (r < 2 || p < 1) throw InputError("ResponseEnvSpec: need r >= 2, p >= 1");
    if (u < 1 || u > r - 1) {
        std::ostringstream os;
        os << "ResponseEnvSpec: fitting requires 1 <= u <= r-1, got u=" << u << ", r=" << r;
        throw InputError(os.str());
    }
}

void ResponseEnvSpec::validate_loglik() const {
    if (r < 2 || p < 1) throw InputError("ResponseEnvSpec: need r >= 2, p >= 1");
    if (u < 0 || u > r) throw InputError("ResponseEnvSpec: need 0 <= u <= r");
}

ResponsePriors ResponsePriors::vague(const ResponseEnvSpec& spec) {
    ResponsePriors pr;
    pr.psi1 = 1e-6;
    pr.nu1 = static_cast<double>(spec.u);
    pr.psi0 = 1e-6;
    pr.nu0 = static_cast<double>(spec.r - spec.u);
    pr.B0 = Matrix::Zero(spec.r, spec.p);
    pr.M = 1e-6 * Matrix::Identity(spec.p, spec.p);
    pr.A0 = Matrix::Zero(spec.r - spec.u, spec.u);
    pr.U0A = 1e2 * Matrix::Identity(spec.r - spec.u, spec.r - spec.u);
    pr.V0A = 1e2 * Matrix::Identity(spec.u, spec.u);
    return pr;
}

void ResponsePriors::validate(const ResponseEnvSpec& spec) const {
    const Index r = spec.r, p = spec.p, u = spec.u;
    if (psi1 <= 0 || psi0 <= 0) throw InputError("ResponsePriors: scales must be positive");
    if (nu1 <= u - 1) throw InputError("ResponsePriors: nu1 must exceed u-1");
    if (nu0 <= r - u - 1) throw InputError("ResponsePriors: nu0 must exceed r-u-1");
    if (B0.rows() != r || B0.cols() != p) throw InputError("ResponsePriors: B0 must be r x p");
    if (M.rows() != p || M.cols() != p || !is_spd(M)) {
        throw InputError("ResponsePriors: M must be p x p SPD");
    }
    if (A0.rows() != r - u || A0.cols() != u) throw InputError("ResponsePriors: A0 must be (r-u) x u");
    if (U0A.rows() != r - u || !is_spd(U0A)) throw InputError("ResponsePriors: U0A must be SPD");
    if (V0A.rows() != u || !is_spd(V0A)) throw InputError("ResponsePriors: V0A must be SPD");
}

Dataset::Dataset(Matrix y, Matrix x) : Y(std::move(y)), X(std::move(x)) {
    if (Y.rows() != X.rows()) throw InputError("Dataset: Y and X row counts differ");
    if (Y.rows() < 2) throw InputError("Dataset: need n >= 2");
    if (!Y.allFinite() || !X.allFinite()) throw InputError("Dataset: non-finite entries");
    xbar = X.colwise().mean();
    Xc = X.rowwise() - xbar.transpose();
    const double defect = (Xc.transpose() * Vector::Ones(X.rows())).cwiseAbs().maxCoeff();
    if (defect > 1e-10 * (1.0 + X.cwiseAbs().maxCoeff()) * X.rows()) {
        throw NumericalError("Dataset: centering defect too large");
    }
}

Dataset Dataset::head(Index m) const {
    return Dataset(Y.topRows(m), X.topRows(m));
}

Matrix make_CA(const Matrix& a) {
    const Index u = a.cols(), ru = a.rows();
    Matrix c(u + ru, u);
    c.topRows(u) = Matrix::Identity(u, u);
    c.bottomRows(ru) = a;
    return c;
}

Matrix make_DA(const Matrix& a) {
    const Index u = a.cols(), ru = a.rows();
    Matrix d(u + ru, ru);
    d.topRows(u) = -a.transpose();
    d.bottomRows(ru) = Matrix::Identity(ru, ru);
    return d;
}

Matrix selector_K(Index r, Index u) {
    Matrix k = Matrix::Zero(r, u);
    k.topRows(u) = Matrix::Identity(u, u);
    return k;
}

Matrix selector_L(Index r, Index u) {
    Matrix l = Matrix::Zero(r, r - u);
    l.bottomRows(r - u) = Matrix::Identity(r - u, r - u);
    return l;
}

GammaPair gamma_from_A(const Matrix& a) {
    const Index u = a.cols(), ru = a.rows();
    const Matrix ca = make_CA(a);
    const Matrix da = make_DA(a);
    const Matrix j = Matrix::Identity(u, u) + a.transpose() * a;
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    return {ca * sym_invsqrt(j), da * sym_invsqrt(j0)};
}

TildeParams reparameterize(const NaturalParams& np, const Vector& xbar) {
    const Matrix& a = np.A;
    const Index u = a.cols(), ru = a.rows();
    const Matrix j = Matrix::Identity(u, u) + a.transpose() * a;
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    const Matrix jh = sym_sqrt(j);
    const Matrix j0h = sym_sqrt(j0);
    TildeParams tp;
    tp.A = a;
    tp.eta_t = jh * np.eta;
    tp.Omega_t = jh * np.Omega * jh;
    tp.Omega0_t = j0h * np.Omega0 * j0h;
    tp.mu_t = np.mu + make_CA(a) * chol_solve(j, Matrix(tp.eta_t * xbar));
    return tp;
}

NaturalParams inverse_reparameterize(const TildeParams& tp, const Vector& xbar) {
    const Matrix& a = tp.A;
    const Index u = a.cols(), ru = a.rows();
    const Matrix j = Matrix::Identity(u, u) + a.transpose() * a;
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    const Matrix jih = sym_invsqrt(j);
    const Matrix j0ih = sym_invsqrt(j0);
    NaturalParams np;
    np.A = a;
    np.eta = jih * tp.eta_t;
    np.Omega = jih * tp.Omega_t * jih;
    np.Omega0 = j0ih * tp.Omega0_t * j0ih;
    np.mu = tp.mu_t - make_CA(a) * chol_solve(j, Matrix(tp.eta_t * xbar));
    return np;
}

Matrix beta_from_tilde(const Matrix& a, const Matrix& eta_t) {
    const Index u = a.cols();
    const Matrix j = Matrix::Identity(u, u) + a.transpose() * a;
    return make_CA(a) * chol_solve(j, eta_t);
}

SuffStats suff_stats(const Dataset& ds, const Vector& mu_q, const Matrix& sigma_q,
                     const ResponsePriors& priors) {
    const Index r = ds.Y.cols();
    const double n = static_cast<double>(ds.n());
    const Matrix ymu = ds.Y.rowwise() - mu_q.transpose();
    const Matrix gram = ymu.transpose() * ymu + n * sigma_q;
    SuffStats ss;
    ss.Gr1 = gram + priors.psi1 * Matrix::Identity(r, r) +
             priors.B0 * priors.M * priors.B0.transpose();
    ss.Gr2 = gram + priors.psi0 * Matrix::Identity(r, r);
    ss.Hmat = ds.Xc.transpose() * ds.Y + priors.M * priors.B0.transpose();
    return ss;
}

double mvn_loglik_rows(const Matrix& y, const Matrix& means, const Matrix& cov) {
    const Index n = y.rows(), d = y.cols();
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("mvn_loglik_rows: covariance not positive definite");
    }
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    double quad = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Vector resid = (y.row(i) - means.row(i)).transpose();
        quad += resid.dot(llt.solve(resid));
    }
    return -0.5 * (n * d * std::log(2.0 * M_PI) + n * logdet + quad);
}

double loglik_at(const NaturalParams& params, const Dataset& ds) {
    const Index r = ds.Y.cols();
    const Index u = params.eta.rows();
    Matrix cov;
    Matrix beta;
    if (u == 0) {
        cov = params.Omega0;
        beta = Matrix::Zero(r, ds.X.cols());
    } else if (u == r) {
        cov = params.Omega;
        beta = gamma_from_A(params.A).Gamma * params.eta; // Gamma is r x r orthogonal
    } else {
        const GammaPair g = gamma_from_A(params.A);
        cov = g.Gamma * params.Omega * g.Gamma.transpose() +
              g.Gamma0 * params.Omega0 * g.Gamma0.transpose();
        beta = g.Gamma * params.eta;
    }
    const Matrix means =
        (ds.X * beta.transpose()).rowwise() + params.mu.transpose();
    return mvn_loglik_rows(ds.Y, means, cov);
}

} // namespace envcalvi
