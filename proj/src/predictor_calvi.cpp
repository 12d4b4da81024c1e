#include "envcalvi/predictor_calvi.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "envcalvi/special.hpp"

namespace envcalvi {

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix inv_spd(const Matrix& m, const char* who) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(who) + ": matrix not positive definite");
    }
    Matrix out = llt.solve(Matrix::Identity(m.rows(), m.cols()));
    return 0.5 * (out + out.transpose());
}

void require_spd(const Matrix& m, const char* who) {
    if (!is_spd(m)) {
        throw NumericalError(std::string(who) + ": updated scale matrix is not positive definite");
    }
}

Matrix regularized_cov(const Matrix& y) {
    const double n = static_cast<double>(y.rows());
    const Matrix yc = y.rowwise() - y.colwise().mean();
    Matrix s = yc.transpose() * yc / n;
    const double ridge = std::max(1e-12 * s.trace() / y.cols(), 1e-12);
    s += ridge * Matrix::Identity(y.cols(), y.cols());
    return s;
}

// Quantities every update needs, recomputed from the current state.
struct Work {
    double n;
    Matrix Xmu, Ymu; // centered at the variational means
    Matrix GpX, GpY;
    Matrix WY, WX1, WX0;
    Matrix sigma_eta_t; // covariance of vec(eta_t')
};

Work make_work(const PredictorVarState& st, const Dataset& ds) {
    Work w;
    w.n = static_cast<double>(ds.n());
    w.Xmu = ds.X.rowwise() - st.muX_q.transpose();
    w.Ymu = ds.Y.rowwise() - st.muY_q.transpose();
    w.GpX = w.Xmu.transpose() * w.Xmu + w.n * st.SigmaX_q;
    w.GpY = w.Ymu.transpose() * w.Ymu + w.n * st.SigmaY_q;
    w.WY = st.nuY_q * inv_spd(st.PsiY_q, "predictor WY");
    w.WX1 = st.nuX1_q * inv_spd(st.PsiX1_q, "predictor WX1");
    w.WX0 = st.nuX0_q * inv_spd(st.PsiX0_q, "predictor WX0");
    const Commutation k(st.eta_q.rows(), st.eta_q.cols());
    w.sigma_eta_t = k.conjugate(st.Sigma_eta);
    return w;
}

void check_dims(const Matrix& a, const PredictorMoments& pm) {
    if (a.rows() != pm.p - pm.m || a.cols() != pm.m) {
        throw InputError("ftildeX: A has wrong dimensions for the bundle");
    }
}

double iw_entropy(double logdet_psi, double nu, Index d) {
    const double log2 = std::log(2.0);
    return -0.5 * nu * logdet_psi + 0.5 * nu * d * std::log(2.0 * M_E) +
           lmultigamma(static_cast<int>(d), 0.5 * nu) -
           0.5 * (nu + d + 1) *
               (multidigamma(static_cast<int>(d), 0.5 * nu) + d * log2 - logdet_psi);
}

} // namespace

void PredictorEnvSpec::validate_fit() const {
    if (p < 2 || r < 1) throw InputError("PredictorEnvSpec: need p >= 2, r >= 1");
    if (m < 1 || m > p - 1) {
        std::ostringstream os;
        os << "PredictorEnvSpec: fitting requires 1 <= m <= p-1, got m=" << m << ", p=" << p;
        throw InputError(os.str());
    }
}

PredictorPriors PredictorPriors::vague(const PredictorEnvSpec& spec) {
    PredictorPriors pr;
    pr.PsiY = 1e-6 * Matrix::Identity(spec.r, spec.r);
    pr.nuY = static_cast<double>(spec.r);
    pr.psiX1 = 1e-6;
    pr.nuX1 = static_cast<double>(spec.m);
    pr.psiX0 = 1e-6;
    pr.nuX0 = static_cast<double>(spec.p - spec.m);
    pr.psi_eta0 = 1e6;
    pr.B0 = Matrix::Zero(spec.p, spec.r);
    pr.A0 = Matrix::Zero(spec.p - spec.m, spec.m);
    pr.U0A = 1e2 * Matrix::Identity(spec.p - spec.m, spec.p - spec.m);
    pr.V0A = 1e2 * Matrix::Identity(spec.m, spec.m);
    return pr;
}

void PredictorPriors::validate(const PredictorEnvSpec& spec) const {
    const Index r = spec.r, p = spec.p, m = spec.m;
    if (PsiY.rows() != r || !is_spd(PsiY)) throw InputError("PredictorPriors: PsiY must be SPD");
    if (nuY <= r - 1) throw InputError("PredictorPriors: nuY must exceed r-1");
    if (psiX1 <= 0 || psiX0 <= 0 || psi_eta0 <= 0) {
        throw InputError("PredictorPriors: scales must be positive");
    }
    if (nuX1 <= m - 1) throw InputError("PredictorPriors: nuX1 must exceed m-1");
    if (nuX0 <= p - m - 1) throw InputError("PredictorPriors: nuX0 must exceed p-m-1");
    if (B0.rows() != p || B0.cols() != r) throw InputError("PredictorPriors: B0 must be p x r");
    if (A0.rows() != p - m || A0.cols() != m) throw InputError("PredictorPriors: A0 must be (p-m) x m");
    if (U0A.rows() != p - m || !is_spd(U0A)) throw InputError("PredictorPriors: U0A must be SPD");
    if (V0A.rows() != m || !is_spd(V0A)) throw InputError("PredictorPriors: V0A must be SPD");
}

PredictorMoments PredictorMoments::zeroed(Index p, Index m, double kappaX) {
    PredictorMoments pm;
    pm.p = p;
    pm.m = m;
    pm.kappaX = kappaX;
    pm.E1 = Matrix::Zero(m, m);
    pm.PG = Matrix::Zero(p - m, p - m);
    pm.WX1 = Matrix::Zero(m, m);
    pm.P4 = Matrix::Zero(p - m, p - m);
    pm.WX0 = Matrix::Zero(p - m, p - m);
    pm.Q5 = Matrix::Zero(m, m);
    pm.RG = Matrix::Zero(m, p - m);
    pm.R4 = Matrix::Zero(m, p - m);
    pm.R5 = Matrix::Zero(m, p - m);
    pm.Cdat = Matrix::Zero(m, p - m);
    pm.A0 = Matrix::Zero(p - m, m);
    pm.U0inv = Matrix::Zero(p - m, p - m);
    pm.V0inv = Matrix::Zero(m, m);
    return pm;
}

PredictorMoments make_predictor_moments(const PredictorVarState& st, const Dataset& ds,
                                        const PredictorEnvSpec& spec,
                                        const PredictorPriors& priors) {
    const Index p = spec.p, m = spec.m;
    const Work w = make_work(st, ds);
    const Matrix s4 = w.GpX + priors.B0 * w.WY * priors.B0.transpose() / priors.psi_eta0 +
                      priors.psiX1 * Matrix::Identity(p, p);
    const Matrix s5 = w.GpX + priors.psiX0 * Matrix::Identity(p, p);

    PredictorMoments pm;
    pm.p = p;
    pm.m = m;
    pm.kappaX = 2.0 * w.n + priors.nuX1 + priors.nuX0;
    pm.E1 = symmetrized(st.eta_q * w.WY * st.eta_q.transpose() + ktr(w.WY, w.sigma_eta_t));
    pm.PG = w.GpX.bottomRightCorner(p - m, p - m);
    pm.WX1 = w.WX1;
    pm.P4 = s4.bottomRightCorner(p - m, p - m);
    pm.WX0 = w.WX0;
    pm.Q5 = s5.topLeftCorner(m, m);
    pm.RG = w.GpX.topRightCorner(m, p - m);
    pm.R4 = s4.topRightCorner(m, p - m);
    pm.R5 = s5.topRightCorner(m, p - m);
    const Matrix cdat_full = st.eta_q * w.WY * w.Ymu.transpose() * w.Xmu +
                             w.WX1 * st.eta_q * w.WY * priors.B0.transpose() / priors.psi_eta0;
    pm.Cdat = cdat_full.rightCols(p - m);
    pm.A0 = priors.A0;
    pm.U0inv = inv_spd(priors.U0A, "U0A");
    pm.V0inv = inv_spd(priors.V0A, "V0A");
    return pm;
}

double ftildeX(const Matrix& a, const PredictorMoments& pm) {
    check_dims(a, pm);
    const Index pm_dim = pm.p - pm.m;
    const Matrix j0 = Matrix::Identity(pm_dim, pm_dim) + a * a.transpose();
    const Matrix adiff = a - pm.A0;
    double val = 0.5 * pm.kappaX * chol_logdet(j0);
    val -= 0.5 * (pm.E1 * a.transpose() * pm.PG * a).trace();
    val -= 0.5 * (pm.WX1 * a.transpose() * pm.P4 * a).trace();
    val -= 0.5 * (pm.Q5 * a.transpose() * pm.WX0 * a).trace();
    val -= (pm.E1 * pm.RG * a).trace();
    val -= (pm.WX1 * pm.R4 * a).trace();
    val += (pm.R5 * pm.WX0 * a).trace();
    val += (pm.Cdat * a).trace();
    val -= 0.5 * (pm.V0inv * adiff.transpose() * pm.U0inv * adiff).trace();
    return val;
}

Matrix grad_ftildeX(const Matrix& a, const PredictorMoments& pm) {
    check_dims(a, pm);
    const Index pm_dim = pm.p - pm.m;
    const Matrix j0 = Matrix::Identity(pm_dim, pm_dim) + a * a.transpose();
    Matrix g = pm.kappaX * chol_solve(j0, a);
    g -= pm.PG * a * pm.E1;
    g -= pm.P4 * a * pm.WX1;
    g -= pm.WX0 * a * pm.Q5;
    g -= pm.RG.transpose() * pm.E1;
    g -= pm.R4.transpose() * pm.WX1;
    g += pm.WX0 * pm.R5.transpose();
    g += pm.Cdat.transpose();
    g -= pm.U0inv * (a - pm.A0) * pm.V0inv;
    return g;
}

Matrix hess_ftildeX(const Matrix& a, const PredictorMoments& pm) {
    check_dims(a, pm);
    const Index pm_dim = pm.p - pm.m, m = pm.m;
    const Matrix j0 = Matrix::Identity(pm_dim, pm_dim) + a * a.transpose();
    const Matrix j0inv_a = chol_solve(j0, a);
    const Matrix j0inv = chol_solve(j0, Matrix(Matrix::Identity(pm_dim, pm_dim)));
    Matrix h = pm.kappaX *
               kron(Matrix::Identity(m, m) - a.transpose() * j0inv_a, j0inv);
    const Commutation k_pm_m(pm_dim, m);
    h -= pm.kappaX * k_pm_m.right_multiply(kron(j0inv_a.transpose(), j0inv_a));
    h -= kron(pm.E1, pm.PG);
    h -= kron(pm.WX1, pm.P4);
    h -= kron(pm.Q5, pm.WX0);
    h -= kron(pm.V0inv, pm.U0inv);
    return 0.5 * (h + h.transpose());
}

double ftildeX_const_terms(const PredictorVarState& st, const Dataset& ds,
                           const PredictorEnvSpec& spec, const PredictorPriors& priors) {
    const Index p = spec.p, m = spec.m;
    const Work w = make_work(st, ds);
    const Matrix s4 = w.GpX + priors.B0 * w.WY * priors.B0.transpose() / priors.psi_eta0 +
                      priors.psiX1 * Matrix::Identity(p, p);
    const Matrix s5 = w.GpX + priors.psiX0 * Matrix::Identity(p, p);
    const Matrix e1 = symmetrized(st.eta_q * w.WY * st.eta_q.transpose() + ktr(w.WY, w.sigma_eta_t));
    const Matrix u0inv = inv_spd(priors.U0A, "U0A");
    const Matrix v0inv = inv_spd(priors.V0A, "V0A");
    double val = -0.5 * (s4.topLeftCorner(m, m) * w.WX1).trace();
    val -= 0.5 * (e1 * w.GpX.topLeftCorner(m, m)).trace();
    val -= 0.5 * (s5.bottomRightCorner(p - m, p - m) * w.WX0).trace();
    const Matrix cdat_full = st.eta_q * w.WY * w.Ymu.transpose() * w.Xmu +
                             w.WX1 * st.eta_q * w.WY * priors.B0.transpose() / priors.psi_eta0;
    val += cdat_full.leftCols(m).trace();
    val -= 0.5 * (v0inv * priors.A0.transpose() * u0inv * priors.A0).trace();
    return val;
}

LaplaceFactor update_vecA(const PredictorVarState& st, const Dataset& ds,
                          const PredictorEnvSpec& spec, const PredictorPriors& priors,
                          const NewtonOptions& newton) {
    const PredictorMoments pm = make_predictor_moments(st, ds, spec, priors);
    const Matrix a_hat = newton_maximize(
        st.laplace.A_hat, [&](const Matrix& a) { return ftildeX(a, pm); },
        [&](const Matrix& a) { return grad_ftildeX(a, pm); },
        [&](const Matrix& a) { return hess_ftildeX(a, pm); }, newton);
    return laplace_from_hessian(a_hat, hess_ftildeX(a_hat, pm));
}

void update_SigmaYX(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    const Index p = ds.X.cols(), m = st.eta_q.rows();
    const Work w = make_work(st, ds);
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix psiX1inv = inv_spd(st.PsiX1_q, "PsiX1_q");
    const Matrix s3 = symmetrized(ca.transpose() * w.GpX * ca +
                                  ktr(w.GpX.bottomRightCorner(p - m, p - m), st.laplace.cov));
    const Matrix cross = w.Ymu.transpose() * w.Xmu * ca * st.eta_q;
    const Matrix b0l = priors.B0.bottomRows(p - m); // L' B0
    const Matrix anchor = ca.transpose() * priors.B0 - st.eta_q;
    Matrix psi = w.GpY - cross - cross.transpose();
    psi += st.eta_q.transpose() * s3 * st.eta_q + ktr(s3, st.Sigma_eta);
    psi += priors.PsiY;
    psi += (st.nuX1_q / priors.psi_eta0) *
           (anchor.transpose() * psiX1inv * anchor +
            b0l.transpose() * ktr(psiX1inv, st.laplace.cov_transposed()) * b0l +
            ktr(psiX1inv, st.Sigma_eta));
    psi = symmetrized(psi);
    require_spd(psi, "update_SigmaYX");
    st.PsiY_q = psi;
    st.nuY_q = w.n + m + priors.nuY;
}

void update_OmegaX1(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    const Index p = ds.X.cols(), m = st.eta_q.rows();
    const Work w = make_work(st, ds);
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix s4 = w.GpX + priors.B0 * w.WY * priors.B0.transpose() / priors.psi_eta0 +
                      priors.psiX1 * Matrix::Identity(p, p);
    Matrix psi = ca.transpose() * s4 * ca;
    psi += ktr(s4.bottomRightCorner(p - m, p - m), st.laplace.cov);
    const Matrix cross = st.eta_q * w.WY * priors.B0.transpose() * ca / priors.psi_eta0;
    psi -= cross + cross.transpose();
    psi += (st.eta_q * w.WY * st.eta_q.transpose() + ktr(w.WY, w.sigma_eta_t)) / priors.psi_eta0;
    psi = symmetrized(psi);
    require_spd(psi, "update_OmegaX1");
    st.PsiX1_q = psi;
    st.nuX1_q = w.n + priors.nuX1 + ds.Y.cols();
}

void update_OmegaX0(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    const Index p = ds.X.cols(), m = st.eta_q.rows();
    const Work w = make_work(st, ds);
    const Matrix da = make_DA(st.laplace.A_hat);
    const Matrix s5 = w.GpX + priors.psiX0 * Matrix::Identity(p, p);
    Matrix psi = da.transpose() * s5 * da;
    psi += ktr(s5.topLeftCorner(m, m), st.laplace.cov_transposed());
    psi = symmetrized(psi);
    require_spd(psi, "update_OmegaX0");
    st.PsiX0_q = psi;
    st.nuX0_q = w.n + priors.nuX0;
}

void update_eta_vec(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    const Index p = ds.X.cols(), m = st.eta_q.rows(), r = ds.Y.cols();
    const Work w = make_work(st, ds);
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix s3 = symmetrized(ca.transpose() * w.GpX * ca +
                                  ktr(w.GpX.bottomRightCorner(p - m, p - m), st.laplace.cov));
    const Matrix q = symmetrized(s3 + w.WX1 / priors.psi_eta0);
    const Matrix qinv = inv_spd(q, "update_eta_vec");
    const Matrix wy_inv = st.PsiY_q / st.nuY_q;
    st.Sigma_eta = symmetrized(kron(wy_inv, qinv));
    const Matrix rhs = ca.transpose() * w.Xmu.transpose() * w.Ymu +
                       w.WX1 * ca.transpose() * priors.B0 / priors.psi_eta0; // m x r
    st.eta_q = qinv * rhs;
    (void)r;
}

void update_muX(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    (void)priors;
    const Index p = ds.X.cols(), m = st.eta_q.rows();
    const Work w = make_work(st, ds);
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix da = make_DA(st.laplace.A_hat);
    const Matrix k = selector_K(p, m);
    const Matrix l = selector_L(p, m);
    const Matrix s6 =
        w.n * symmetrized(w.WX1 + st.eta_q * w.WY * st.eta_q.transpose() + ktr(w.WY, w.sigma_eta_t));
    const Matrix s7 = w.n * w.WX0;
    Matrix prec = ca * s6 * ca.transpose() +
                  l * ktr(s6, st.laplace.cov_transposed()) * l.transpose() +
                  da * s7 * da.transpose() + k * ktr(s7, st.laplace.cov) * k.transpose();
    prec = symmetrized(prec);
    require_spd(prec, "update_muX");
    st.muX_q = ds.X.colwise().mean();
    st.SigmaX_q = inv_spd(prec, "update_muX");
}

void update_muY(PredictorVarState& st, const Dataset& ds, const PredictorPriors& priors) {
    (void)priors;
    const double n = static_cast<double>(ds.n());
    st.muY_q = ds.Y.colwise().mean();
    st.SigmaY_q = st.PsiY_q / (n * st.nuY_q);
}

void sweep_pred(PredictorVarState& st, const Dataset& ds, const PredictorEnvSpec& spec,
                const PredictorPriors& priors, const NewtonOptions& newton) {
    st.laplace = update_vecA(st, ds, spec, priors, newton);
    update_SigmaYX(st, ds, priors);
    update_OmegaX1(st, ds, priors);
    update_OmegaX0(st, ds, priors);
    update_eta_vec(st, ds, priors);
    update_muX(st, ds, priors);
    update_muY(st, ds, priors);
}

double elbo_pred(const PredictorVarState& st, const Dataset& ds, const PredictorEnvSpec& spec,
                 const PredictorPriors& priors) {
    const Index r = spec.r, p = spec.p, m = spec.m;
    const double n = static_cast<double>(ds.n());
    const double pm_dim = static_cast<double>(p - m);
    const double log2pi = std::log(2.0 * M_PI);
    const double log2 = std::log(2.0);
    const Work w = make_work(st, ds);

    const double logdet_psiY = chol_logdet(st.PsiY_q);
    const double logdet_psiX1 = chol_logdet(st.PsiX1_q);
    const double logdet_psiX0 = chol_logdet(st.PsiX0_q);
    const double elog_sigma_inv = multidigamma(r, 0.5 * st.nuY_q) + r * log2 - logdet_psiY;
    const double elog_om1_inv = multidigamma(m, 0.5 * st.nuX1_q) + m * log2 - logdet_psiX1;
    const double elog_om0_inv =
        multidigamma(p - m, 0.5 * st.nuX0_q) + pm_dim * log2 - logdet_psiX0;

    double val = 0.0;
    // Prior normalizing constants.
    val -= 0.5 * m * r * log2pi;
    val -= 0.5 * m * r * std::log(priors.psi_eta0);
    val -= 0.5 * pm_dim * m * log2pi;
    val -= 0.5 * m * chol_logdet(priors.U0A);
    val -= 0.5 * pm_dim * chol_logdet(priors.V0A);
    val += 0.5 * priors.nuY * chol_logdet(priors.PsiY) - 0.5 * priors.nuY * r * log2 -
           lmultigamma(r, 0.5 * priors.nuY);
    val += 0.5 * priors.nuX1 * m * std::log(priors.psiX1) - 0.5 * priors.nuX1 * m * log2 -
           lmultigamma(m, 0.5 * priors.nuX1);
    val += 0.5 * priors.nuX0 * pm_dim * std::log(priors.psiX0) -
           0.5 * priors.nuX0 * pm_dim * log2 - lmultigamma(p - m, 0.5 * priors.nuX0);
    // Likelihood constants.
    val -= 0.5 * n * (r + p) * log2pi;

    // Expected log-determinant blocks.
    val += 0.5 * (priors.nuY + n + m + r + 1) * elog_sigma_inv;
    val += 0.5 * (priors.nuX1 + n + m + r + 1) * elog_om1_inv;
    val += 0.5 * (priors.nuX0 + n + pm_dim + 1) * elog_om0_inv;

    // A-free expected quadratics in the conditional-covariance block.
    val -= 0.5 * ((w.GpY + priors.PsiY) * w.WY).trace();
    val -= 0.5 / priors.psi_eta0 *
           ((st.eta_q.transpose() * w.WX1 * st.eta_q + ktr(w.WX1, st.Sigma_eta)) * w.WY).trace();

    // Plug-in A-coordinate objective and its quadratic-expansion correction.
    const PredictorMoments pm = make_predictor_moments(st, ds, spec, priors);
    val += ftildeX(st.laplace.A_hat, pm) + ftildeX_const_terms(st, ds, spec, priors);
    val -= 0.5 * pm_dim * m;

    // Entropies.
    val += 0.5 * p * (log2pi + 1.0) + 0.5 * chol_logdet(st.SigmaX_q);
    val += 0.5 * r * (log2pi + 1.0) + 0.5 * chol_logdet(st.SigmaY_q);
    val += 0.5 * m * r * (log2pi + 1.0) + 0.5 * chol_logdet(st.Sigma_eta);
    val += iw_entropy(logdet_psiY, st.nuY_q, r);
    val += iw_entropy(logdet_psiX1, st.nuX1_q, m);
    val += iw_entropy(logdet_psiX0, st.nuX0_q, p - m);
    val += 0.5 * pm_dim * m * (log2pi + 1.0) + 0.5 * chol_logdet(st.laplace.cov);
    return val;
}

PredictorVarState initialize_predictor_state(const Dataset& ds, const PredictorEnvSpec& spec,
                                             const PredictorPriors& priors,
                                             FitOptions::Init init) {
    const Index p = spec.p, m = spec.m;
    const double n = static_cast<double>(ds.n());

    Matrix a_init = priors.A0;
    if (init == FitOptions::Init::OlsPilot) {
        const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
        const Matrix xtx = ds.Xc.transpose() * ds.Xc +
                           1e-8 * Matrix::Identity(p, p) * (1.0 + ds.Xc.squaredNorm());
        const Matrix bhat = chol_solve(xtx, Matrix(ds.Xc.transpose() * yc)); // p x r
        Eigen::JacobiSVD<Matrix> svd(bhat, Eigen::ComputeFullU);
        const Matrix gamma_hat = svd.matrixU().leftCols(m);
        const Matrix g1 = gamma_hat.topRows(m);
        Eigen::JacobiSVD<Matrix> g1svd(g1);
        const double smin = g1svd.singularValues().minCoeff();
        const double smax = g1svd.singularValues().maxCoeff();
        if (smin > 0.0 && smax / smin < 1e8) {
            a_init = gamma_hat.bottomRows(p - m) * g1.inverse();
        }
    }

    PredictorVarState st;
    st.muX_q = ds.X.colwise().mean();
    st.muY_q = ds.Y.colwise().mean();
    const Matrix sx = regularized_cov(ds.X);
    const Matrix sy = regularized_cov(ds.Y);
    st.SigmaX_q = sx / n;
    st.SigmaY_q = sy / n;
    st.nuY_q = n + m + priors.nuY;
    st.nuX1_q = n + priors.nuX1 + spec.r;
    st.nuX0_q = n + priors.nuX0;
    st.PsiY_q = symmetrized(st.nuY_q * sy);
    const Matrix ca = make_CA(a_init);
    const Matrix da = make_DA(a_init);
    st.PsiX1_q = symmetrized(st.nuX1_q * (ca.transpose() * sx * ca));
    st.PsiX0_q = symmetrized(st.nuX0_q * (da.transpose() * sx * da));
    const Matrix j = Matrix::Identity(m, m) + a_init.transpose() * a_init;
    const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
    const Matrix xtx = ds.Xc.transpose() * ds.Xc + 1e-8 * Matrix::Identity(p, p);
    const Matrix bhat = chol_solve(xtx, Matrix(ds.Xc.transpose() * yc));
    st.eta_q = chol_solve(j, Matrix(ca.transpose() * bhat)); // J^{-1} C' beta'
    st.Sigma_eta = Matrix::Zero(m * spec.r, m * spec.r);
    st.laplace = LaplaceFactor::degenerate(a_init);

    // One conjugate sweep with the seed point mass before the first Laplace step.
    update_SigmaYX(st, ds, priors);
    update_OmegaX1(st, ds, priors);
    update_OmegaX0(st, ds, priors);
    update_eta_vec(st, ds, priors);
    update_muX(st, ds, priors);
    update_muY(st, ds, priors);
    return st;
}

double predictor_state_drift(const PredictorVarState& before, const PredictorVarState& after) {
    const auto rel = [](const Matrix& a, const Matrix& b) {
        return (b - a).norm() / (1.0 + a.norm());
    };
    double d = 0.0;
    d = std::max(d, rel(before.muX_q, after.muX_q));
    d = std::max(d, rel(before.SigmaX_q, after.SigmaX_q));
    d = std::max(d, rel(before.muY_q, after.muY_q));
    d = std::max(d, rel(before.SigmaY_q, after.SigmaY_q));
    d = std::max(d, rel(before.eta_q, after.eta_q));
    d = std::max(d, rel(before.Sigma_eta, after.Sigma_eta));
    d = std::max(d, rel(before.PsiY_q, after.PsiY_q));
    d = std::max(d, rel(before.PsiX1_q, after.PsiX1_q));
    d = std::max(d, rel(before.PsiX0_q, after.PsiX0_q));
    d = std::max(d, rel(before.laplace.A_hat, after.laplace.A_hat));
    d = std::max(d, rel(before.laplace.cov, after.laplace.cov));
    return d;
}

Matrix predictor_state_beta(const PredictorVarState& st) {
    return st.eta_q.transpose() * make_CA(st.laplace.A_hat).transpose();
}

PredictorFitReport fit_pred(const Dataset& ds, const PredictorEnvSpec& spec,
                            const PredictorPriors& priors, const FitOptions& opts) {
    spec.validate_fit();
    priors.validate(spec);
    if (ds.Y.cols() != spec.r || ds.X.cols() != spec.p) {
        throw InputError("fit_pred: dataset dimensions do not match the spec");
    }
    const auto t0 = std::chrono::steady_clock::now();

    PredictorFitReport rep;
    rep.state = initialize_predictor_state(ds, spec, priors, opts.init);
    int polish = 0;
    bool fired = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
        const PredictorVarState before = rep.state;
        try {
            sweep_pred(rep.state, ds, spec, priors, opts.newton);
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << "fit_pred: iteration " << it << ": " << e.what();
            throw NumericalError(os.str());
        }
        rep.elbo_trace.push_back(elbo_pred(rep.state, ds, spec, priors));
        rep.iterations = it;
        if (!std::isfinite(rep.elbo_trace.back())) {
            std::ostringstream os;
            os << "fit_pred: iteration " << it << ": variational bound not finite";
            throw NumericalError(os.str());
        }
        // Same termination policy as the response driver.
        if (fired) ++polish;
        if (it >= 2 && stop_rule(rep.elbo_trace[it - 2], rep.elbo_trace[it - 1], opts.tol)) {
            fired = true;
            if (predictor_state_drift(before, rep.state) <= 100.0 * opts.tol ||
                polish >= opts.polish_sweeps) {
                rep.converged = true;
                break;
            }
        }
    }
    rep.beta_hat = predictor_state_beta(rep.state);
    rep.mu_hat = rep.state.muY_q - rep.beta_hat * rep.state.muX_q;
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

double predictor_loglik_at_means(const PredictorVarState& st, const Dataset& ds,
                                 const PredictorEnvSpec& spec) {
    const Index r = spec.r, p = spec.p, m = spec.m;
    if (st.nuY_q <= r + 1 || st.nuX1_q <= m + 1 || st.nuX0_q <= (p - m) + 1) {
        throw NumericalError("predictor_loglik_at_means: inverse-Wishart mean undefined");
    }
    const Matrix a = st.laplace.A_hat;
    const Matrix omega1_t = st.PsiX1_q / (st.nuX1_q - m - 1);
    const Matrix omega0_t = st.PsiX0_q / (st.nuX0_q - (p - m) - 1);
    const Matrix sigma = st.PsiY_q / (st.nuY_q - r - 1);
    const Matrix j = Matrix::Identity(m, m) + a.transpose() * a;
    const Matrix j0 = Matrix::Identity(p - m, p - m) + a * a.transpose();
    const Matrix jih = sym_invsqrt(j);
    const Matrix j0ih = sym_invsqrt(j0);
    const GammaPair g = gamma_from_A(a);
    const Matrix sigma_x = g.Gamma * (jih * omega1_t * jih) * g.Gamma.transpose() +
                           g.Gamma0 * (j0ih * omega0_t * j0ih) * g.Gamma0.transpose();
    const Matrix beta = predictor_state_beta(st);

    const Matrix x_means = Matrix::Ones(ds.n(), 1) * st.muX_q.transpose();
    double ll = mvn_loglik_rows(ds.X, x_means, sigma_x);
    const Matrix y_means =
        ((ds.X.rowwise() - st.muX_q.transpose()) * beta.transpose()).rowwise() +
        st.muY_q.transpose();
    ll += mvn_loglik_rows(ds.Y, y_means, sigma);
    return ll;
}

} // namespace envcalvi
