#include <doctest.h>

#include <cmath>

#include "envcalvi/oracle/finite_diff.hpp"
#include "envcalvi/oracle/mc_checks.hpp"
#include "envcalvi/predictor_calvi.hpp"
#include "envcalvi/rng.hpp"
#include "envcalvi/simgen.hpp"
#include "envcalvi/special.hpp"

using namespace envcalvi;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

Matrix random_spd(Rng& rng, Index d, double ridge = 0.5) {
    const Matrix a = random_matrix(rng, d, d);
    return a * a.transpose() + ridge * Matrix::Identity(d, d);
}

PredictorGenRanges mild_ranges() {
    // Softer than the headline design so small-n fits stay well conditioned.
    PredictorGenRanges rg;
    rg.a_lo = -1.0;
    rg.a_hi = 1.0;
    rg.eta_lo = 1.0;
    rg.eta_hi = 3.0;
    rg.omega0_scale = 1.0;
    return rg;
}

// A converged-ish state on a real dataset, to evaluate formulas at.
PredictorVarState worked_state(const Dataset& ds, const PredictorEnvSpec& spec,
                               const PredictorPriors& pr, int sweeps = 3) {
    PredictorVarState st = initialize_predictor_state(ds, spec, pr, FitOptions::Init::OlsPilot);
    for (int i = 0; i < sweeps; ++i) sweep_pred(st, ds, spec, pr);
    return st;
}

} // namespace

TEST_CASE("predictor objective reduces to the log-determinant with zeroed moments") {
    Rng rng(61);
    const Index p = 6, m = 2;
    const PredictorMoments pm = PredictorMoments::zeroed(p, m, 17.0);
    const Matrix a = random_matrix(rng, p - m, m);
    const Matrix j0 = Matrix::Identity(p - m, p - m) + a * a.transpose();
    CHECK(ftildeX(a, pm) - ftildeX(Matrix::Zero(p - m, m), pm) ==
          doctest::Approx(0.5 * 17.0 * chol_logdet(j0)).epsilon(1e-12));
    CHECK(ftildeX(Matrix::Zero(p - m, m), pm) == 0.0);
}

TEST_CASE("predictor gradient and Hessian pass the finite-difference gates") {
    Rng rng(62);
    for (int rep = 0; rep < 20; ++rep) {
        const Index m = 1 + static_cast<Index>(rng.next_u64() % 3);
        const Index p = m + 1 + static_cast<Index>(rng.next_u64() % std::min<Index>(7 - m, 5));
        const Index r = 1 + static_cast<Index>(rng.next_u64() % 3);
        const Index n = 20 + static_cast<Index>(rng.next_u64() % 180);
        const PredictorEnvSpec spec{r, p, m};
        auto [ds, truth] = gen_predictor(spec, n, 9000 + rep, mild_ranges());
        PredictorPriors pr = PredictorPriors::vague(spec);
        pr.B0 = random_matrix(rng, p, r);
        pr.A0 = random_matrix(rng, p - m, m);
        pr.psi_eta0 = 5.0;
        const PredictorVarState st = worked_state(ds, spec, pr, 2);
        const PredictorMoments pm = make_predictor_moments(st, ds, spec, pr);
        const Matrix a = random_matrix(rng, p - m, m);

        const auto fvec = [&](const Vector& v) { return ftildeX(unvec(v, p - m, m), pm); };
        const Vector fd_g = oracle::fd_grad(fvec, vec(a));
        CHECK((vec(grad_ftildeX(a, pm)) - fd_g).norm() <= 1e-5 * (1.0 + fd_g.norm()));

        const auto gvec = [&](const Vector& v) {
            return vec(grad_ftildeX(unvec(v, p - m, m), pm));
        };
        const Matrix fd_h = oracle::fd_jacobian(gvec, vec(a));
        const Matrix an_h = hess_ftildeX(a, pm);
        CHECK((an_h - 0.5 * (fd_h + fd_h.transpose())).norm() <= 1e-4 * (1.0 + fd_h.norm()));
        CHECK((an_h - an_h.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + an_h.norm()));
    }
}

TEST_CASE("predictor Laplace update mirrors the response machinery") {
    // Prior-only instance with a strong prior centered at zero.
    {
        const Index p = 5, m = 2;
        const double kappa = 24.0;
        PredictorMoments pm = PredictorMoments::zeroed(p, m, kappa);
        pm.U0inv = 2.0 * kappa * Matrix::Identity(p - m, p - m);
        pm.V0inv = 2.0 * kappa * Matrix::Identity(m, m);
        Rng rng(63);
        const Matrix a_hat = newton_maximize(
            random_matrix(rng, p - m, m),
            [&](const Matrix& a) { return ftildeX(a, pm); },
            [&](const Matrix& a) { return grad_ftildeX(a, pm); },
            [&](const Matrix& a) { return hess_ftildeX(a, pm); });
        CHECK(a_hat.cwiseAbs().maxCoeff() <= 1e-7);
    }

    // Scalar instance against a grid search, plus a PD covariance.
    const PredictorEnvSpec spec{2, 2, 1};
    auto [ds, truth] = gen_predictor(spec, 80, 414, mild_ranges());
    const PredictorPriors pr = PredictorPriors::vague(spec);
    const PredictorVarState st = worked_state(ds, spec, pr, 2);
    const PredictorMoments pm = make_predictor_moments(st, ds, spec, pr);
    const LaplaceFactor lf = update_vecA(st, ds, spec, pr);
    double best = -1e300, best_x = 0.0;
    for (double x = -5.0; x <= 5.0; x += 1e-4) {
        Matrix a(1, 1);
        a << x;
        const double v = ftildeX(a, pm);
        if (v > best) {
            best = v;
            best_x = x;
        }
    }
    CHECK(std::abs(lf.A_hat(0, 0) - best_x) <= 2e-4);
    CHECK(is_spd(lf.cov));
    CHECK((Matrix(-lf.hessian_at_mode * lf.cov) - Matrix::Identity(1, 1)).cwiseAbs().maxCoeff() <=
          1e-10);
}

TEST_CASE("predictor degrees of freedom and mean updates take their stated values") {
    const Index r = 2, p = 5, m = 2, n = 100;
    const PredictorEnvSpec spec{r, p, m};
    auto [ds, truth] = gen_predictor(spec, n, 515, mild_ranges());
    PredictorPriors pr = PredictorPriors::vague(spec);
    pr.nuY = 4.0;
    PredictorVarState st = worked_state(ds, spec, pr, 1);
    CHECK(st.nuY_q == doctest::Approx(106.0)); // n + m + nuY
    CHECK(st.nuX1_q == doctest::Approx(n + pr.nuX1 + r));
    CHECK(st.nuX0_q == doctest::Approx(n + pr.nuX0));
    CHECK((st.muX_q - ds.X.colwise().mean().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.muY_q - ds.Y.colwise().mean().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.SigmaY_q - st.PsiY_q / (n * st.nuY_q)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("predictor covariance updates match naive formula assembly") {
    Rng rng(64);
    const Index r = 2, p = 4, m = 1, n = 50;
    const PredictorEnvSpec spec{r, p, m};
    auto [ds, truth] = gen_predictor(spec, n, 616, mild_ranges());
    PredictorPriors pr = PredictorPriors::vague(spec);
    pr.B0 = random_matrix(rng, p, r);
    pr.psi_eta0 = 3.0;
    PredictorVarState st = worked_state(ds, spec, pr, 2);

    const Matrix xmu = ds.X.rowwise() - st.muX_q.transpose();
    const Matrix ymu = ds.Y.rowwise() - st.muY_q.transpose();
    const Matrix gpx = xmu.transpose() * xmu + n * st.SigmaX_q;
    const Matrix gpy = ymu.transpose() * ymu + n * st.SigmaY_q;
    const Matrix wy = st.nuY_q * chol_solve(st.PsiY_q, Matrix(Matrix::Identity(r, r)));
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix da = make_DA(st.laplace.A_hat);
    const Matrix l = selector_L(p, m);
    const Matrix k = selector_K(p, m);
    const Commutation k_mr(m, r);
    const Matrix sigma_eta_t = k_mr.conjugate(st.Sigma_eta);

    // Conditional covariance factor.
    {
        PredictorVarState probe = st;
        update_SigmaYX(probe, ds, pr);
        const Matrix psiX1inv = chol_solve(st.PsiX1_q, Matrix(Matrix::Identity(m, m)));
        const Matrix s3 = ca.transpose() * gpx * ca +
                          ktr(Matrix(l.transpose() * gpx * l), st.laplace.cov);
        const Matrix cross = ymu.transpose() * xmu * ca * st.eta_q;
        const Matrix anchor = ca.transpose() * pr.B0 - st.eta_q;
        const Matrix b0l = l.transpose() * pr.B0;
        Matrix expect = gpy - cross - cross.transpose() +
                        st.eta_q.transpose() * s3 * st.eta_q + ktr(s3, st.Sigma_eta) + pr.PsiY;
        expect += (st.nuX1_q / pr.psi_eta0) *
                  (anchor.transpose() * psiX1inv * anchor +
                   b0l.transpose() * ktr(psiX1inv, st.laplace.cov_transposed()) * b0l +
                   ktr(psiX1inv, st.Sigma_eta));
        expect = 0.5 * (expect + expect.transpose());
        CHECK((probe.PsiY_q - expect).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + expect.norm()));
    }

    // Material factor with the coefficient-anchor cross term.
    {
        PredictorVarState probe = st;
        update_OmegaX1(probe, ds, pr);
        const Matrix s4 = gpx + pr.B0 * wy * pr.B0.transpose() / pr.psi_eta0 +
                          pr.psiX1 * Matrix::Identity(p, p);
        Matrix expect = ca.transpose() * s4 * ca +
                        ktr(Matrix(l.transpose() * s4 * l), st.laplace.cov);
        const Matrix cross = st.eta_q * wy * pr.B0.transpose() * ca / pr.psi_eta0;
        expect -= cross + cross.transpose();
        expect += (st.eta_q * wy * st.eta_q.transpose() + ktr(wy, sigma_eta_t)) / pr.psi_eta0;
        expect = 0.5 * (expect + expect.transpose());
        CHECK((probe.PsiX1_q - expect).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + expect.norm()));
    }

    // Immaterial factor and its plug-in limit.
    {
        PredictorVarState probe = st;
        update_OmegaX0(probe, ds, pr);
        const Matrix s5 = gpx + pr.psiX0 * Matrix::Identity(p, p);
        Matrix expect = da.transpose() * s5 * da +
                        ktr(Matrix(k.transpose() * s5 * k), st.laplace.cov_transposed());
        expect = 0.5 * (expect + expect.transpose());
        CHECK((probe.PsiX0_q - expect).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + expect.norm()));

        PredictorVarState degen = st;
        degen.laplace = LaplaceFactor::degenerate(st.laplace.A_hat);
        update_OmegaX0(degen, ds, pr);
        Matrix plug = da.transpose() * s5 * da;
        plug = 0.5 * (plug + plug.transpose());
        CHECK((degen.PsiX0_q - plug).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + plug.norm()));
    }
}

TEST_CASE("coefficient-block Gaussian expectations match Monte Carlo") {
    Rng rng(65);
    const Index r = 2, m = 2;
    const Matrix eta_q = random_matrix(rng, m, r);
    Matrix root = random_matrix(rng, m * r, m * r);
    const Matrix sigma_eta = 0.05 * (root * root.transpose()) +
                             0.02 * Matrix::Identity(m * r, m * r);
    Matrix w = random_spd(rng, r);

    const Commutation k_mr(m, r);
    const Matrix sigma_eta_t = k_mr.conjugate(sigma_eta);
    const Matrix closed = eta_q * w * eta_q.transpose() + ktr(w, sigma_eta_t);

    Eigen::LLT<Matrix> llt(sigma_eta);
    Rng draw(66);
    Matrix acc = Matrix::Zero(m, m);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const Vector v = draw.normal_from_chol(vec(eta_q), llt.matrixL());
        const Matrix e = unvec(v, m, r);
        acc += e * w * e.transpose();
    }
    acc /= draws;
    CHECK((acc - closed).cwiseAbs().maxCoeff() <= 0.01 * (1.0 + closed.cwiseAbs().maxCoeff()));

    // The transposed-side expectation used by the conditional covariance.
    Matrix wm = random_spd(rng, m);
    const Matrix closed2 = eta_q.transpose() * wm * eta_q + ktr(wm, sigma_eta);
    Rng draw2(67);
    Matrix acc2 = Matrix::Zero(r, r);
    for (int i = 0; i < draws; ++i) {
        const Vector v = draw2.normal_from_chol(vec(eta_q), llt.matrixL());
        const Matrix e = unvec(v, m, r);
        acc2 += e.transpose() * wm * e;
    }
    acc2 /= draws;
    CHECK((acc2 - closed2).cwiseAbs().maxCoeff() <= 0.01 * (1.0 + closed2.cwiseAbs().maxCoeff()));
}

TEST_CASE("coefficient update solves the joint linear system") {
    Rng rng(68);
    const Index r = 2, p = 4, m = 2, n = 60;
    const PredictorEnvSpec spec{r, p, m};
    auto [ds, truth] = gen_predictor(spec, n, 717, mild_ranges());
    PredictorPriors pr = PredictorPriors::vague(spec);
    pr.B0 = random_matrix(rng, p, r);
    pr.psi_eta0 = 2.0;
    PredictorVarState st = worked_state(ds, spec, pr, 2);
    PredictorVarState probe = st;
    update_eta_vec(probe, ds, pr);

    const Matrix xmu = ds.X.rowwise() - st.muX_q.transpose();
    const Matrix ymu = ds.Y.rowwise() - st.muY_q.transpose();
    const Matrix gpx = xmu.transpose() * xmu + n * st.SigmaX_q;
    const Matrix wy = st.nuY_q * chol_solve(st.PsiY_q, Matrix(Matrix::Identity(r, r)));
    const Matrix wx1 = st.nuX1_q * chol_solve(st.PsiX1_q, Matrix(Matrix::Identity(m, m)));
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix l = selector_L(p, m);
    const Matrix s3 = ca.transpose() * gpx * ca +
                      ktr(Matrix(l.transpose() * gpx * l), st.laplace.cov);
    const Matrix prec = kron(wy, Matrix(s3 + wx1 / pr.psi_eta0));
    const Matrix rhs_full = wy * ymu.transpose() * xmu * ca +
                            wy * pr.B0.transpose() * ca * wx1 / pr.psi_eta0; // r x m
    const Vector vec_eta = chol_solve(prec, Vector(vec(Matrix(rhs_full.transpose()))));
    CHECK((vec(probe.eta_q) - vec_eta).cwiseAbs().maxCoeff() <=
          1e-8 * (1.0 + vec_eta.norm()));
    CHECK((probe.Sigma_eta -
           chol_solve(prec, Matrix(Matrix::Identity(m * r, m * r))))
              .cwiseAbs()
              .maxCoeff() <= 1e-8);
}

TEST_CASE("predictor coefficient is invariant to the parameterization path") {
    Rng rng(69);
    for (int rep = 0; rep < 100; ++rep) {
        const Index m = 1 + static_cast<Index>(rng.next_u64() % 3);
        const Index p = m + 1 + static_cast<Index>(rng.next_u64() % 3);
        const Index r = 1 + static_cast<Index>(rng.next_u64() % 3);
        const Matrix a = random_matrix(rng, p - m, m, -2.0, 2.0);
        const Matrix eta_t = random_matrix(rng, m, r, -3.0, 3.0);

        const Matrix direct = eta_t.transpose() * make_CA(a).transpose(); // r x p
        const Matrix j = Matrix::Identity(m, m) + a.transpose() * a;
        const Matrix eta_nat = sym_sqrt(j) * eta_t;
        const Matrix via_gamma = eta_nat.transpose() * gamma_from_A(a).Gamma.transpose();
        CHECK((direct - via_gamma).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + direct.norm()));
    }

    // A = 0 keeps only the leading predictor block active.
    const Matrix a0 = Matrix::Zero(2, 1);
    const Matrix e0 = random_matrix(rng, 1, 2);
    const Matrix b = e0.transpose() * make_CA(a0).transpose();
    CHECK((b.leftCols(1) - e0.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.rightCols(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predictor bound matches a direct Monte-Carlo estimate on a tiny instance") {
    const Index r = 2, p = 3, m = 1, n = 40;
    const PredictorEnvSpec spec{r, p, m};
    auto [ds, truth] = gen_predictor(spec, n, 818, mild_ranges());
    Rng rng(70);
    PredictorPriors pr = PredictorPriors::vague(spec);
    pr.PsiY = random_spd(rng, r);
    pr.nuY = r + 2.0;
    pr.psiX1 = 0.7;
    pr.nuX1 = m + 1.0;
    pr.psiX0 = 0.9;
    pr.nuX0 = p - m + 1.0;
    pr.psi_eta0 = 4.0;
    pr.B0 = random_matrix(rng, p, r);
    pr.A0 = random_matrix(rng, p - m, m);
    pr.U0A = random_spd(rng, p - m);
    pr.V0A = random_spd(rng, m);

    FitOptions opts;
    opts.max_iter = 300;
    const PredictorFitReport rep = fit_pred(ds, spec, pr, opts);
    const PredictorVarState& st = rep.state;
    const double bound = elbo_pred(st, ds, spec, pr);
    CHECK(std::isfinite(bound));

    const auto logmn = [&](const Matrix& x, const Matrix& mu, const Matrix& u_cov,
                           const Matrix& v_cov) {
        const Matrix c = x - mu;
        const double quad =
            (chol_solve(v_cov, Matrix(c.transpose() * chol_solve(u_cov, c)))).trace();
        return -0.5 * x.size() * std::log(2.0 * M_PI) - 0.5 * x.cols() * chol_logdet(u_cov) -
               0.5 * x.rows() * chol_logdet(v_cov) - 0.5 * quad;
    };
    const auto logiw = [&](const Matrix& s, const Matrix& psi, double nu) {
        const Index d = s.rows();
        return 0.5 * nu * chol_logdet(psi) - 0.5 * nu * d * std::log(2.0) -
               lmultigamma(static_cast<int>(d), 0.5 * nu) -
               0.5 * (nu + d + 1) * chol_logdet(s) - 0.5 * (chol_solve(s, psi)).trace();
    };
    const auto logn = [&](const Vector& x, const Vector& mu, const Matrix& c) {
        const Vector rr = x - mu;
        return -0.5 * x.size() * std::log(2.0 * M_PI) - 0.5 * chol_logdet(c) -
               0.5 * rr.dot(chol_solve(c, Matrix(rr)).col(0));
    };

    Rng draw(9999);
    const Eigen::LLT<Matrix> sx_l(st.SigmaX_q), sy_l(st.SigmaY_q), se_l(st.Sigma_eta),
        ca_l(st.laplace.cov);
    const int draws = 20000;
    double acc = 0.0, accsq = 0.0;
    for (int d = 0; d < draws; ++d) {
        const Vector mux = draw.normal_from_chol(st.muX_q, sx_l.matrixL());
        const Vector muy = draw.normal_from_chol(st.muY_q, sy_l.matrixL());
        const Vector ve = draw.normal_from_chol(vec(st.eta_q), se_l.matrixL());
        const Matrix eta_t = unvec(ve, m, r);
        const Matrix sig = sample_inverse_wishart(st.nuY_q, st.PsiY_q, draw);
        const Matrix om1_t = sample_inverse_wishart(st.nuX1_q, st.PsiX1_q, draw);
        const Matrix om0_t = sample_inverse_wishart(st.nuX0_q, st.PsiX0_q, draw);
        const Vector va = draw.normal_from_chol(st.laplace.mean_vecA, ca_l.matrixL());
        const Matrix a = unvec(va, p - m, m);

        const Matrix ca = make_CA(a);
        const Matrix da = make_DA(a);
        const Matrix j = Matrix::Identity(m, m) + a.transpose() * a;
        const Matrix j0 = Matrix::Identity(p - m, p - m) + a * a.transpose();
        const Matrix sigma_x =
            ca * chol_solve(j, Matrix(chol_solve(j, om1_t).transpose())) * ca.transpose() +
            da * chol_solve(j0, Matrix(chol_solve(j0, om0_t).transpose())) * da.transpose();
        const Matrix beta = eta_t.transpose() * ca.transpose();

        double logp = 0.0;
        const Matrix x_means = Matrix::Ones(n, 1) * mux.transpose();
        logp += mvn_loglik_rows(ds.X, x_means, sigma_x);
        const Matrix y_means =
            ((ds.X.rowwise() - mux.transpose()) * beta.transpose()).rowwise() +
            muy.transpose();
        logp += mvn_loglik_rows(ds.Y, y_means, sig);
        logp += logmn(eta_t, Matrix(ca.transpose() * pr.B0), Matrix(pr.psi_eta0 * om1_t), sig);
        logp += logiw(om1_t, Matrix(pr.psiX1 * j), pr.nuX1);
        logp += logiw(om0_t, Matrix(pr.psiX0 * j0), pr.nuX0);
        logp += logiw(sig, pr.PsiY, pr.nuY);
        logp += logmn(a, pr.A0, pr.U0A, pr.V0A);

        double logq = logn(mux, st.muX_q, st.SigmaX_q);
        logq += logn(muy, st.muY_q, st.SigmaY_q);
        logq += logn(ve, Vector(vec(st.eta_q)), st.Sigma_eta);
        logq += logiw(sig, st.PsiY_q, st.nuY_q);
        logq += logiw(om1_t, st.PsiX1_q, st.nuX1_q);
        logq += logiw(om0_t, st.PsiX0_q, st.nuX0_q);
        logq += logn(va, st.laplace.mean_vecA, st.laplace.cov);

        const double val = logp - logq;
        acc += val;
        accsq += val * val;
    }
    const double mc = acc / draws;
    const double mcse = std::sqrt(std::max(0.0, accsq / draws - mc * mc) / draws);
    CHECK(std::abs(mc - bound) <= std::max(0.01 * std::abs(bound), 5.0 * mcse));
}

TEST_CASE("predictor fit converges and satisfies its fixed point") {
    const PredictorEnvSpec spec{2, 4, 1};
    auto [ds, truth] = gen_predictor(spec, 400, 919, mild_ranges());
    const PredictorPriors pr = PredictorPriors::vague(spec);
    const PredictorFitReport rep = fit_pred(ds, spec, pr);
    CHECK(rep.converged);
    CHECK(rep.iterations == static_cast<int>(rep.elbo_trace.size()));
    for (double v : rep.elbo_trace) CHECK(std::isfinite(v));

    PredictorVarState extra = rep.state;
    sweep_pred(extra, ds, spec, pr);
    CHECK(predictor_state_drift(rep.state, extra) <= 1e-4);

    CHECK((rep.beta_hat - truth.beta).cwiseAbs().maxCoeff() < 0.5);
    CHECK(std::isfinite(predictor_loglik_at_means(rep.state, ds, spec)));
}
