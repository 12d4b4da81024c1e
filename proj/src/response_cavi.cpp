#include "envcalvi/response_cavi.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "envcalvi/special.hpp"

namespace envcalvi {

namespace {

Matrix xtx_plus_m(const Dataset& ds, const ResponsePriors& priors) {
    return ds.Xc.transpose() * ds.Xc + priors.M;
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void require_spd(const Matrix& m, const char* who) {
    if (!is_spd(m)) {
        throw NumericalError(std::string(who) + ": updated scale matrix is not positive definite");
    }
}

Matrix regularized_sample_cov(const Matrix& y) {
    const double n = static_cast<double>(y.rows());
    const Matrix yc = y.rowwise() - y.colwise().mean();
    Matrix s = yc.transpose() * yc / n;
    const double ridge = std::max(1e-12 * s.trace() / y.cols(), 1e-12);
    s += ridge * Matrix::Identity(y.cols(), y.cols());
    return s;
}

} // namespace

bool stop_rule(double prev, double curr, double tol) {
    return std::abs(curr - prev) < tol * std::abs(curr);
}

MomentBundle make_moment_bundle(const ResponseVarState& st, const Dataset& ds,
                                const ResponseEnvSpec& spec, const ResponsePriors& priors) {
    const SuffStats ss = suff_stats(ds, st.mu_q, st.Sigma_q, priors);
    MomentBundle mb;
    mb.r = spec.r;
    mb.u = spec.u;
    mb.kappa = 2.0 * ds.n() + priors.nu1 + priors.nu0;
    mb.W1 = st.nu1_q * chol_solve(st.Psi1_q, Matrix(Matrix::Identity(spec.u, spec.u)));
    mb.W0 = st.nu0_q *
            chol_solve(st.Psi0_q, Matrix(Matrix::Identity(spec.r - spec.u, spec.r - spec.u)));
    mb.W1 = symmetrized(mb.W1);
    mb.W0 = symmetrized(mb.W0);
    mb.eta_q = st.eta_q;
    mb.Gr1 = ss.Gr1;
    mb.Gr2 = ss.Gr2;
    mb.Hmat = ss.Hmat;
    mb.A0 = priors.A0;
    mb.U0inv = chol_solve(priors.U0A, Matrix(Matrix::Identity(spec.r - spec.u, spec.r - spec.u)));
    mb.V0inv = chol_solve(priors.V0A, Matrix(Matrix::Identity(spec.u, spec.u)));
    return mb;
}

void update_eta(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors) {
    const Matrix xtxm = xtx_plus_m(ds, priors);
    const Matrix hmat = ds.Xc.transpose() * ds.Y + priors.M * priors.B0.transpose();
    const Matrix ca = make_CA(st.laplace.A_hat);
    st.eta_q = ca.transpose() * hmat.transpose() * chol_solve(xtxm, Matrix(Matrix::Identity(xtxm.rows(), xtxm.cols())));
    st.U_eta = st.Psi1_q / st.nu1_q;
    st.V_eta = symmetrized(chol_solve(xtxm, Matrix(Matrix::Identity(xtxm.rows(), xtxm.cols()))));
}

void update_omega(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors) {
    const SuffStats ss = suff_stats(ds, st.mu_q, st.Sigma_q, priors);
    const Index u = st.eta_q.rows();
    const Index ru = st.laplace.A_hat.rows();
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix xtxm = xtx_plus_m(ds, priors);
    const Matrix p1 = ss.Gr1.bottomRightCorner(ru, ru);
    Matrix psi = ca.transpose() * ss.Gr1 * ca;
    psi += ktr(p1, st.laplace.cov);
    psi -= 2.0 * st.eta_q * ss.Hmat * ca;
    psi += (xtxm * st.V_eta).trace() * st.U_eta;
    psi += st.eta_q * xtxm * st.eta_q.transpose();
    psi = symmetrized(psi);
    require_spd(psi, "update_omega");
    st.Psi1_q = psi;
    st.nu1_q = static_cast<double>(ds.n()) + priors.nu1 + ds.X.cols();
    (void)u;
}

void update_omega0(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors) {
    const SuffStats ss = suff_stats(ds, st.mu_q, st.Sigma_q, priors);
    const Index u = st.laplace.A_hat.cols();
    const Matrix da = make_DA(st.laplace.A_hat);
    const Matrix q2 = ss.Gr2.topLeftCorner(u, u);
    Matrix psi = da.transpose() * ss.Gr2 * da;
    psi += ktr(q2, st.laplace.cov_transposed());
    psi = symmetrized(psi);
    require_spd(psi, "update_omega0");
    st.Psi0_q = psi;
    st.nu0_q = static_cast<double>(ds.n()) + priors.nu0;
}

void update_mu(ResponseVarState& st, const Dataset& ds, const ResponsePriors& priors) {
    (void)priors;
    const Index r = ds.Y.cols();
    const Index u = st.laplace.A_hat.cols();
    const double n = static_cast<double>(ds.n());
    const Matrix ca = make_CA(st.laplace.A_hat);
    const Matrix da = make_DA(st.laplace.A_hat);
    const Matrix k = selector_K(r, u);
    const Matrix l = selector_L(r, u);
    const Matrix w1 = chol_solve(st.Psi1_q, Matrix(Matrix::Identity(u, u)));
    const Matrix w0 = chol_solve(st.Psi0_q, Matrix(Matrix::Identity(r - u, r - u)));
    const Matrix s1 =
        n * st.nu1_q *
        (ca * w1 * ca.transpose() + l * ktr(w1, st.laplace.cov_transposed()) * l.transpose());
    const Matrix s2 =
        n * st.nu0_q * (da * w0 * da.transpose() + k * ktr(w0, st.laplace.cov) * k.transpose());
    const Matrix prec = symmetrized(s1 + s2);
    require_spd(prec, "update_mu");
    st.mu_q = ds.Y.colwise().mean();
    st.Sigma_q = symmetrized(chol_solve(prec, Matrix(Matrix::Identity(r, r))));
}

void sweep(ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
           const ResponsePriors& priors, const NewtonOptions& newton) {
    const MomentBundle mb = make_moment_bundle(st, ds, spec, priors);
    const Matrix a_hat = maximize_ftilde(st.laplace.A_hat, mb, newton);
    st.laplace = laplace_factor(a_hat, mb);
    update_eta(st, ds, priors);
    update_omega(st, ds, priors);
    update_omega0(st, ds, priors);
    update_mu(st, ds, priors);
}

ResponseVarState initialize_response_state(const Dataset& ds, const ResponseEnvSpec& spec,
                                           const ResponsePriors& priors,
                                           FitOptions::Init init) {
    const Index r = spec.r, u = spec.u;
    const double n = static_cast<double>(ds.n());

    Matrix a_init = priors.A0;
    if (init == FitOptions::Init::OlsPilot) {
        // Pilot subspace from the ridge-stabilized least-squares coefficient.
        const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
        const Matrix xtxm = xtx_plus_m(ds, priors);
        const Matrix bhat = chol_solve(xtxm, Matrix(ds.Xc.transpose() * yc)); // p x r
        Eigen::JacobiSVD<Matrix> svd(bhat.transpose(), Eigen::ComputeFullU);
        const Matrix gamma_hat = svd.matrixU().leftCols(u);
        const Matrix g1 = gamma_hat.topRows(u);
        Eigen::JacobiSVD<Matrix> g1svd(g1);
        const double smin = g1svd.singularValues().minCoeff();
        const double smax = g1svd.singularValues().maxCoeff();
        if (smin > 0.0 && smax / smin < 1e8) {
            a_init = gamma_hat.bottomRows(r - u) * g1.inverse();
        }
    }

    ResponseVarState st;
    st.mu_q = ds.Y.colwise().mean();
    const Matrix s = regularized_sample_cov(ds.Y);
    st.Sigma_q = s / n;
    st.nu1_q = n + priors.nu1 + ds.X.cols();
    st.nu0_q = n + priors.nu0;
    const Matrix ca = make_CA(a_init);
    const Matrix da = make_DA(a_init);
    st.Psi1_q = symmetrized(st.nu1_q * (ca.transpose() * s * ca));
    st.Psi0_q = symmetrized(st.nu0_q * (da.transpose() * s * da));
    st.laplace = LaplaceFactor::degenerate(a_init);

    // One conjugate sweep with the seed point mass before the first Laplace step.
    update_eta(st, ds, priors);
    update_omega(st, ds, priors);
    update_omega0(st, ds, priors);
    update_mu(st, ds, priors);
    return st;
}

double elbo(const ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
            const ResponsePriors& priors, const MomentBundle& mb) {
    const Index r = spec.r, u = spec.u, p = spec.p;
    const double n = static_cast<double>(ds.n());
    const double ru = static_cast<double>(r - u);
    const double log2pi = std::log(2.0 * M_PI);
    const double log2e = std::log(2.0 * M_E);
    const double log2 = std::log(2.0);

    const double logdet_psi1 = chol_logdet(st.Psi1_q);
    const double logdet_psi0 = chol_logdet(st.Psi0_q);
    const double elog_om1_inv = multidigamma(u, 0.5 * st.nu1_q) + u * log2 - logdet_psi1;
    const double elog_om0_inv =
        multidigamma(r - u, 0.5 * st.nu0_q) + ru * log2 - logdet_psi0;

    double val = 0.0;
    // Prior normalizing constants.
    val -= 0.5 * u * p * log2pi;
    val += 0.5 * u * chol_logdet(priors.M); // -(u/2) log|M^{-1}|
    val -= 0.5 * (priors.nu1 * u + priors.nu0 * ru) * log2;
    val -= lmultigamma(u, 0.5 * priors.nu1);
    val += 0.5 * priors.nu1 * u * std::log(priors.psi1);
    val -= lmultigamma(r - u, 0.5 * priors.nu0);
    val += 0.5 * priors.nu0 * ru * std::log(priors.psi0);
    val -= 0.5 * ru * u * log2pi;
    val -= 0.5 * u * chol_logdet(priors.U0A);
    val -= 0.5 * ru * chol_logdet(priors.V0A);
    // Likelihood constant.
    val -= 0.5 * n * r * log2pi;

    // Expected log-determinant blocks.
    val += 0.5 * (n + priors.nu1 + u + p + 1) * elog_om1_inv;
    val += 0.5 * (n + priors.nu0 + ru + 1) * elog_om0_inv;

    // Expected coefficient quadratic.
    const Matrix xtxm = xtx_plus_m(ds, priors);
    const Matrix equad = (xtxm * st.V_eta).trace() * st.U_eta +
                         st.eta_q * xtxm * st.eta_q.transpose();
    val -= 0.5 * st.nu1_q * (equad * chol_solve(st.Psi1_q, Matrix(Matrix::Identity(u, u)))).trace();

    // Plug-in A-coordinate objective with its quadratic-expansion correction.
    val += ftilde(st.laplace.A_hat, mb) + ftilde_const_terms(mb) - 0.5 * ru * u;

    // Entropies of the variational factors.
    val += 0.5 * r * (log2pi + 1.0) + 0.5 * chol_logdet(st.Sigma_q);
    val += 0.5 * u * p * (log2pi + 1.0) + 0.5 * p * chol_logdet(st.U_eta) +
           0.5 * u * chol_logdet(st.V_eta);
    val += -0.5 * st.nu1_q * logdet_psi1 + 0.5 * st.nu1_q * u * log2e +
           lmultigamma(u, 0.5 * st.nu1_q) -
           0.5 * (st.nu1_q + u + 1) * (multidigamma(u, 0.5 * st.nu1_q) + u * log2 - logdet_psi1);
    val += -0.5 * st.nu0_q * logdet_psi0 + 0.5 * st.nu0_q * ru * log2e +
           lmultigamma(r - u, 0.5 * st.nu0_q) -
           0.5 * (st.nu0_q + ru + 1) *
               (multidigamma(r - u, 0.5 * st.nu0_q) + ru * log2 - logdet_psi0);
    val += 0.5 * ru * u * (log2pi + 1.0) + 0.5 * chol_logdet(st.laplace.cov);
    return val;
}

double elbo(const ResponseVarState& st, const Dataset& ds, const ResponseEnvSpec& spec,
            const ResponsePriors& priors) {
    return elbo(st, ds, spec, priors, make_moment_bundle(st, ds, spec, priors));
}

Matrix state_beta(const ResponseVarState& st) {
    return beta_from_tilde(st.laplace.A_hat, st.eta_q);
}

Vector state_mu_hat(const ResponseVarState& st, const Dataset& ds) {
    return st.mu_q - state_beta(st) * ds.xbar;
}

double state_drift(const ResponseVarState& before, const ResponseVarState& after) {
    const auto rel = [](const Matrix& a, const Matrix& b) {
        return (b - a).norm() / (1.0 + a.norm());
    };
    double d = 0.0;
    d = std::max(d, rel(before.mu_q, after.mu_q));
    d = std::max(d, rel(before.Sigma_q, after.Sigma_q));
    d = std::max(d, rel(before.eta_q, after.eta_q));
    d = std::max(d, rel(before.U_eta, after.U_eta));
    d = std::max(d, rel(before.V_eta, after.V_eta));
    d = std::max(d, rel(before.Psi1_q, after.Psi1_q));
    d = std::max(d, rel(before.Psi0_q, after.Psi0_q));
    d = std::max(d, rel(before.laplace.A_hat, after.laplace.A_hat));
    d = std::max(d, rel(before.laplace.cov, after.laplace.cov));
    return d;
}

NaturalParams variational_mean_params(const ResponseVarState& st, const Dataset& ds,
                                      const ResponseEnvSpec& spec) {
    const Index u = spec.u, r = spec.r;
    if (st.nu1_q <= u + 1 || st.nu0_q <= (r - u) + 1) {
        throw NumericalError("variational_mean_params: inverse-Wishart mean undefined");
    }
    TildeParams tp;
    tp.A = st.laplace.A_hat;
    tp.mu_t = st.mu_q;
    tp.eta_t = st.eta_q;
    tp.Omega_t = st.Psi1_q / (st.nu1_q - u - 1);
    tp.Omega0_t = st.Psi0_q / (st.nu0_q - (r - u) - 1);
    return inverse_reparameterize(tp, ds.xbar);
}

FitReport fit(const Dataset& ds, const ResponseEnvSpec& spec, const ResponsePriors& priors,
              const FitOptions& opts) {
    spec.validate_fit();
    priors.validate(spec);
    if (ds.Y.cols() != spec.r || ds.X.cols() != spec.p) {
        throw InputError("fit: dataset dimensions do not match the spec");
    }
    const auto t0 = std::chrono::steady_clock::now();

    FitReport rep;
    rep.state = initialize_response_state(ds, spec, priors, opts.init);
    int polish = 0;
    bool fired = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
        const ResponseVarState before = rep.state;
        try {
            sweep(rep.state, ds, spec, priors, opts.newton);
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << "fit: iteration " << it << ": " << e.what();
            throw NumericalError(os.str());
        }
        rep.elbo_trace.push_back(elbo(rep.state, ds, spec, priors));
        rep.iterations = it;
        if (!std::isfinite(rep.elbo_trace.back())) {
            std::ostringstream os;
            os << "fit: iteration " << it << ": variational bound not finite";
            throw NumericalError(os.str());
        }
        // Terminate on the relative bound-improvement rule, preferring a
        // state that is also stationary: keep sweeping (within the polish
        // budget) while one further sweep still moves a parameter by more
        // than 100 tol.
        if (fired) ++polish;
        if (it >= 2 && stop_rule(rep.elbo_trace[it - 2], rep.elbo_trace[it - 1], opts.tol)) {
            fired = true;
            if (state_drift(before, rep.state) <= 100.0 * opts.tol ||
                polish >= opts.polish_sweeps) {
                rep.converged = true;
                break;
            }
        }
    }
    rep.beta_hat = state_beta(rep.state);
    rep.mu_hat = state_mu_hat(rep.state, ds);
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

} // namespace envcalvi
