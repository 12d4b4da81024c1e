#include "envcalvi/modelselect.hpp"

#include <algorithm>
#include <cmath>

#include "envcalvi/parallel.hpp"
#include "envcalvi/rng.hpp"

namespace envcalvi {

double bic(double loglik, Index d_M, double n) {
    return -2.0 * loglik + static_cast<double>(d_M) * std::log(n);
}

Index response_param_count(Index r, Index p, Index u) {
    return r + r * (r + 1) / 2 + u * p;
}

Index predictor_param_count(Index r, Index p, Index m) {
    return r + p + r * (r + 1) / 2 + p * (p + 1) / 2 + m * r;
}

int DimensionPosterior::mode() const {
    const auto it = std::max_element(probs.begin(), probs.end());
    return dims[static_cast<size_t>(std::distance(probs.begin(), it))];
}

DimensionPosterior dim_posterior(const std::vector<int>& dims,
                                 const std::vector<double>& logliks,
                                 const std::vector<double>& bics,
                                 const std::vector<double>& prior) {
    if (dims.empty()) throw InputError("dim_posterior: need at least one candidate");
    if (bics.size() != dims.size() || logliks.size() != dims.size()) {
        throw InputError("dim_posterior: mismatched candidate vectors");
    }
    if (!prior.empty() && prior.size() != dims.size()) {
        throw InputError("dim_posterior: prior size mismatch");
    }
    DimensionPosterior out;
    out.dims = dims;
    out.logliks = logliks;
    out.bics = bics;
    std::vector<double> logw(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) {
        double lp = 0.0;
        if (!prior.empty()) {
            if (prior[i] <= 0.0) throw InputError("dim_posterior: prior weights must be positive");
            lp = std::log(prior[i]);
        }
        logw[i] = -0.5 * bics[i] + lp;
    }
    const double m = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (double& w : logw) {
        w = std::exp(w - m);
        total += w;
    }
    out.probs.resize(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) out.probs[i] = logw[i] / total;
    return out;
}

Matrix bma_beta(const std::vector<Matrix>& per_dim_betas, const std::vector<double>& probs) {
    if (per_dim_betas.empty() || per_dim_betas.size() != probs.size()) {
        throw InputError("bma_beta: size mismatch");
    }
    Matrix out = Matrix::Zero(per_dim_betas[0].rows(), per_dim_betas[0].cols());
    for (size_t i = 0; i < probs.size(); ++i) out += probs[i] * per_dim_betas[i];
    return out;
}

double mse_beta(const Matrix& beta_hat, const Matrix& beta_star) {
    return (beta_hat - beta_star).squaredNorm();
}

BootstrapResult residual_bootstrap(const Dataset& ds, const ResponseEnvSpec& spec,
                                   const ResponsePriors& priors, const FitReport& fit_rep,
                                   int B, std::uint64_t seed, const FitOptions& opts,
                                   int threads) {
    if (!fit_rep.converged) throw InputError("residual_bootstrap: fit did not converge");
    if (B < 1) throw InputError("residual_bootstrap: need B >= 1");
    const Index n = ds.n();
    const Matrix fitted = (ds.X * fit_rep.beta_hat.transpose()).rowwise() +
                          fit_rep.mu_hat.transpose();
    const Matrix resid = ds.Y - fitted;
    const double denom = static_cast<double>(spec.r * spec.p);

    std::vector<double> sq(static_cast<size_t>(B), 0.0);
    std::vector<char> ok(static_cast<size_t>(B), 0);
    parallel_for(B, threads, [&](int b) {
        Rng rng(seed ^ static_cast<std::uint64_t>(b));
        Matrix ystar = fitted;
        for (Index i = 0; i < n; ++i) {
            const Index pick = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
            ystar.row(i) += resid.row(pick);
        }
        try {
            const FitReport rep = fit(Dataset(std::move(ystar), ds.X), spec, priors, opts);
            sq[static_cast<size_t>(b)] =
                (rep.beta_hat - fit_rep.beta_hat).squaredNorm() / denom;
            ok[static_cast<size_t>(b)] = 1;
        } catch (const NumericalError&) {
            ok[static_cast<size_t>(b)] = 0;
        }
    });

    BootstrapResult out;
    double total = 0.0;
    int kept = 0;
    for (int b = 0; b < B; ++b) {
        if (ok[static_cast<size_t>(b)]) {
            out.per_replicate.push_back(sq[static_cast<size_t>(b)]);
            total += sq[static_cast<size_t>(b)];
            ++kept;
        } else {
            ++out.failures;
        }
    }
    if (kept == 0) throw NumericalError("residual_bootstrap: every replicate fit failed");
    out.rmse = std::sqrt(total / kept);
    return out;
}

double response_boundary_loglik(const Dataset& ds, Index u) {
    const Index r = ds.Y.cols(), p = ds.X.cols();
    const double n = static_cast<double>(ds.n());
    const Vector ybar = ds.Y.colwise().mean();
    const Matrix yc = ds.Y.rowwise() - ybar.transpose();
    if (u == 0) {
        const Matrix sigma = yc.transpose() * yc / n;
        const Matrix means = Matrix::Ones(ds.n(), 1) * ybar.transpose();
        return mvn_loglik_rows(ds.Y, means, sigma);
    }
    if (u == r) {
        // Unrestricted multivariate regression MLE.
        const Matrix xtx = ds.Xc.transpose() * ds.Xc;
        const Matrix bhat = chol_solve(xtx, Matrix(ds.Xc.transpose() * yc)); // p x r
        const Matrix fitted = (ds.Xc * bhat).rowwise() + ybar.transpose();
        const Matrix resid = ds.Y - fitted;
        const Matrix sigma = resid.transpose() * resid / n;
        return mvn_loglik_rows(ds.Y, fitted, sigma);
    }
    throw InputError("response_boundary_loglik: u must be 0 or r");
}

ResponseSelection select_response(const Dataset& ds, const ResponseEnvSpec& base,
                                  const PriorFactory& make_priors, Index u_min, Index u_max,
                                  const std::vector<double>& prior_weights,
                                  const FitOptions& opts, int threads) {
    const Index r = base.r, p = base.p;
    if (u_min < 0 || u_max > r || u_min > u_max) {
        throw InputError("select_response: need 0 <= u_min <= u_max <= r");
    }
    const int count = static_cast<int>(u_max - u_min + 1);
    std::vector<int> dims(static_cast<size_t>(count));
    std::vector<double> logliks(static_cast<size_t>(count));
    std::vector<Matrix> betas(static_cast<size_t>(count));
    std::vector<int> iters(static_cast<size_t>(count), 0);
    std::vector<bool> conv(static_cast<size_t>(count), true);

    std::vector<char> conv_raw(static_cast<size_t>(count), 1);
    parallel_for(count, threads, [&](int idx) {
        const Index u = u_min + idx;
        dims[static_cast<size_t>(idx)] = static_cast<int>(u);
        if (u == 0 || u == r) {
            logliks[static_cast<size_t>(idx)] = response_boundary_loglik(ds, u);
            if (u == 0) {
                betas[static_cast<size_t>(idx)] = Matrix::Zero(r, p);
            } else {
                const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
                const Matrix xtx = ds.Xc.transpose() * ds.Xc;
                betas[static_cast<size_t>(idx)] =
                    chol_solve(xtx, Matrix(ds.Xc.transpose() * yc)).transpose();
            }
            return;
        }
        ResponseEnvSpec spec = base;
        spec.u = u;
        const ResponsePriors priors =
            make_priors ? make_priors(spec) : ResponsePriors::vague(spec);
        const FitReport rep = fit(ds, spec, priors, opts);
        const NaturalParams means = variational_mean_params(rep.state, ds, spec);
        logliks[static_cast<size_t>(idx)] = loglik_at(means, ds);
        betas[static_cast<size_t>(idx)] = rep.beta_hat;
        iters[static_cast<size_t>(idx)] = rep.iterations;
        conv_raw[static_cast<size_t>(idx)] = rep.converged ? 1 : 0;
    });
    for (int i = 0; i < count; ++i) conv[static_cast<size_t>(i)] = conv_raw[static_cast<size_t>(i)] != 0;

    std::vector<double> bics(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        bics[static_cast<size_t>(i)] =
            bic(logliks[static_cast<size_t>(i)],
                response_param_count(r, p, dims[static_cast<size_t>(i)]), ds.n());
    }

    ResponseSelection sel;
    sel.posterior = dim_posterior(dims, logliks, bics, prior_weights);
    sel.betas = betas;
    sel.beta_bma = bma_beta(betas, sel.posterior.probs);
    sel.iterations = iters;
    sel.converged = conv;
    return sel;
}

} // namespace envcalvi
