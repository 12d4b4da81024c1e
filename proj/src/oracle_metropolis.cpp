#include "envcalvi/oracle/metropolis.hpp"

#include <cmath>

#include "envcalvi/rng.hpp"

namespace envcalvi::oracle {

namespace {

struct BlockState {
    Index offset;
    Index dim;
    double log_step;
    long proposals = 0;
    long accepts = 0;
};

} // namespace

MhResult block_metropolis(const std::function<double(const Vector&)>& log_target,
                          const Vector& x0, const std::vector<Index>& block_sizes,
                          int iters, std::uint64_t seed, double init_step,
                          double target_accept) {
    if (iters < 10) throw InputError("block_metropolis: too few iterations");
    std::vector<BlockState> blocks;
    Index off = 0;
    for (Index d : block_sizes) {
        blocks.push_back({off, d, std::log(init_step)});
        off += d;
    }
    if (off != x0.size()) throw InputError("block_metropolis: block sizes do not cover x0");

    Rng rng(seed);
    Vector x = x0;
    double lp = log_target(x);
    if (!std::isfinite(lp)) {
        throw NumericalError("block_metropolis: log target not finite at the start");
    }

    const int burnin = iters / 2;
    MhResult out;
    out.draws.reserve(static_cast<size_t>(iters - burnin));

    for (int it = 0; it < iters; ++it) {
        for (auto& blk : blocks) {
            Vector prop = x;
            const double step = std::exp(blk.log_step);
            for (Index k = 0; k < blk.dim; ++k) {
                prop(blk.offset + k) += step * rng.normal();
            }
            const double lp_prop = log_target(prop);
            const double u = rng.uniform();
            const bool accept =
                std::isfinite(lp_prop) && std::log(std::max(u, 1e-300)) < lp_prop - lp;
            if (accept) {
                x = prop;
                lp = lp_prop;
            }
            if (it < burnin) {
                // Robbins-Monro drift of the log step toward the target rate.
                const double gain = 1.0 / std::pow(static_cast<double>(it + 1), 0.6);
                blk.log_step += gain * ((accept ? 1.0 : 0.0) - target_accept);
            } else {
                blk.proposals++;
                if (accept) blk.accepts++;
            }
        }
        if (it >= burnin) out.draws.push_back(x);
    }

    for (const auto& blk : blocks) {
        const double rate =
            blk.proposals > 0 ? static_cast<double>(blk.accepts) / blk.proposals : 0.0;
        out.acceptance.push_back(rate);
        if (rate < 0.02 || rate > 0.8) out.warning = true;
    }
    return out;
}

ChainSummary summarize_chain(const std::vector<Matrix>& draws, int batches) {
    if (draws.empty()) throw InputError("summarize_chain: no draws");
    const Index rows = draws[0].rows(), cols = draws[0].cols();
    const int m = static_cast<int>(draws.size());
    batches = std::max(2, std::min(batches, m));
    const int bsize = m / batches;

    ChainSummary out;
    out.mean = Matrix::Zero(rows, cols);
    for (const auto& d : draws) out.mean += d;
    out.mean /= static_cast<double>(m);

    Matrix meansq = Matrix::Zero(rows, cols);
    Matrix bmean_acc = Matrix::Zero(rows, cols);
    std::vector<Matrix> bmeans;
    for (int b = 0; b < batches; ++b) {
        Matrix bm = Matrix::Zero(rows, cols);
        for (int i = b * bsize; i < (b + 1) * bsize; ++i) bm += draws[static_cast<size_t>(i)];
        bm /= static_cast<double>(bsize);
        bmeans.push_back(bm);
        bmean_acc += bm;
    }
    bmean_acc /= static_cast<double>(batches);
    for (const auto& bm : bmeans) {
        meansq += (bm - bmean_acc).cwiseProduct(bm - bmean_acc);
    }
    // Var of the overall mean ~ var(batch means) / batches.
    out.mcse = (meansq / static_cast<double>(batches - 1) / static_cast<double>(batches))
                   .cwiseSqrt();
    return out;
}

Matrix logchol_to_spd(const Vector& coords, Index d) {
    Matrix l = Matrix::Zero(d, d);
    Index idx = 0;
    for (Index j = 0; j < d; ++j) {
        for (Index i = j; i < d; ++i) {
            l(i, j) = (i == j) ? std::exp(coords(idx)) : coords(idx);
            ++idx;
        }
    }
    return l * l.transpose();
}

Vector spd_to_logchol(const Matrix& s) {
    const Index d = s.rows();
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("spd_to_logchol: not PD");
    const Matrix l = llt.matrixL();
    Vector coords(d * (d + 1) / 2);
    Index idx = 0;
    for (Index j = 0; j < d; ++j) {
        for (Index i = j; i < d; ++i) {
            coords(idx++) = (i == j) ? std::log(l(i, j)) : l(i, j);
        }
    }
    return coords;
}

double logchol_jacobian(const Vector& coords, Index d) {
    // log |d Omega / d coords| for Omega = L L' with exponentiated diagonal.
    double val = d * std::log(2.0);
    Index idx = 0;
    for (Index j = 0; j < d; ++j) {
        val += static_cast<double>(d - j + 1) * coords(idx);
        idx += d - j;
    }
    return val;
}

namespace {

struct ResponsePack {
    Index r, p, u;
    Index mu_off, eta_off, om_off, om0_off, a_off, total;
};

ResponsePack make_response_pack(const ResponseEnvSpec& spec) {
    ResponsePack pk;
    pk.r = spec.r;
    pk.p = spec.p;
    pk.u = spec.u;
    pk.mu_off = 0;
    pk.eta_off = pk.mu_off + spec.r;
    pk.om_off = pk.eta_off + spec.u * spec.p;
    pk.om0_off = pk.om_off + spec.u * (spec.u + 1) / 2;
    pk.a_off = pk.om0_off + (spec.r - spec.u) * (spec.r - spec.u + 1) / 2;
    pk.total = pk.a_off + (spec.r - spec.u) * spec.u;
    return pk;
}

} // namespace

ResponseMhResult rw_metropolis_response(const Dataset& ds, const ResponseEnvSpec& spec,
                                        const ResponsePriors& priors, int iters,
                                        std::uint64_t seed, double step) {
    spec.validate_fit();
    const Index r = spec.r, p = spec.p, u = spec.u;
    const double n = static_cast<double>(ds.n());
    const ResponsePack pk = make_response_pack(spec);

    // One-time sufficient statistics; each target evaluation is O(r^3).
    const Matrix yty = ds.Y.transpose() * ds.Y;
    const Matrix ytx = ds.Y.transpose() * ds.X;
    const Matrix xtx = ds.X.transpose() * ds.X;
    const Vector sy = ds.Y.colwise().sum();
    const Vector sx = ds.X.colwise().sum();
    const Matrix u0inv = chol_solve(priors.U0A, Matrix(Matrix::Identity(r - u, r - u)));
    const Matrix v0inv = chol_solve(priors.V0A, Matrix(Matrix::Identity(u, u)));

    const auto log_target = [&](const Vector& x) -> double {
        const Vector mu = x.segment(pk.mu_off, r);
        const Matrix eta = unvec(x.segment(pk.eta_off, u * p), u, p);
        const Vector om_c = x.segment(pk.om_off, u * (u + 1) / 2);
        const Vector om0_c = x.segment(pk.om0_off, (r - u) * (r - u + 1) / 2);
        const Matrix a = unvec(x.segment(pk.a_off, (r - u) * u), r - u, u);
        const Matrix omega = logchol_to_spd(om_c, u);
        const Matrix omega0 = logchol_to_spd(om0_c, r - u);

        Eigen::LLT<Matrix> lo(omega), lo0(omega0);
        if (lo.info() != Eigen::Success || lo0.info() != Eigen::Success) {
            return -std::numeric_limits<double>::infinity();
        }
        const double logdet_om = 2.0 * lo.matrixLLT().diagonal().array().log().sum();
        const double logdet_om0 = 2.0 * lo0.matrixLLT().diagonal().array().log().sum();

        const GammaPair g = gamma_from_A(a);
        const Matrix ymu_ymu =
            yty - sy * mu.transpose() - mu * sy.transpose() + n * mu * mu.transpose();
        const Matrix ymu_x = ytx - mu * sx.transpose();

        double lp = -0.5 * (n + p + priors.nu1 + u + 1) * logdet_om -
                    0.5 * (n + priors.nu0 + (r - u) + 1) * logdet_om0;
        const Matrix gy = g.Gamma.transpose() * ymu_ymu * g.Gamma;
        const Matrix cross = g.Gamma.transpose() * ymu_x * eta.transpose();
        const Matrix exx = eta * xtx * eta.transpose();
        lp -= 0.5 * (lo.solve(gy + exx - cross - cross.transpose())).trace();
        lp -= 0.5 * (lo0.solve(g.Gamma0.transpose() * ymu_ymu * g.Gamma0)).trace();
        const Matrix ecent = eta - g.Gamma.transpose() * priors.B0;
        lp -= 0.5 * (priors.M * ecent.transpose() * lo.solve(ecent)).trace();
        lp -= 0.5 * priors.psi1 * lo.solve(Matrix::Identity(u, u)).trace();
        lp -= 0.5 * priors.psi0 * lo0.solve(Matrix::Identity(r - u, r - u)).trace();
        const Matrix acent = a - priors.A0;
        lp -= 0.5 * (v0inv * acent.transpose() * u0inv * acent).trace();
        lp += logchol_jacobian(om_c, u) + logchol_jacobian(om0_c, r - u);
        return lp;
    };

    // Start at simple moment-based values.
    Vector x0 = Vector::Zero(pk.total);
    x0.segment(pk.mu_off, r) = ds.Y.colwise().mean();
    const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
    const Matrix sample_cov = yc.transpose() * yc / n;
    x0.segment(pk.om_off, u * (u + 1) / 2) =
        spd_to_logchol(sample_cov.topLeftCorner(u, u));
    x0.segment(pk.om0_off, (r - u) * (r - u + 1) / 2) =
        spd_to_logchol(sample_cov.bottomRightCorner(r - u, r - u));

    const std::vector<Index> blocks = {r, u * p, u * (u + 1) / 2, (r - u) * (r - u + 1) / 2,
                                       (r - u) * u};
    const MhResult mh = block_metropolis(log_target, x0, blocks, iters, seed, step);

    ResponseMhResult out;
    out.acceptance = mh.acceptance;
    out.warning = mh.warning;
    out.beta_draws.reserve(mh.draws.size());
    for (const auto& x : mh.draws) {
        const Matrix eta = unvec(x.segment(pk.eta_off, u * p), u, p);
        const Matrix a = unvec(x.segment(pk.a_off, (r - u) * u), r - u, u);
        out.beta_draws.push_back(gamma_from_A(a).Gamma * eta);
    }
    out.beta = summarize_chain(out.beta_draws);
    return out;
}

namespace {

struct PredictorPack {
    Index r, p, m;
    Index muy_off, mux_off, eta_off, sig_off, om1_off, om0_off, a_off, total;
};

PredictorPack make_predictor_pack(const PredictorEnvSpec& spec) {
    PredictorPack pk;
    pk.r = spec.r;
    pk.p = spec.p;
    pk.m = spec.m;
    pk.muy_off = 0;
    pk.mux_off = pk.muy_off + spec.r;
    pk.eta_off = pk.mux_off + spec.p;
    pk.sig_off = pk.eta_off + spec.m * spec.r;
    pk.om1_off = pk.sig_off + spec.r * (spec.r + 1) / 2;
    pk.om0_off = pk.om1_off + spec.m * (spec.m + 1) / 2;
    pk.a_off = pk.om0_off + (spec.p - spec.m) * (spec.p - spec.m + 1) / 2;
    pk.total = pk.a_off + (spec.p - spec.m) * spec.m;
    return pk;
}

} // namespace

PredictorMhResult rw_metropolis_predictor(const Dataset& ds, const PredictorEnvSpec& spec,
                                          const PredictorPriors& priors, int iters,
                                          std::uint64_t seed, double step) {
    spec.validate_fit();
    const Index r = spec.r, p = spec.p, m = spec.m;
    const double n = static_cast<double>(ds.n());
    const PredictorPack pk = make_predictor_pack(spec);

    const Matrix yty = ds.Y.transpose() * ds.Y;
    const Matrix ytx = ds.Y.transpose() * ds.X;
    const Matrix xtx = ds.X.transpose() * ds.X;
    const Vector sy = ds.Y.colwise().sum();
    const Vector sx = ds.X.colwise().sum();
    const Matrix u0inv = chol_solve(priors.U0A, Matrix(Matrix::Identity(p - m, p - m)));
    const Matrix v0inv = chol_solve(priors.V0A, Matrix(Matrix::Identity(m, m)));

    const auto log_target = [&](const Vector& x) -> double {
        const Vector muy = x.segment(pk.muy_off, r);
        const Vector mux = x.segment(pk.mux_off, p);
        const Matrix eta = unvec(x.segment(pk.eta_off, m * r), m, r);
        const Matrix sigma = logchol_to_spd(x.segment(pk.sig_off, r * (r + 1) / 2), r);
        const Matrix omega1 = logchol_to_spd(x.segment(pk.om1_off, m * (m + 1) / 2), m);
        const Matrix omega0 =
            logchol_to_spd(x.segment(pk.om0_off, (p - m) * (p - m + 1) / 2), p - m);
        const Matrix a = unvec(x.segment(pk.a_off, (p - m) * m), p - m, m);

        Eigen::LLT<Matrix> ls(sigma), l1(omega1), l0(omega0);
        if (ls.info() != Eigen::Success || l1.info() != Eigen::Success ||
            l0.info() != Eigen::Success) {
            return -std::numeric_limits<double>::infinity();
        }
        const double logdet_sig = 2.0 * ls.matrixLLT().diagonal().array().log().sum();
        const double logdet_om1 = 2.0 * l1.matrixLLT().diagonal().array().log().sum();
        const double logdet_om0 = 2.0 * l0.matrixLLT().diagonal().array().log().sum();

        const GammaPair g = gamma_from_A(a);
        const Matrix j = Matrix::Identity(m, m) + a.transpose() * a;

        const Matrix ymu_ymu =
            yty - sy * muy.transpose() - muy * sy.transpose() + n * muy * muy.transpose();
        const Matrix xmu_xmu =
            xtx - sx * mux.transpose() - mux * sx.transpose() + n * mux * mux.transpose();
        const Matrix ymu_xmu = ytx - muy * sx.transpose() - sy * mux.transpose() +
                               n * muy * mux.transpose();

        double lp = -0.5 * (priors.nuY + n + m + r + 1) * logdet_sig -
                    0.5 * (priors.nuX1 + n + m + 1) * logdet_om1 -
                    0.5 * (priors.nuX0 + n + (p - m) + 1) * logdet_om0;
        // Coefficient-prior normalizer depends on A through J.
        lp -= 0.5 * r * (m * std::log(priors.psi_eta0) + 2.0 * chol_logdet(j) + logdet_om1);
        // Regression residual.
        const Matrix gb = g.Gamma * eta; // p x r
        const Matrix quad = ymu_ymu - gb.transpose() * ymu_xmu.transpose() -
                            ymu_xmu * gb + gb.transpose() * xmu_xmu * gb;
        lp -= 0.5 * ls.solve(quad).trace();
        // Predictor marginal.
        lp -= 0.5 * l1.solve(g.Gamma.transpose() * xmu_xmu * g.Gamma).trace();
        lp -= 0.5 * l0.solve(g.Gamma0.transpose() * xmu_xmu * g.Gamma0).trace();
        // Coefficient prior.
        const Matrix jh = sym_sqrt(j);
        const Matrix ecent = eta - jh * make_CA(a).transpose() * priors.B0;
        const Matrix jinv_ecent = chol_solve(j, ecent);
        lp -= 0.5 / priors.psi_eta0 *
              (ls.solve(jinv_ecent.transpose() * l1.solve(jinv_ecent)).trace());
        // Covariance priors.
        lp -= 0.5 * (ls.solve(priors.PsiY)).trace();
        lp -= 0.5 * priors.psiX1 * l1.solve(Matrix::Identity(m, m)).trace();
        lp -= 0.5 * priors.psiX0 * l0.solve(Matrix::Identity(p - m, p - m)).trace();
        const Matrix acent = a - priors.A0;
        lp -= 0.5 * (v0inv * acent.transpose() * u0inv * acent).trace();
        lp += logchol_jacobian(x.segment(pk.sig_off, r * (r + 1) / 2), r);
        lp += logchol_jacobian(x.segment(pk.om1_off, m * (m + 1) / 2), m);
        lp += logchol_jacobian(x.segment(pk.om0_off, (p - m) * (p - m + 1) / 2), p - m);
        return lp;
    };

    Vector x0 = Vector::Zero(pk.total);
    x0.segment(pk.muy_off, r) = ds.Y.colwise().mean();
    x0.segment(pk.mux_off, p) = ds.X.colwise().mean();
    const Matrix yc = ds.Y.rowwise() - ds.Y.colwise().mean();
    const Matrix xc = ds.Xc;
    x0.segment(pk.sig_off, r * (r + 1) / 2) = spd_to_logchol(yc.transpose() * yc / n);
    x0.segment(pk.om1_off, m * (m + 1) / 2) =
        spd_to_logchol((xc.transpose() * xc / n).topLeftCorner(m, m));
    x0.segment(pk.om0_off, (p - m) * (p - m + 1) / 2) =
        spd_to_logchol((xc.transpose() * xc / n).bottomRightCorner(p - m, p - m));

    const std::vector<Index> blocks = {r,
                                       p,
                                       m * r,
                                       r * (r + 1) / 2,
                                       m * (m + 1) / 2,
                                       (p - m) * (p - m + 1) / 2,
                                       (p - m) * m};
    const MhResult mh = block_metropolis(log_target, x0, blocks, iters, seed, step);

    PredictorMhResult out;
    out.acceptance = mh.acceptance;
    out.warning = mh.warning;
    out.beta_draws.reserve(mh.draws.size());
    for (const auto& x : mh.draws) {
        const Matrix eta = unvec(x.segment(pk.eta_off, m * r), m, r);
        const Matrix a = unvec(x.segment(pk.a_off, (p - m) * m), p - m, m);
        out.beta_draws.push_back(eta.transpose() * gamma_from_A(a).Gamma.transpose());
    }
    out.beta = summarize_chain(out.beta_draws);
    return out;
}

} // namespace envcalvi::oracle
