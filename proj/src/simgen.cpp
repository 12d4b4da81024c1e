#include "envcalvi/simgen.hpp"

#include <cmath>

namespace envcalvi {

namespace {

Matrix chol_lower(const Matrix& s, const char* who) {
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(who) + ": scale not positive definite");
    }
    return llt.matrixL();
}

Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

Matrix normal_rows(Rng& rng, Index n, const Vector& mean, const Matrix& cov_chol) {
    Matrix out(n, mean.size());
    for (Index i = 0; i < n; ++i) {
        out.row(i) = rng.normal_from_chol(mean, cov_chol).transpose();
    }
    return out;
}

} // namespace

Matrix sample_wishart(double df, const Matrix& scale, Rng& rng) {
    const Index d = scale.rows();
    if (df <= d - 1) throw InputError("sample_wishart: df must exceed d-1");
    const Matrix l = chol_lower(scale, "sample_wishart");
    // Bartlett decomposition: W = L T T' L' with T lower triangular,
    // T_ii = sqrt(chisq(df - i)), T_ij ~ N(0,1) below the diagonal.
    Matrix t = Matrix::Zero(d, d);
    for (Index i = 0; i < d; ++i) {
        t(i, i) = std::sqrt(rng.chisq(df - static_cast<double>(i)));
        for (Index j = 0; j < i; ++j) t(i, j) = rng.normal();
    }
    const Matrix lt = l * t;
    return lt * lt.transpose();
}

Matrix sample_inverse_wishart(double df, const Matrix& scale, Rng& rng) {
    const Index d = scale.rows();
    const Matrix scale_inv = chol_solve(scale, Matrix(Matrix::Identity(d, d)));
    const Matrix w = sample_wishart(df, Matrix(0.5 * (scale_inv + scale_inv.transpose())), rng);
    Matrix out = chol_solve(w, Matrix(Matrix::Identity(d, d)));
    return 0.5 * (out + out.transpose());
}

Matrix sample_inverse_wishart(double df, const Matrix& scale, std::uint64_t seed) {
    Rng rng(seed);
    return sample_inverse_wishart(df, scale, rng);
}

std::pair<Dataset, ResponseTruth> gen_response(const ResponseEnvSpec& spec, Index n,
                                               std::uint64_t seed,
                                               const ResponseGenRanges& ranges) {
    spec.validate_fit();
    if (n < 2) throw InputError("gen_response: need n >= 2");
    const Index r = spec.r, p = spec.p, u = spec.u;
    Rng rng(seed);

    NaturalParams truth;
    truth.mu = uniform_matrix(rng, r, 1, ranges.mu_lo, ranges.mu_hi);
    truth.eta = uniform_matrix(rng, u, p, ranges.eta_lo, ranges.eta_hi);
    truth.A = uniform_matrix(rng, r - u, u, ranges.a_lo, ranges.a_hi);
    Vector om(u), om0(r - u);
    for (Index i = 0; i < u; ++i) om(i) = rng.uniform(ranges.omega_lo, ranges.omega_hi);
    for (Index i = 0; i < r - u; ++i) om0(i) = rng.uniform(ranges.omega0_lo, ranges.omega0_hi);
    truth.Omega = om.asDiagonal();
    truth.Omega0 = om0.asDiagonal();

    const GammaPair g = gamma_from_A(truth.A);
    const Matrix beta = g.Gamma * truth.eta;
    const Matrix cov = g.Gamma * truth.Omega * g.Gamma.transpose() +
                       g.Gamma0 * truth.Omega0 * g.Gamma0.transpose();
    const Matrix cov_l = chol_lower(Matrix(0.5 * (cov + cov.transpose())), "gen_response");

    Matrix x(n, p);
    if (ranges.x_dist == ResponseGenRanges::XDist::Normal) {
        for (Index i = 0; i < n; ++i) x.row(i) = rng.normal_vector(p).transpose();
    } else {
        x = uniform_matrix(rng, n, p, -1.0, 1.0);
    }
    Matrix y(n, r);
    for (Index i = 0; i < n; ++i) {
        const Vector mean = truth.mu + beta * x.row(i).transpose();
        y.row(i) = rng.normal_from_chol(mean, cov_l).transpose();
    }
    return {Dataset(std::move(y), std::move(x)), ResponseTruth{truth, beta}};
}

std::pair<Dataset, PredictorTruth> gen_predictor(const PredictorEnvSpec& spec, Index n,
                                                 std::uint64_t seed,
                                                 const PredictorGenRanges& ranges) {
    spec.validate_fit();
    if (n < 2) throw InputError("gen_predictor: need n >= 2");
    const Index r = spec.r, p = spec.p, m = spec.m;
    Rng rng(seed);

    PredictorTruth truth;
    truth.mu_x = uniform_matrix(rng, p, 1, ranges.mu_lo, ranges.mu_hi);
    truth.mu_y = uniform_matrix(rng, r, 1, ranges.mu_lo, ranges.mu_hi);
    truth.eta = uniform_matrix(rng, m, r, ranges.eta_lo, ranges.eta_hi);
    truth.A = uniform_matrix(rng, p - m, m, ranges.a_lo, ranges.a_hi);
    truth.omega1 =
        ranges.omega1_mult *
        sample_inverse_wishart(m + 2, Matrix(ranges.omega1_scale * Matrix::Identity(m, m)), rng);
    truth.omega0 = sample_inverse_wishart(
        p - m + 2, Matrix(ranges.omega0_scale * Matrix::Identity(p - m, p - m)), rng);
    truth.sigma =
        sample_inverse_wishart(r + 1, Matrix(ranges.sigma_scale * Matrix::Identity(r, r)), rng);

    const GammaPair g = gamma_from_A(truth.A);
    truth.beta = truth.eta.transpose() * g.Gamma.transpose(); // r x p
    const Matrix cov_x = g.Gamma * truth.omega1 * g.Gamma.transpose() +
                         g.Gamma0 * truth.omega0 * g.Gamma0.transpose();
    const Matrix cov_x_l = chol_lower(Matrix(0.5 * (cov_x + cov_x.transpose())), "gen_predictor");
    const Matrix sigma_l = chol_lower(truth.sigma, "gen_predictor");

    const Matrix x = normal_rows(rng, n, truth.mu_x, cov_x_l);
    Matrix y(n, r);
    for (Index i = 0; i < n; ++i) {
        const Vector mean =
            truth.mu_y + truth.beta * (x.row(i).transpose() - truth.mu_x);
        y.row(i) = rng.normal_from_chol(mean, sigma_l).transpose();
    }
    return {Dataset(std::move(y), Matrix(x)), truth};
}

} // namespace envcalvi
