#include <doctest.h>

#include <cmath>

#include "envcalvi/oracle/euclid.hpp"
#include "envcalvi/oracle/exact_update.hpp"
#include "envcalvi/oracle/finite_diff.hpp"
#include "envcalvi/oracle/mc_checks.hpp"
#include "envcalvi/oracle/metropolis.hpp"
#include "envcalvi/oracle/tv_bound.hpp"
#include "envcalvi/response_model.hpp"
#include "envcalvi/rng.hpp"
#include "envcalvi/simgen.hpp"

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

} // namespace

TEST_CASE("finite differences on polynomials") {
    Rng rng(81);
    const Index d = 4;
    const Matrix q = random_spd(rng, d);
    const Vector b = random_matrix(rng, d, 1);
    const auto quad = [&](const Vector& x) { return 0.5 * x.dot(q * x) + b.dot(x); };
    const Vector x0 = random_matrix(rng, d, 1);

    const Vector g = oracle::fd_grad(quad, x0);
    CHECK((g - (q * x0 + b)).cwiseAbs().maxCoeff() <= 1e-8);
    const Matrix h = oracle::fd_hess(quad, x0);
    CHECK((h - q).cwiseAbs().maxCoeff() <= 1e-6);

    const auto lin = [&](const Vector& x) { return b.dot(x); };
    CHECK((oracle::fd_grad(lin, x0) - b).cwiseAbs().maxCoeff() <= 1e-10);

    // Accuracy collapses when the step sinks into rounding noise.
    const auto smooth = [](const Vector& x) { return std::sin(x(0)); };
    Vector z(1);
    z << 0.7;
    const double good = std::abs(oracle::fd_grad(smooth, z, 1e-5)(0) - std::cos(0.7));
    const double bad = std::abs(oracle::fd_grad(smooth, z, 1e-12)(0) - std::cos(0.7));
    CHECK(good < 1e-9);
    CHECK(bad > 10.0 * good);
}

TEST_CASE("gaussian quadratic oracle: plug-in, hand integral, closed form") {
    Rng rng(82);
    const Index ru = 2, u = 2, r = 4;
    const Matrix a_hat = random_matrix(rng, ru, u);
    Matrix c1 = random_spd(rng, r);
    Matrix c2 = random_spd(rng, u);

    // Degenerate covariance gives the deterministic plug-in value.
    const Matrix zero_cov = Matrix::Zero(ru * u, ru * u);
    const auto plug =
        oracle::mc_gaussian_quadratic(c1, c2, a_hat, zero_cov, oracle::QuadKind::C, 100, 5);
    const Matrix ca = make_CA(a_hat);
    CHECK(plug.estimate ==
          doctest::Approx((ca.transpose() * c1 * ca * c2).trace()).epsilon(1e-12));
    CHECK(plug.mcse <= 1e-12);

    // Scalar case against the hand integral: with C_a = (1, a)', the trace is
    // c2 (C11 + 2 a C12 + a^2 C22), so the mean uses E[a^2] = ahat^2 + s^2.
    Matrix sc1 = random_spd(rng, 2);
    Matrix sc2(1, 1);
    sc2 << 1.3;
    Matrix sa(1, 1);
    sa << 0.4;
    Matrix scov(1, 1);
    scov << 0.09;
    const double hand =
        1.3 * (sc1(0, 0) + 2.0 * 0.4 * sc1(0, 1) + (0.4 * 0.4 + 0.09) * sc1(1, 1));
    const auto mc =
        oracle::mc_gaussian_quadratic(sc1, sc2, sa, scov, oracle::QuadKind::C, 200000, 16);
    CHECK(std::abs(mc.estimate - hand) <= 3.0 * mc.mcse);

    // Full closed form, both block orientations.
    Matrix root = random_matrix(rng, ru * u, ru * u);
    const Matrix cov = 0.02 * (root * root.transpose()) +
                       0.02 * Matrix::Identity(ru * u, ru * u);
    const double closed_c =
        ((ca.transpose() * c1 * ca + ktr(c1.bottomRightCorner(ru, ru), cov)) * c2).trace();
    const auto mc_c =
        oracle::mc_gaussian_quadratic(c1, c2, a_hat, cov, oracle::QuadKind::C, 100000, 7);
    CHECK(std::abs(mc_c.estimate - closed_c) <= 3.0 * mc_c.mcse);

    Matrix c2d = random_spd(rng, ru);
    const Matrix da = make_DA(a_hat);
    const Commutation k_ru_u(ru, u);
    const double closed_d =
        ((da.transpose() * c1 * da + ktr(c1.topLeftCorner(u, u), k_ru_u.conjugate(cov))) * c2d)
            .trace();
    const auto mc_d =
        oracle::mc_gaussian_quadratic(c1, c2d, a_hat, cov, oracle::QuadKind::D, 100000, 8);
    CHECK(std::abs(mc_d.estimate - closed_d) <= 3.0 * mc_d.mcse);
}

TEST_CASE("block metropolis on a standard normal target") {
    const auto target = [](const Vector& x) { return -0.5 * x.squaredNorm(); };
    const Vector x0 = Vector::Zero(1);
    const auto res1 = oracle::block_metropolis(target, x0, {1}, 40000, 17, 0.5);
    const auto res2 = oracle::block_metropolis(target, x0, {1}, 40000, 17, 0.5);
    REQUIRE(res1.draws.size() == res2.draws.size());
    for (size_t i = 0; i < res1.draws.size(); i += 997) {
        CHECK(res1.draws[i](0) == res2.draws[i](0));
    }
    CHECK_FALSE(res1.warning);
    CHECK(res1.acceptance[0] > 0.1);
    CHECK(res1.acceptance[0] < 0.5);

    std::vector<Matrix> scalar_draws;
    for (const auto& d : res1.draws) scalar_draws.push_back(d);
    const auto summary = oracle::summarize_chain(scalar_draws);
    CHECK(std::abs(summary.mean(0, 0)) <= 3.0 * summary.mcse(0, 0));

    double m2 = 0.0;
    for (const auto& d : res1.draws) m2 += d(0) * d(0);
    m2 /= res1.draws.size();
    CHECK(std::abs(m2 - 1.0) < 0.1);

    // A flat target accepts every proposal, outside the healthy band.
    const auto flat = [](const Vector&) { return 0.0; };
    const auto res3 = oracle::block_metropolis(flat, x0, {1}, 2000, 3, 0.5);
    CHECK(res3.warning);
}

TEST_CASE("response sampler half chains agree and are seed stable") {
    const ResponseEnvSpec spec{3, 2, 1};
    auto [ds, truth] = gen_response(spec, 60, 123321);
    const ResponsePriors pr = ResponsePriors::vague(spec);

    const auto res1 = oracle::rw_metropolis_response(ds, spec, pr, 30000, 5u);
    const auto res2 = oracle::rw_metropolis_response(ds, spec, pr, 30000, 5u);
    REQUIRE(res1.beta_draws.size() == res2.beta_draws.size());
    CHECK((res1.beta.mean - res2.beta.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(res1.warning);

    const size_t half = res1.beta_draws.size() / 2;
    std::vector<Matrix> first(res1.beta_draws.begin(), res1.beta_draws.begin() + half);
    std::vector<Matrix> second(res1.beta_draws.begin() + half, res1.beta_draws.end());
    const auto s1 = oracle::summarize_chain(first);
    const auto s2 = oracle::summarize_chain(second);
    for (Index i = 0; i < s1.mean.rows(); ++i) {
        for (Index j = 0; j < s1.mean.cols(); ++j) {
            const double tol = 3.0 * (s1.mcse(i, j) + s2.mcse(i, j));
            CHECK(std::abs(s1.mean(i, j) - s2.mean(i, j)) <= tol);
        }
    }
}

TEST_CASE("log-cholesky coordinates round trip") {
    Rng rng(83);
    const Matrix s = random_spd(rng, 3);
    const Vector c = oracle::spd_to_logchol(s);
    CHECK((oracle::logchol_to_spd(c, 3) - s).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("exact 1-d coordinate update: normalization and Gaussian limit") {
    // Quadratic kernel equals the matching Gaussian.
    const double mean = 0.3, sd = 0.7;
    const auto quad = [&](double x) { return -0.5 * (x - mean) * (x - mean) / (sd * sd); };
    const auto gd =
        oracle::exact_coordinate_update_1d(quad, mean - 10 * sd, mean + 10 * sd, 4001);
    double mass = 0.0;
    const double h = gd.grid(1) - gd.grid(0);
    for (Index i = 0; i < gd.density.size(); ++i) {
        mass += gd.density(i) * h * ((i == 0 || i + 1 == gd.density.size()) ? 0.5 : 1.0);
    }
    CHECK(std::abs(mass - 1.0) <= 1e-8);
    CHECK(oracle::tv_to_gaussian(quad, mean - 10 * sd, mean + 10 * sd, mean, sd) <= 1e-6);

    // Cubic perturbations create a gap that closes as they shrink.
    const auto perturbed = [&](double eps) {
        const auto f = [=](double x) {
            const double z = (x - mean) / sd;
            return -0.5 * z * z + eps * z * z * z / (1.0 + z * z);
        };
        return oracle::tv_to_gaussian(f, mean - 10 * sd, mean + 10 * sd, mean, sd);
    };
    const double tv_big = perturbed(0.3);
    const double tv_small = perturbed(0.03);
    CHECK(tv_big > 1e-3);
    CHECK(tv_small < tv_big);
    CHECK(tv_small > 0.0);
}

TEST_CASE("euclidean inverse-square-root jacobian") {
    Rng rng(84);
    // Orthonormal columns: the Kronecker sum is 2I and the formula collapses.
    {
        const Matrix raw = random_matrix(rng, 5, 2);
        const Eigen::HouseholderQR<Matrix> qr(raw);
        const Matrix u = Matrix(qr.householderQ()).leftCols(2);
        const Matrix jac = oracle::euclid_invsqrt_jacobian(u);
        const Commutation k52(5, 2);
        const Matrix expected =
            -0.5 * (kron(Matrix::Identity(2, 2), u.transpose()) +
                    k52.right_multiply(kron(u.transpose(), Matrix::Identity(2, 2))));
        CHECK((jac - expected).cwiseAbs().maxCoeff() <= 1e-12);
    }

    // Finite differences of vec((U'U)^{-1/2}) for both factor shapes.
    const auto check_fd = [&](const Matrix& u) {
        const Index r = u.rows(), k = u.cols();
        const auto fvec = [&](const Vector& v) -> Vector {
            const Matrix uu = unvec(v, r, k);
            return vec(sym_invsqrt(Matrix(uu.transpose() * uu)));
        };
        const Matrix fd = oracle::fd_jacobian(fvec, vec(u));
        const Matrix an = oracle::euclid_invsqrt_jacobian(u);
        CHECK((an - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
    };
    const Matrix a = random_matrix(rng, 2, 3); // r = 5, u = 3
    check_fd(make_CA(a));
    check_fd(make_DA(a));

    // Directional second derivative: zero direction, finite differences,
    // and linearity.
    const Matrix u0 = make_CA(a);
    const Matrix du = random_matrix(rng, 5, 3);
    CHECK(oracle::euclid_invsqrt_second(u0, Matrix(Matrix::Zero(5, 3))).cwiseAbs().maxCoeff() ==
          0.0);
    const double h = 1e-6;
    const Matrix fd2 = (oracle::euclid_invsqrt_jacobian(Matrix(u0 + h * du)) -
                        oracle::euclid_invsqrt_jacobian(Matrix(u0 - h * du))) /
                       (2.0 * h);
    const Matrix an2 = oracle::euclid_invsqrt_second(u0, du);
    CHECK((an2 - fd2).norm() <= 1e-4 * (1.0 + fd2.norm()));
    const Matrix lin = oracle::euclid_invsqrt_second(u0, Matrix(2.5 * du));
    CHECK((lin - 2.5 * an2).norm() <= 1e-9 * (1.0 + an2.norm()));
}

TEST_CASE("derivative benchmark returns sane timings") {
    const auto res = oracle::bench_derivatives(12, 6, 3);
    CHECK(res.euclid_ms > 0.0);
    CHECK(res.reparam_ms > 0.0);
}

TEST_CASE("tv bound: scalar reproduction, monotonicity, violations") {
    oracle::TvBoundInputs inp;
    inp.n = 100;
    inp.d1 = 1;
    inp.H_f = Matrix::Identity(1, 1);
    inp.H_l = Matrix::Identity(1, 1);
    inp.delta_hat = 1.0;
    inp.delta_bar = 1.0;
    inp.M1_hat = 0.1;
    inp.M1_bar = 0.1;
    inp.M2_bar = 1.0;
    inp.kappa_hat = 1.0;

    const auto res = oracle::tv_bound(inp);
    // Independent scalar evaluation of every constant.
    const double tr_hf_inv = 1.0, lam = 1.0, op = 1.0;
    const double t_hat = -0.5 * std::pow(1.0 * 10.0 - std::sqrt(tr_hf_inv), 2.0) / op;
    const double c1 = std::sqrt(3.0) * tr_hf_inv * 0.1 /
                      (4.0 * std::sqrt((lam - 0.1) * (1.0 - std::exp(t_hat))));
    const double jval = 1.0 + 0.1 * 1.0 / 3.0;
    const double t_bar = -0.5 * std::pow(10.0 - std::sqrt(1.0 / jval), 2.0) * jval;
    const double c2 =
        2.0 * std::sqrt(jval) * 1.0 / (std::sqrt(2.0 * M_PI) * (1.0 - std::exp(t_bar)));
    const double bound =
        c1 / 10.0 + 2.0 * std::exp(t_hat) + c2 * std::pow(100.0, 0.5) * std::exp(-100.0);
    CHECK(std::abs(res.T_hat - t_hat) <= 1e-12 * std::abs(t_hat));
    CHECK(std::abs(res.T_bar_J - t_bar) <= 1e-12 * std::abs(t_bar));
    CHECK(std::abs(res.C1 - c1) <= 1e-12 * std::abs(c1));
    CHECK(std::abs(res.C2 - c2) <= 1e-12 * std::abs(c2));
    CHECK(std::abs(res.bound - bound) <= 1e-12 * std::abs(bound));

    // Monotone decrease beyond the computed crossover on a log grid.
    const double cross = oracle::tv_bound_crossover(inp);
    double prev = std::numeric_limits<double>::infinity();
    for (double logn = 2.0; logn <= 6.0; logn += 0.1) {
        oracle::TvBoundInputs grid = inp;
        grid.n = std::pow(10.0, logn);
        if (grid.n <= cross) continue;
        const double val = oracle::tv_bound(grid).bound;
        CHECK(val < prev);
        prev = val;
    }

    // Violated curvature condition names the inequality.
    oracle::TvBoundInputs badc = inp;
    badc.M1_hat = 2.0; // lambda_min = 1 <= delta * M1 = 2
    CHECK_THROWS_WITH_AS(oracle::tv_bound(badc),
                         doctest::Contains("curvature condition violated"), NumericalError);

    oracle::TvBoundInputs badt = inp;
    badt.n = 0.5; // sqrt(tr) = 1 >= delta sqrt(n)
    CHECK_THROWS_AS(oracle::tv_bound(badt), NumericalError);
}
