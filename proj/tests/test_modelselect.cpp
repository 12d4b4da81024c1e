#include <doctest.h>

#include <cmath>

#include "envcalvi/modelselect.hpp"
#include "envcalvi/rng.hpp"
#include "envcalvi/simgen.hpp"

using namespace envcalvi;

TEST_CASE("bic formula") {
    CHECK(bic(0.0, 0, 10) == 0.0);
    CHECK(bic(-50.0, 10, std::exp(2.0)) == doctest::Approx(120.0).epsilon(1e-12));
    CHECK(response_param_count(20, 7, 2) == 244);
    CHECK(predictor_param_count(3, 15, 2) == 3 + 15 + 6 + 120 + 6);
}

TEST_CASE("dimension posterior softmax behavior") {
    const std::vector<int> dims = {1, 2, 3};
    const std::vector<double> ll = {0.0, 0.0, 0.0};

    const DimensionPosterior equal = dim_posterior(dims, ll, {5.0, 5.0, 5.0});
    for (double p : equal.probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    // Shift invariance.
    Rng rng(71);
    std::vector<double> bics = {rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0, 50)};
    std::vector<double> shifted = bics;
    for (double& b : shifted) b += 123.456;
    const DimensionPosterior a = dim_posterior(dims, ll, bics);
    const DimensionPosterior b = dim_posterior(dims, ll, shifted);
    for (size_t i = 0; i < 3; ++i) CHECK(std::abs(a.probs[i] - b.probs[i]) <= 1e-14);

    // Two candidates at exp(0) : exp(-log 9).
    const DimensionPosterior c =
        dim_posterior({0, 1}, {0.0, 0.0}, {0.0, 2.0 * std::log(9.0)});
    CHECK(c.probs[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(c.probs[1] == doctest::Approx(0.1).epsilon(1e-12));

    // Probabilities always sum to one.
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> bb = {rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3),
                                  rng.uniform(-1e3, 1e3)};
        const DimensionPosterior d = dim_posterior(dims, ll, bb);
        double total = 0.0;
        for (double p : d.probs) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }

    CHECK_THROWS_AS(dim_posterior({}, {}, {}), InputError);
}

TEST_CASE("model averaging of coefficients") {
    Rng rng(72);
    Matrix b1(2, 2), b2(2, 2);
    b1 << 1, 2, 3, 4;
    b2 << -1, 0, 1, 2;

    CHECK((bma_beta({b1}, {1.0}) - b1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((bma_beta({b1, b1}, {0.3, 0.7}) - b1).cwiseAbs().maxCoeff() <= 1e-15);

    const double w = rng.uniform(0.0, 1.0);
    const Matrix mix = bma_beta({b1, b2}, {w, 1.0 - w});
    CHECK((mix - (w * b1 + (1.0 - w) * b2)).cwiseAbs().maxCoeff() <= 1e-14);
    // Convexity: every entry lies between the per-model extremes.
    for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) {
            CHECK(mix(i, j) >= std::min(b1(i, j), b2(i, j)) - 1e-14);
            CHECK(mix(i, j) <= std::max(b1(i, j), b2(i, j)) + 1e-14);
        }
    }
}

TEST_CASE("mean squared error of coefficients") {
    Matrix b(2, 3);
    b << 1, 2, 3, 4, 5, 6;
    CHECK(mse_beta(b, b) == 0.0);
    Matrix b2 = b;
    b2(1, 2) += 1.0;
    CHECK(mse_beta(b2, b) == doctest::Approx(1.0));
    Rng rng(73);
    Matrix d(2, 3);
    for (Index j = 0; j < 3; ++j) {
        for (Index i = 0; i < 2; ++i) d(i, j) = rng.uniform(-1, 1);
    }
    double naive = 0.0;
    for (Index j = 0; j < 3; ++j) {
        for (Index i = 0; i < 2; ++i) naive += d(i, j) * d(i, j);
    }
    CHECK(mse_beta(b + d, b) == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("boundary log likelihoods") {
    const ResponseEnvSpec spec{3, 2, 1};
    auto [ds, truth] = gen_response(spec, 80, 2026);
    const double ll0 = response_boundary_loglik(ds, 0);
    const double llr = response_boundary_loglik(ds, 3);
    CHECK(std::isfinite(ll0));
    CHECK(llr >= ll0); // regression cannot lower the maximized likelihood
    CHECK_THROWS_AS(response_boundary_loglik(ds, 1), InputError);
}

TEST_CASE("dimension selection recovers an easy truth and is schedule independent") {
    const ResponseEnvSpec spec{5, 2, 2};
    auto [ds, truth] = gen_response(spec, 400, 3030);
    const ResponseEnvSpec base{5, 2, 0};
    FitOptions opts;
    const ResponseSelection s1 = select_response(ds, base, nullptr, 0, 5, {}, opts, 1);
    const ResponseSelection s4 = select_response(ds, base, nullptr, 0, 5, {}, opts, 4);

    double total = 0.0;
    for (double p : s1.posterior.probs) total += p;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(s1.posterior.mode() == 2);

    REQUIRE(s1.posterior.probs.size() == s4.posterior.probs.size());
    for (size_t i = 0; i < s1.posterior.probs.size(); ++i) {
        CHECK(s1.posterior.bics[i] == s4.posterior.bics[i]);
        CHECK(s1.posterior.probs[i] == s4.posterior.probs[i]);
    }
    CHECK((s1.beta_bma - s4.beta_bma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual bootstrap determinism and near-noiseless behavior") {
    const ResponseEnvSpec spec{3, 2, 1};
    ResponseGenRanges ranges;
    ranges.omega_lo = 1e-4;
    ranges.omega_hi = 2e-4;
    ranges.omega0_lo = 1e-4;
    ranges.omega0_hi = 2e-4;
    auto [ds, truth] = gen_response(spec, 60, 4040, ranges);
    const ResponsePriors pr = ResponsePriors::vague(spec);
    const FitReport rep = fit(ds, spec, pr);
    REQUIRE(rep.converged);

    const BootstrapResult b1 = residual_bootstrap(ds, spec, pr, rep, 5, 11u, {}, 1);
    const BootstrapResult b2 = residual_bootstrap(ds, spec, pr, rep, 5, 11u, {}, 2);
    CHECK(b1.rmse == b2.rmse); // independent of thread count
    CHECK(b1.failures == 0);
    CHECK(b1.rmse < 1e-2); // residuals are tiny, so replicates barely move
}

TEST_CASE("residual bootstrap matches an independent reimplementation") {
    const ResponseEnvSpec spec{3, 2, 1};
    auto [ds, truth] = gen_response(spec, 50, 5050);
    const ResponsePriors pr = ResponsePriors::vague(spec);
    const FitReport rep = fit(ds, spec, pr);
    REQUIRE(rep.converged);

    const int B = 50;
    const std::uint64_t seed = 77u;
    const BootstrapResult fast = residual_bootstrap(ds, spec, pr, rep, B, seed, {}, 2);

    // Re-run the loop from its definition.
    const Matrix fitted =
        (ds.X * rep.beta_hat.transpose()).rowwise() + rep.mu_hat.transpose();
    const Matrix resid = ds.Y - fitted;
    double total = 0.0;
    int kept = 0;
    for (int b = 0; b < B; ++b) {
        Rng rng(seed ^ static_cast<std::uint64_t>(b));
        Matrix ystar = fitted;
        for (Index i = 0; i < ds.n(); ++i) {
            const Index pick =
                static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(ds.n()));
            ystar.row(i) += resid.row(pick);
        }
        const FitReport rb = fit(Dataset(std::move(ystar), ds.X), spec, pr, {});
        total += (rb.beta_hat - rep.beta_hat).squaredNorm() /
                 static_cast<double>(spec.r * spec.p);
        ++kept;
    }
    const double rmse = std::sqrt(total / kept);
    CHECK(fast.failures == 0);
    CHECK(fast.rmse == doctest::Approx(rmse).epsilon(1e-12));
}
