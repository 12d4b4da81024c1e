#include "envcalvi/oracle/euclid.hpp"

#include <algorithm>
#include <chrono>
#include <vector>

#include "envcalvi/response_laplace.hpp"
#include "envcalvi/rng.hpp"

namespace envcalvi::oracle {

namespace {

struct Pieces {
    Matrix f;  // (U'U)^{-1/2}
    Matrix p;  // (U'U)^{-1}
    Matrix q;  // Kronecker sum, k^2 x k^2
    Matrix rr; // k^2 x rk
};

Pieces make_pieces(const Matrix& u) {
    const Index k = u.cols(), r = u.rows();
    Pieces pc;
    const Matrix j = u.transpose() * u;
    pc.f = sym_invsqrt(j);
    pc.p = chol_solve(j, Matrix(Matrix::Identity(k, k)));
    pc.q = kron(pc.f, Matrix::Identity(k, k)) + kron(Matrix::Identity(k, k), pc.f);
    const Matrix put = pc.p * u.transpose(); // k x r
    const Commutation krk(r, k);
    pc.rr = kron(pc.p, put) + krk.right_multiply(kron(put, pc.p));
    return pc;
}

} // namespace

Matrix euclid_invsqrt_jacobian(const Matrix& u) {
    const Pieces pc = make_pieces(u);
    return -chol_solve(pc.q, pc.rr);
}

Matrix euclid_invsqrt_second(const Matrix& u, const Matrix& du) {
    const Index k = u.cols(), r = u.rows();
    const Pieces pc = make_pieces(u);
    const Matrix dj = u.transpose() * du + du.transpose() * u;
    const Matrix dp = -pc.p * dj * pc.p;
    const Matrix df = unvec(Vector(-chol_solve(pc.q, vec(Matrix(pc.p * dj * pc.p)))), k, k);
    const Matrix dq = kron(df, Matrix::Identity(k, k)) + kron(Matrix::Identity(k, k), df);
    const Matrix put = pc.p * u.transpose();
    const Matrix dput = dp * u.transpose() + pc.p * du.transpose();
    const Commutation krk(r, k);
    const Matrix dr = kron(dp, put) + kron(pc.p, dput) +
                      krk.right_multiply(Matrix(kron(dput, pc.p) + kron(put, dp)));
    return chol_solve(pc.q, Matrix(dq * chol_solve(pc.q, pc.rr) - dr));
}

BenchResult bench_derivatives(Index r, Index u, int reps) {
    if (reps < 1) throw InputError("bench_derivatives: need reps >= 1");
    Rng rng(20240517u + static_cast<std::uint64_t>(r * 1000 + u));
    Matrix a(r - u, u);
    for (Index j = 0; j < u; ++j) {
        for (Index i = 0; i < r - u; ++i) a(i, j) = rng.uniform(-1.0, 1.0);
    }

    // A plausible moment bundle at this size for the reparameterized route.
    MomentBundle mb = MomentBundle::zeroed(r, u, 2.0 * 100 + 4.0);
    Matrix g1(r, r), g2(r, r);
    for (Index j = 0; j < r; ++j) {
        for (Index i = 0; i < r; ++i) {
            g1(i, j) = rng.uniform(-1.0, 1.0);
            g2(i, j) = rng.uniform(-1.0, 1.0);
        }
    }
    mb.Gr1 = g1 * g1.transpose() + static_cast<double>(r) * Matrix::Identity(r, r);
    mb.Gr2 = g2 * g2.transpose() + static_cast<double>(r) * Matrix::Identity(r, r);
    mb.W1 = Matrix::Identity(u, u);
    mb.W0 = Matrix::Identity(r - u, r - u);
    mb.U0inv = Matrix::Identity(r - u, r - u);
    mb.V0inv = Matrix::Identity(u, u);
    mb.eta_q = Matrix::Zero(u, 1);
    mb.Hmat = Matrix::Zero(1, r);
    mb.A0 = Matrix::Zero(r - u, u);

    const Matrix ca = make_CA(a);
    const Matrix da = make_DA(a);

    std::vector<double> euclid_times, reparam_times;
    volatile double sink = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        auto t0 = std::chrono::steady_clock::now();
        const Matrix jc = euclid_invsqrt_jacobian(ca);
        const Matrix jd = euclid_invsqrt_jacobian(da);
        auto t1 = std::chrono::steady_clock::now();
        sink += jc(0, 0) + jd(0, 0);
        euclid_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        t0 = std::chrono::steady_clock::now();
        const Matrix h = hess_ftilde(a, mb);
        t1 = std::chrono::steady_clock::now();
        sink += h(0, 0);
        reparam_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    (void)sink;
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    return {median(euclid_times), median(reparam_times)};
}

} // namespace envcalvi::oracle
