#include <doctest.h>

#include "envcalvi/linalg.hpp"
#include "envcalvi/rng.hpp"

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

TEST_CASE("vec stacks columns left to right") {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    const Vector v = vec(m);
    CHECK(v(0) == 1.0);
    CHECK(v(1) == 3.0);
    CHECK(v(2) == 2.0);
    CHECK(v(3) == 4.0);

    Matrix one(1, 1);
    one << 5;
    CHECK(vec(one)(0) == 5.0);
}

TEST_CASE("vec/unvec round trip is exact bitwise") {
    Rng rng(11);
    const Matrix a = random_matrix(rng, 3, 2);
    const Matrix back = unvec(vec(a), 3, 2);
    for (Index j = 0; j < 2; ++j) {
        for (Index i = 0; i < 3; ++i) CHECK(back(i, j) == a(i, j));
    }
}

TEST_CASE("commutation basics") {
    CHECK(Commutation(1, 1).dense()(0, 0) == 1.0);
    CHECK((Commutation(2, 1).dense() - Matrix::Identity(2, 2)).norm() == 0.0);

    Rng rng(12);
    const Matrix a = random_matrix(rng, 3, 4);
    const Commutation k(3, 4);
    CHECK((k.apply(vec(a)) - vec(Matrix(a.transpose()))).cwiseAbs().maxCoeff() == 0.0);
    CHECK((k.dense() * vec(a) - vec(Matrix(a.transpose()))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("commutation transpose and inverse identities for all sizes up to 8") {
    for (Index m = 1; m <= 8; ++m) {
        for (Index n = 1; n <= 8; ++n) {
            const Matrix kmn = Commutation(m, n).dense();
            const Matrix knm = Commutation(n, m).dense();
            CHECK((kmn.transpose() - knm).cwiseAbs().maxCoeff() == 0.0);
            CHECK((kmn * knm - Matrix::Identity(m * n, m * n)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("commutation conjugate and right_multiply match the dense route") {
    Rng rng(13);
    const Index m = 3, n = 4;
    const Commutation k(m, n);
    const Matrix kd = k.dense();
    const Matrix s = random_matrix(rng, m * n, m * n);
    CHECK((k.conjugate(s) - kd * s * kd.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    const Matrix w = random_matrix(rng, 5, m * n);
    CHECK((k.right_multiply(w) - w * kd).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kron identity cases and the mixed-product rule") {
    CHECK((kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)) - Matrix::Identity(6, 6))
              .cwiseAbs()
              .maxCoeff() == 0.0);

    Matrix two(1, 1);
    two << 2.0;
    Rng rng(14);
    const Matrix b = random_matrix(rng, 3, 2);
    CHECK((kron(two, b) - 2.0 * b).cwiseAbs().maxCoeff() == 0.0);

    const Matrix a = random_matrix(rng, 2, 3);
    const Matrix c = random_matrix(rng, 3, 4);
    const Matrix bb = random_matrix(rng, 3, 5);
    const Matrix d = random_matrix(rng, 5, 2);
    const Matrix lhs = kron(a, bb) * kron(c, d);
    const Matrix rhs = kron(Matrix(a * c), Matrix(bb * d));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ktr trivial cases") {
    const Index d = 3, n = 4;
    CHECK((ktr(Matrix::Identity(d, d), Matrix::Identity(d * n, d * n)) -
           static_cast<double>(d) * Matrix::Identity(n, n))
              .cwiseAbs()
              .maxCoeff() == 0.0);

    Rng rng(15);
    Matrix r1(1, 1);
    r1 << 0.7;
    const Matrix b = random_matrix(rng, 5, 5);
    CHECK((ktr(r1, b) - 0.7 * b).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(ktr(Matrix::Identity(3, 3), Matrix::Identity(7, 7)), InputError);
}

TEST_CASE("ktr satisfies the block-trace identity on 200 random instances") {
    Rng rng(16);
    for (int rep = 0; rep < 200; ++rep) {
        const Index d = 1 + static_cast<Index>(rng.next_u64() % 4);
        const Index n = 1 + static_cast<Index>(rng.next_u64() % 4);
        Matrix s = random_matrix(rng, n, n);
        s = 0.5 * (s + s.transpose());
        const Matrix r = random_matrix(rng, d, d);
        const Matrix h = random_matrix(rng, d * n, d * n);
        const double lhs = (kron(s, r) * h).trace();
        const double rhs = (s * ktr(r, h)).trace();
        CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));
    }
}

TEST_CASE("spd square roots") {
    CHECK((invsqrt_spd(SpdMatrix::identity(3)).mat() - Matrix::Identity(3, 3)).norm() < 1e-14);
    CHECK((invsqrt_spd(SpdMatrix::scaled_identity(3, 4.0)).mat() - 0.5 * Matrix::Identity(3, 3))
              .norm() < 1e-14);

    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const SpdMatrix s(random_spd(rng, 4));
        const Matrix root = sqrt_spd(s).mat();
        CHECK((root * root - s.mat()).norm() / s.mat().norm() <= 1e-12);
        CHECK((root - root.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const Matrix iroot = invsqrt_spd(s).mat();
        CHECK((iroot * s.mat() * iroot - Matrix::Identity(4, 4)).norm() < 1e-11);
        CHECK((iroot - iroot.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }

    Matrix indef = Matrix::Identity(2, 2);
    indef(1, 1) = -1.0;
    CHECK_THROWS_AS(sym_sqrt(indef), NumericalError);
}

TEST_CASE("logdet and solve") {
    CHECK(logdet_spd(SpdMatrix::identity(4)) == 0.0);
    Matrix d23 = Matrix::Zero(2, 2);
    d23(0, 0) = 2.0;
    d23(1, 1) = 3.0;
    CHECK(logdet_spd(SpdMatrix(d23)) == doctest::Approx(std::log(6.0)).epsilon(1e-14));

    Rng rng(18);
    const SpdMatrix s(random_spd(rng, 5));
    CHECK((solve_spd(s, s.mat()) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(chol_logdet(Matrix(-Matrix::Identity(2, 2))), NumericalError);
}

TEST_CASE("SpdMatrix construction validates") {
    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(SpdMatrix{asym}, InputError);

    Matrix neg = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(SpdMatrix{neg}, NumericalError);
}
