#include "envcalvi/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace envcalvi {

Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unvec(const Vector& v, Index rows, Index cols) {
    if (v.size() != rows * cols) {
        throw InputError("unvec: size mismatch");
    }
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Matrix ktr(const Matrix& r, const Matrix& b) {
    const Index d = r.rows();
    if (r.cols() != d) throw InputError("ktr: R must be square");
    if (b.rows() != b.cols()) throw InputError("ktr: B must be square");
    if (d == 0 || b.rows() % d != 0) {
        throw InputError("ktr: B dimension not divisible by block size");
    }
    const Index n = b.rows() / d;
    Matrix out(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            out(i, j) = r.cwiseProduct(b.block(i * d, j * d, d, d).transpose()).sum();
        }
    }
    return out;
}

Commutation::Commutation(Index m, Index n) : m_(m), n_(n), to_(static_cast<size_t>(m * n)) {
    if (m < 1 || n < 1) throw InputError("commutation: dimensions must be >= 1");
    // vec(A) index i + j*m maps to vec(A^T) index j + i*n.
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < m; ++i) {
            to_[static_cast<size_t>(i + j * m)] = j + i * n;
        }
    }
}

Vector Commutation::apply(const Vector& v) const {
    if (v.size() != size()) throw InputError("commutation apply: size mismatch");
    Vector out(size());
    for (Index i = 0; i < size(); ++i) out(to_[static_cast<size_t>(i)]) = v(i);
    return out;
}

Matrix Commutation::conjugate(const Matrix& s) const {
    if (s.rows() != size() || s.cols() != size()) {
        throw InputError("commutation conjugate: size mismatch");
    }
    Matrix out(size(), size());
    for (Index j = 0; j < size(); ++j) {
        const Index pj = to_[static_cast<size_t>(j)];
        for (Index i = 0; i < size(); ++i) {
            out(to_[static_cast<size_t>(i)], pj) = s(i, j);
        }
    }
    return out;
}

Matrix Commutation::right_multiply(const Matrix& m) const {
    if (m.cols() != size()) throw InputError("commutation right_multiply: size mismatch");
    Matrix out(m.rows(), size());
    for (Index c = 0; c < size(); ++c) {
        out.col(c) = m.col(to_[static_cast<size_t>(c)]);
    }
    return out;
}

Matrix Commutation::dense() const {
    Matrix out = Matrix::Zero(size(), size());
    for (Index i = 0; i < size(); ++i) out(to_[static_cast<size_t>(i)], i) = 1.0;
    return out;
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> spd_eigen(const Matrix& s, const char* who) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) {
        throw NumericalError(std::string(who) + ": eigendecomposition failed");
    }
    if (s.rows() > 0 && es.eigenvalues().minCoeff() <= 0.0) {
        std::ostringstream os;
        os << who << ": matrix not positive definite (min eigenvalue "
           << es.eigenvalues().minCoeff() << ")";
        throw NumericalError(os.str());
    }
    return es;
}

} // namespace

Matrix sym_sqrt(const Matrix& s) {
    auto es = spd_eigen(s, "sym_sqrt");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

Matrix sym_invsqrt(const Matrix& s) {
    auto es = spd_eigen(s, "sym_invsqrt");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

double chol_logdet(const Matrix& s) {
    if (s.rows() == 0) return 0.0;
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("chol_logdet: matrix not positive definite");
    }
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix chol_solve(const Matrix& s, const Matrix& b) {
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("chol_solve: matrix not positive definite");
    }
    return llt.solve(b);
}

bool is_spd(const Matrix& s) {
    if (s.rows() != s.cols()) return false;
    if (s.rows() == 0) return true;
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + s.cwiseAbs().maxCoeff())) {
        return false;
    }
    Eigen::LLT<Matrix> llt(Matrix(0.5 * (s + s.transpose())));
    if (llt.info() == Eigen::Success) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

SpdMatrix::SpdMatrix(Matrix m) {
    if (m.rows() != m.cols()) throw InputError("SpdMatrix: not square");
    const double scale = m.cwiseAbs().maxCoeff();
    const double defect = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (m.rows() > 0 && defect > 1e-10 * (1.0 + scale)) {
        throw InputError("SpdMatrix: symmetry defect too large");
    }
    m_ = 0.5 * (m + m.transpose());
    if (m_.rows() == 0) return;
    Eigen::LLT<Matrix> llt(m_);
    if (llt.info() != Eigen::Success) {
        // Cholesky can fail on barely-positive matrices; fall back to eigenvalues.
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_);
        if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
            throw NumericalError("SpdMatrix: matrix not positive definite");
        }
    }
}

SpdMatrix SpdMatrix::identity(Index d) { return SpdMatrix(Matrix::Identity(d, d)); }

SpdMatrix SpdMatrix::scaled_identity(Index d, double s) {
    return SpdMatrix(Matrix(s * Matrix::Identity(d, d)));
}

SpdMatrix sqrt_spd(const SpdMatrix& s) { return SpdMatrix(sym_sqrt(s.mat())); }

SpdMatrix invsqrt_spd(const SpdMatrix& s) { return SpdMatrix(sym_invsqrt(s.mat())); }

double logdet_spd(const SpdMatrix& s) { return chol_logdet(s.mat()); }

Matrix solve_spd(const SpdMatrix& s, const Matrix& b) { return chol_solve(s.mat(), b); }

} // namespace envcalvi
