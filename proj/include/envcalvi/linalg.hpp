#ifndef ENVCALVI_LINALG_HPP
#define ENVCALVI_LINALG_HPP

#include <Eigen/Dense>
#include <vector>

#include "envcalvi/errors.hpp"

namespace envcalvi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Column-wise vectorization. Column-major order is fixed globally; every
// Kronecker identity below assumes it.
Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, Index rows, Index cols);

// Dense Kronecker product.
Matrix kron(const Matrix& a, const Matrix& b);

// Block-trace (Kronecker-trace) operator. B is a dn x dn matrix viewed as an
// n x n grid of d x d blocks; entry (i,j) of the result is tr(R * B_ij).
// Satisfies tr[(S (x) R) H] = tr(S * ktr(R, H)).
Matrix ktr(const Matrix& r, const Matrix& b);

// Commutation matrix K_{m,n}, stored as an index permutation rather than a
// dense matrix. For any m x n matrix A, K_{m,n} vec(A) = vec(A^T).
class Commutation {
public:
    Commutation(Index m, Index n);

    Index size() const { return m_ * n_; }

    // K v
    Vector apply(const Vector& v) const;
    // K S K^T (re-indexing, no multiplication)
    Matrix conjugate(const Matrix& s) const;
    // M K (column permutation of M)
    Matrix right_multiply(const Matrix& m) const;
    // Dense view, for tests and small assemblies.
    Matrix dense() const;

private:
    Index m_, n_;
    std::vector<Index> to_; // (K v)[to_[i]] = v[i]
};

// Workers on plain matrices. Inputs are assumed symmetric; positive
// definiteness is checked and NumericalError is thrown on violation.
Matrix sym_sqrt(const Matrix& s);
Matrix sym_invsqrt(const Matrix& s);
double chol_logdet(const Matrix& s);
Matrix chol_solve(const Matrix& s, const Matrix& b);
bool is_spd(const Matrix& s);

// Symmetric positive definite matrix with validated construction:
// the input is symmetrized (relative defect up to 1e-10 allowed) and
// positive definiteness is checked via Cholesky with an eigenvalue
// fallback for near-singular cases.
class SpdMatrix {
public:
    explicit SpdMatrix(Matrix m);
    static SpdMatrix identity(Index d);
    static SpdMatrix scaled_identity(Index d, double s);

    Index dim() const { return m_.rows(); }
    const Matrix& mat() const { return m_; }

private:
    Matrix m_;
};

SpdMatrix sqrt_spd(const SpdMatrix& s);
SpdMatrix invsqrt_spd(const SpdMatrix& s);
double logdet_spd(const SpdMatrix& s);
Matrix solve_spd(const SpdMatrix& s, const Matrix& b);

} // namespace envcalvi

#endif
