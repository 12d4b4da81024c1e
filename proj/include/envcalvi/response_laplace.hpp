#ifndef ENVCALVI_RESPONSE_LAPLACE_HPP
#define ENVCALVI_RESPONSE_LAPLACE_HPP

#include <functional>

#include "envcalvi/linalg.hpp"
#include "envcalvi/response_model.hpp"

namespace envcalvi {

// Everything the A-coordinate objective needs from the other variational
// factors, the data and the priors. W1 and W0 are the expected precisions
// of the material / immaterial covariance factors.
struct MomentBundle {
    Index r = 0;
    Index u = 0;
    double kappa = 0.0; // 2n + nu1 + nu0
    Matrix W1;          // u x u, symmetric PSD
    Matrix W0;          // (r-u) x (r-u), symmetric PSD
    Matrix eta_q;       // u x p
    Matrix Gr1;         // r x r
    Matrix Gr2;         // r x r
    Matrix Hmat;        // p x r
    Matrix A0;          // (r-u) x u
    Matrix U0inv;       // (r-u) x (r-u)
    Matrix V0inv;       // u x u

    static MomentBundle zeroed(Index r, Index u, double kappa);
};

// Objective for the A block, up to an additive constant:
//   (kappa/2) log|I + AA'|
//   - 1/2 tr(W1 A' L'Gr1L A) - 1/2 tr(K'Gr2K A' W0 A) - 1/2 tr(V0inv A' U0inv A)
//   - tr(W1 (K'Gr1L - eta_q Hmat L) A) + tr(K'Gr2L W0 A) + tr(V0inv A0' U0inv A)
double ftilde(const Matrix& a, const MomentBundle& mb);
Matrix grad_ftilde(const Matrix& a, const MomentBundle& mb);
// Hessian with respect to vec(A), dimension (r-u)u.
Matrix hess_ftilde(const Matrix& a, const MomentBundle& mb);

// The A-free terms dropped from ftilde; needed when the objective value is
// combined into the full variational bound.
double ftilde_const_terms(const MomentBundle& mb);

struct NewtonOptions {
    double grad_tol = 1e-8; // scaled by (1 + |ftilde|)
    int max_newton = 200;
    bool line_search = true;
};

class NewtonFailure : public NumericalError {
public:
    NewtonFailure(const std::string& msg, Matrix last, double gnorm)
        : NumericalError(msg), last_iterate(std::move(last)), grad_norm(gnorm) {}
    Matrix last_iterate;
    double grad_norm;
};

// Maximize ftilde by Newton steps with Armijo backtracking. When the Newton
// direction is not an ascent direction, retry with a Levenberg shift
// (tau I added to the negated Hessian, tau doubling from 1e-8), then fall
// back to gradient ascent.
Matrix maximize_ftilde(const Matrix& init, const MomentBundle& mb,
                       const NewtonOptions& opts = {});

// The same ascent routine over an arbitrary matrix-argument objective.
Matrix newton_maximize(const Matrix& init,
                       const std::function<double(const Matrix&)>& f,
                       const std::function<Matrix(const Matrix&)>& grad,
                       const std::function<Matrix(const Matrix&)>& hess,
                       const NewtonOptions& opts = {});

// Gaussian factor over vec(A) centered at the objective maximizer with
// covariance equal to the negated inverse Hessian.
struct LaplaceFactor {
    Vector mean_vecA;
    Matrix cov;              // (r-u)u x (r-u)u
    Matrix A_hat;            // (r-u) x u
    Matrix hessian_at_mode;  // not set for degenerate factors

    // Point mass at a, used only to seed the first sweep.
    static LaplaceFactor degenerate(const Matrix& a);
    // Covariance of vec(A') under this factor.
    Matrix cov_transposed() const;
};

LaplaceFactor laplace_factor(const Matrix& a_hat, const MomentBundle& mb);
LaplaceFactor laplace_from_hessian(const Matrix& a_hat, const Matrix& hess);

} // namespace envcalvi

#endif
