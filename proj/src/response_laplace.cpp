#include "envcalvi/response_laplace.hpp"

#include <cmath>
#include <sstream>

namespace envcalvi {

namespace {

// Coefficient matrices of the objective, assembled once per evaluation site.
struct Coeffs {
    Matrix P1;   // L'Gr1L, (r-u) x (r-u)
    Matrix Q2;   // K'Gr2K, u x u
    Matrix M1;   // K'Gr1L - eta_q Hmat L, u x (r-u)
    Matrix M2;   // K'Gr2L, u x (r-u)
};

Coeffs make_coeffs(const MomentBundle& mb) {
    const Index r = mb.r, u = mb.u;
    Coeffs c;
    c.P1 = mb.Gr1.bottomRightCorner(r - u, r - u);
    c.Q2 = mb.Gr2.topLeftCorner(u, u);
    c.M1 = mb.Gr1.topRightCorner(u, r - u) - mb.eta_q * mb.Hmat.rightCols(r - u);
    c.M2 = mb.Gr2.topRightCorner(u, r - u);
    return c;
}

void check_dims(const Matrix& a, const MomentBundle& mb) {
    if (a.rows() != mb.r - mb.u || a.cols() != mb.u) {
        throw InputError("ftilde: A has wrong dimensions for the bundle");
    }
}

} // namespace

MomentBundle MomentBundle::zeroed(Index r, Index u, double kappa) {
    MomentBundle mb;
    mb.r = r;
    mb.u = u;
    mb.kappa = kappa;
    mb.W1 = Matrix::Zero(u, u);
    mb.W0 = Matrix::Zero(r - u, r - u);
    mb.eta_q = Matrix::Zero(u, 0);
    mb.Gr1 = Matrix::Zero(r, r);
    mb.Gr2 = Matrix::Zero(r, r);
    mb.Hmat = Matrix::Zero(0, r);
    mb.A0 = Matrix::Zero(r - u, u);
    mb.U0inv = Matrix::Zero(r - u, r - u);
    mb.V0inv = Matrix::Zero(u, u);
    return mb;
}

double ftilde(const Matrix& a, const MomentBundle& mb) {
    check_dims(a, mb);
    const Index ru = mb.r - mb.u;
    const Coeffs c = make_coeffs(mb);
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    double val = 0.5 * mb.kappa * chol_logdet(j0);
    val -= 0.5 * (mb.W1 * a.transpose() * c.P1 * a).trace();
    val -= 0.5 * (c.Q2 * a.transpose() * mb.W0 * a).trace();
    val -= 0.5 * (mb.V0inv * a.transpose() * mb.U0inv * a).trace();
    val -= (mb.W1 * c.M1 * a).trace();
    val += (c.M2 * mb.W0 * a).trace();
    val += (mb.V0inv * mb.A0.transpose() * mb.U0inv * a).trace();
    return val;
}

double ftilde_const_terms(const MomentBundle& mb) {
    const Index u = mb.u;
    double val = -0.5 * (mb.Gr1.topLeftCorner(u, u) * mb.W1).trace();
    val += (mb.eta_q * mb.Hmat.leftCols(u) * mb.W1).trace();
    val -= 0.5 * (mb.Gr2.bottomRightCorner(mb.r - u, mb.r - u) * mb.W0).trace();
    val -= 0.5 * (mb.V0inv * mb.A0.transpose() * mb.U0inv * mb.A0).trace();
    return val;
}

Matrix grad_ftilde(const Matrix& a, const MomentBundle& mb) {
    check_dims(a, mb);
    const Index ru = mb.r - mb.u;
    const Coeffs c = make_coeffs(mb);
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    Matrix g = mb.kappa * chol_solve(j0, a);
    g -= c.P1 * a * mb.W1;
    g -= mb.W0 * a * c.Q2;
    g -= mb.U0inv * a * mb.V0inv;
    g -= c.M1.transpose() * mb.W1;
    g += mb.W0 * c.M2.transpose();
    g += mb.U0inv * mb.A0 * mb.V0inv;
    return g;
}

Matrix hess_ftilde(const Matrix& a, const MomentBundle& mb) {
    check_dims(a, mb);
    const Index u = mb.u, ru = mb.r - mb.u;
    const Coeffs c = make_coeffs(mb);
    const Matrix j0 = Matrix::Identity(ru, ru) + a * a.transpose();
    const Matrix j0inv_a = chol_solve(j0, a);
    const Matrix j0inv = chol_solve(j0, Matrix(Matrix::Identity(ru, ru)));
    Matrix h = mb.kappa *
               kron(Matrix::Identity(u, u) - a.transpose() * j0inv_a, j0inv);
    const Commutation k_ru_u(ru, u);
    h -= mb.kappa * k_ru_u.right_multiply(kron(j0inv_a.transpose(), j0inv_a));
    h -= kron(mb.W1, c.P1);
    h -= kron(c.Q2, mb.W0);
    h -= kron(mb.V0inv, mb.U0inv);
    return 0.5 * (h + h.transpose());
}

Matrix newton_maximize(const Matrix& init,
                       const std::function<double(const Matrix&)>& ffun,
                       const std::function<Matrix(const Matrix&)>& gradfun,
                       const std::function<Matrix(const Matrix&)>& hessfun,
                       const NewtonOptions& opts) {
    if (!init.allFinite()) throw InputError("newton_maximize: init not finite");
    const Index d = init.size();

    Matrix a = init;
    double f = ffun(a);
    Matrix g = gradfun(a);

    const auto converged = [&](double fval, const Matrix& grad) {
        return grad.cwiseAbs().maxCoeff() <= opts.grad_tol * (1.0 + std::abs(fval));
    };

    for (int it = 0; it < opts.max_newton; ++it) {
        if (converged(f, g)) return a;

        const Vector gv = vec(g);
        const Matrix neg_h = -hessfun(a);

        // Newton, then Levenberg-shifted Newton, then steepest ascent.
        Vector dir;
        bool have_dir = false;
        Eigen::LLT<Matrix> llt(neg_h);
        if (llt.info() == Eigen::Success) {
            dir = llt.solve(gv);
            have_dir = dir.dot(gv) > 0.0;
        }
        if (!have_dir) {
            for (double tau = 1e-8; tau <= 1e12; tau *= 2.0) {
                Eigen::LLT<Matrix> shifted(
                    Matrix(neg_h + tau * Matrix::Identity(d, d)));
                if (shifted.info() != Eigen::Success) continue;
                dir = shifted.solve(gv);
                if (dir.dot(gv) > 0.0) {
                    have_dir = true;
                    break;
                }
            }
        }
        if (!have_dir) dir = gv;

        // Backtracking line search with the Armijo condition, slackened by
        // the rounding noise of f so that terminal-phase steps whose true
        // improvement is below double precision still pass. If the
        // second-order direction makes no resolvable progress, retry along
        // the gradient.
        const double noise = 1e-12 * (1.0 + std::abs(f));
        bool accepted = false;
        Matrix a_new;
        double f_new = f;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            if (attempt == 1) {
                if (dir == gv) break;
                dir = gv;
            }
            const double slope = dir.dot(gv);
            double step = 1.0;
            for (int ls = 0; ls < 60; ++ls) {
                a_new = a + step * unvec(dir, a.rows(), a.cols());
                if (a_new == a) break; // step shrank below representable movement
                f_new = ffun(a_new);
                if (std::isfinite(f_new) &&
                    (!opts.line_search || f_new >= f + 1e-4 * step * slope - noise)) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if (!accepted) {
            // No direction yields an improvement resolvable above the
            // rounding noise of f: the iterate is numerically stationary.
            // Accept it when the gradient is small on the problem scale,
            // otherwise report the breakdown.
            if (g.cwiseAbs().maxCoeff() <= 1e-4 * (1.0 + std::abs(f))) return a;
            throw NewtonFailure("newton_maximize: line search failed",
                                a, g.cwiseAbs().maxCoeff());
        }
        a = a_new;
        f = f_new;
        g = gradfun(a);
    }
    if (converged(f, g)) return a;
    // Same numerical-stationarity escape as the stalled line search: noisy
    // flat ridges keep accepting noise-level steps without ever reaching the
    // nominal gradient tolerance.
    if (g.cwiseAbs().maxCoeff() <= 1e-4 * (1.0 + std::abs(f))) return a;
    std::ostringstream os;
    os << "newton_maximize: no convergence after " << opts.max_newton
       << " iterations (grad inf-norm " << g.cwiseAbs().maxCoeff() << ")";
    throw NewtonFailure(os.str(), a, g.cwiseAbs().maxCoeff());
}

Matrix maximize_ftilde(const Matrix& init, const MomentBundle& mb,
                       const NewtonOptions& opts) {
    check_dims(init, mb);
    return newton_maximize(
        init, [&](const Matrix& a) { return ftilde(a, mb); },
        [&](const Matrix& a) { return grad_ftilde(a, mb); },
        [&](const Matrix& a) { return hess_ftilde(a, mb); }, opts);
}

LaplaceFactor LaplaceFactor::degenerate(const Matrix& a) {
    LaplaceFactor lf;
    lf.A_hat = a;
    lf.mean_vecA = vec(a);
    lf.cov = Matrix::Zero(a.size(), a.size());
    return lf;
}

Matrix LaplaceFactor::cov_transposed() const {
    const Commutation k(A_hat.rows(), A_hat.cols());
    return k.conjugate(cov);
}

LaplaceFactor laplace_from_hessian(const Matrix& a_hat, const Matrix& hess) {
    Eigen::LLT<Matrix> llt(Matrix(-hess));
    if (llt.info() != Eigen::Success) {
        throw NumericalError(
            "laplace_factor: Hessian at the mode is not negative definite; "
            "curvature assumption violated");
    }
    LaplaceFactor lf;
    lf.A_hat = a_hat;
    lf.mean_vecA = vec(a_hat);
    lf.hessian_at_mode = hess;
    lf.cov = llt.solve(Matrix::Identity(hess.rows(), hess.cols()));
    lf.cov = 0.5 * (lf.cov + lf.cov.transpose());
    return lf;
}

LaplaceFactor laplace_factor(const Matrix& a_hat, const MomentBundle& mb) {
    return laplace_from_hessian(a_hat, hess_ftilde(a_hat, mb));
}

} // namespace envcalvi
