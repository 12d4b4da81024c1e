#include "envcalvi/oracle/tv_bound.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace envcalvi::oracle {

namespace {

double min_eigenvalue(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("tv_bound: eigensolver failed");
    return es.eigenvalues().minCoeff();
}

double op_norm_spd(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("tv_bound: eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace

TvBoundResult tv_bound(const TvBoundInputs& inp) {
    const Index d1 = inp.d1;
    if (inp.n <= 0 || d1 < 1) throw InputError("tv_bound: need n > 0 and d1 >= 1");
    if (inp.H_f.rows() != d1 || inp.H_l.rows() != d1) {
        throw InputError("tv_bound: Hessian dimensions do not match d1");
    }
    if (inp.delta_hat <= 0 || inp.delta_bar <= 0 || inp.M1_hat <= 0 || inp.M1_bar <= 0 ||
        inp.M2_bar <= 0 || inp.kappa_hat <= 0) {
        throw InputError("tv_bound: constants must be positive");
    }

    const Matrix hf_inv = chol_solve(inp.H_f, Matrix(Matrix::Identity(d1, d1)));
    const double lam_min = min_eigenvalue(inp.H_f);
    if (lam_min <= inp.delta_hat * inp.M1_hat) {
        std::ostringstream os;
        os << "tv_bound: curvature condition violated: lambda_min(H_f) = " << lam_min
           << " <= delta_hat * M1_hat = " << inp.delta_hat * inp.M1_hat;
        throw NumericalError(os.str());
    }
    const double tr_hf_inv = hf_inv.trace();
    if (std::sqrt(tr_hf_inv) >= inp.delta_hat * std::sqrt(inp.n)) {
        std::ostringstream os;
        os << "tv_bound: trace-root condition violated at the posterior maximizer: "
           << "sqrt(tr(H_f^-1)/n) = " << std::sqrt(tr_hf_inv / inp.n)
           << " >= delta_hat = " << inp.delta_hat;
        throw NumericalError(os.str());
    }

    const Matrix j = inp.H_l + (inp.M1_bar * inp.delta_bar / 3.0) * Matrix::Identity(d1, d1);
    const Matrix j_inv = chol_solve(j, Matrix(Matrix::Identity(d1, d1)));
    const double tr_j_inv = j_inv.trace();
    if (std::sqrt(tr_j_inv) >= inp.delta_bar * std::sqrt(inp.n)) {
        std::ostringstream os;
        os << "tv_bound: trace-root condition violated at the likelihood maximizer: "
           << "sqrt(tr(J^-1)/n) = " << std::sqrt(tr_j_inv / inp.n)
           << " >= delta_bar = " << inp.delta_bar;
        throw NumericalError(os.str());
    }

    TvBoundResult out;
    const double rootn = std::sqrt(inp.n);
    out.T_hat = -0.5 * std::pow(inp.delta_hat * rootn - std::sqrt(tr_hf_inv), 2.0) /
                op_norm_spd(hf_inv);
    out.T_bar_J = -0.5 * std::pow(inp.delta_bar * rootn - std::sqrt(tr_j_inv), 2.0) /
                  op_norm_spd(j_inv);
    out.C1 = std::sqrt(3.0) * tr_hf_inv * inp.M1_hat /
             (4.0 * std::sqrt((lam_min - inp.delta_hat * inp.M1_hat) *
                              (1.0 - std::exp(out.T_hat))));
    const double det_j_inv = std::exp(-chol_logdet(j)); // |det(J^{-1})|
    out.C2 = 2.0 * std::pow(det_j_inv, -0.5) * inp.M2_bar /
             (std::pow(2.0 * M_PI, 0.5 * d1) * (1.0 - std::exp(out.T_bar_J)));
    out.bound = out.C1 / rootn + 2.0 * std::exp(out.T_hat) +
                out.C2 * std::pow(inp.n, 0.5 * d1) * std::exp(-inp.n * inp.kappa_hat);
    return out;
}

double tv_bound_crossover(const TvBoundInputs& inp) {
    const Index d1 = inp.d1;
    const Matrix hf_inv = chol_solve(inp.H_f, Matrix(Matrix::Identity(d1, d1)));
    const Matrix j = inp.H_l + (inp.M1_bar * inp.delta_bar / 3.0) * Matrix::Identity(d1, d1);
    const Matrix j_inv = chol_solve(j, Matrix(Matrix::Identity(d1, d1)));
    // Each n-dependent term decreases once n clears the peak of
    // n^{d1/2} e^{-n kappa} and the two tail exponents become decreasing.
    double cross = static_cast<double>(d1) / (2.0 * inp.kappa_hat);
    cross = std::max(cross, hf_inv.trace() / (inp.delta_hat * inp.delta_hat));
    cross = std::max(cross, j_inv.trace() / (inp.delta_bar * inp.delta_bar));
    return cross;
}

} // namespace envcalvi::oracle
