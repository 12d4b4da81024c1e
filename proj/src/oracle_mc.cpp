#include "envcalvi/oracle/mc_checks.hpp"

#include <cmath>

#include "envcalvi/response_model.hpp"
#include "envcalvi/rng.hpp"

namespace envcalvi::oracle {

McEstimate mc_gaussian_quadratic(const Matrix& c1, const Matrix& c2, const Matrix& a_hat,
                                 const Matrix& cov, QuadKind kind, int draws,
                                 std::uint64_t seed) {
    if (draws < 2) throw InputError("mc_gaussian_quadratic: need draws >= 2");
    const Index d = a_hat.size();
    Matrix chol = Matrix::Zero(d, d);
    if (cov.cwiseAbs().maxCoeff() > 0.0) {
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("mc_gaussian_quadratic: covariance not positive definite");
        }
        chol = llt.matrixL();
    }
    Rng rng(seed);
    const Vector mean = vec(a_hat);
    // Accumulate moments around the first draw so identical values give an
    // exactly zero variance.
    double shift = 0.0, sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const Vector va = rng.normal_from_chol(mean, chol);
        const Matrix a = unvec(va, a_hat.rows(), a_hat.cols());
        const Matrix side = (kind == QuadKind::C) ? make_CA(a) : make_DA(a);
        const double val = (side.transpose() * c1 * side * c2).trace();
        if (i == 0) shift = val;
        sum += val - shift;
        sumsq += (val - shift) * (val - shift);
    }
    McEstimate out;
    const double mean_shifted = sum / draws;
    out.estimate = shift + mean_shifted;
    const double var = std::max(0.0, sumsq / draws - mean_shifted * mean_shifted);
    out.mcse = std::sqrt(var / draws);
    return out;
}

} // namespace envcalvi::oracle
