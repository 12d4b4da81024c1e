#ifndef ENVCALVI_ORACLE_MC_CHECKS_HPP
#define ENVCALVI_ORACLE_MC_CHECKS_HPP

#include <cstdint>

#include "envcalvi/linalg.hpp"

namespace envcalvi::oracle {

struct McEstimate {
    double estimate = 0.0;
    double mcse = 0.0;
};

enum class QuadKind { C, D };

// Monte-Carlo estimate of E[tr(C_A' C1 C_A C2)] (kind C) or the D_A analogue,
// with vec(A) ~ N(vec(A_hat), cov). Independent of the closed-form route it
// is used to check.
McEstimate mc_gaussian_quadratic(const Matrix& c1, const Matrix& c2, const Matrix& a_hat,
                                 const Matrix& cov, QuadKind kind, int draws,
                                 std::uint64_t seed);

} // namespace envcalvi::oracle

#endif
