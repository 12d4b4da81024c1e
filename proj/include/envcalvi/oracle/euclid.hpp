#ifndef ENVCALVI_ORACLE_EUCLID_HPP
#define ENVCALVI_ORACLE_EUCLID_HPP

#include "envcalvi/linalg.hpp"

namespace envcalvi::oracle {

// Jacobian of vec((U'U)^{-1/2}) with respect to vec(U) for full-column-rank
// U (r x k): -Q(U)^{-1} R(U) with the Kronecker-sum
//   Q(U) = F (x) I_k + I_k (x) F,          F = (U'U)^{-1/2},
//   R(U) = P (x) PU' + (PU' (x) P) K_{r,k}, P = (U'U)^{-1}.
// This is the direct differentiation route whose k^2 x k^2 solves dominate
// the cost of the non-reparameterized coordinate update.
Matrix euclid_invsqrt_jacobian(const Matrix& u);

// Directional derivative of that Jacobian along dU.
Matrix euclid_invsqrt_second(const Matrix& u, const Matrix& du);

struct BenchResult {
    double euclid_ms = 0.0;  // assembling both inverse-square-root Jacobians
    double reparam_ms = 0.0; // assembling the reparameterized Hessian
};

// Median wall-clock over `reps` runs at the given (r, u) on a fixed synthetic
// instance.
BenchResult bench_derivatives(Index r, Index u, int reps);

} // namespace envcalvi::oracle

#endif
