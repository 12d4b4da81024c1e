#ifndef ENVCALVI_ORACLE_TV_BOUND_HPP
#define ENVCALVI_ORACLE_TV_BOUND_HPP

#include "envcalvi/linalg.hpp"

namespace envcalvi::oracle {

// Inputs of the computable nonasymptotic bound on the total variation
// distance between the Gaussian coordinate update and the exact one.
// H_f and H_l are the per-observation negated Hessians of the coordinate
// log posterior at its maximizer and of the coordinate log likelihood at
// its own maximizer; the scalars are the localization and smoothness
// constants of the surrounding regularity conditions.
struct TvBoundInputs {
    double n = 0;
    Index d1 = 0;
    Matrix H_f; // d1 x d1 SPD
    Matrix H_l; // d1 x d1 SPD
    double delta_hat = 0;
    double delta_bar = 0;
    double M1_hat = 0;
    double M1_bar = 0;
    double M2_bar = 0;
    double kappa_hat = 0;
};

struct TvBoundResult {
    double bound = 0;
    double C1 = 0;
    double C2 = 0;
    double T_hat = 0;   // Gaussian tail exponent at the posterior maximizer
    double T_bar_J = 0; // Gaussian tail exponent at the likelihood maximizer
};

// bound = C1 n^{-1/2} + 2 exp(T_hat) + C2 n^{d1/2} exp(-n kappa_hat).
// Throws NumericalError naming the violated inequality when the inputs do
// not satisfy the curvature or trace-root conditions.
TvBoundResult tv_bound(const TvBoundInputs& inp);

// Smallest n beyond which each term of the bound is decreasing; used by the
// monotonicity checks.
double tv_bound_crossover(const TvBoundInputs& inp);

} // namespace envcalvi::oracle

#endif
