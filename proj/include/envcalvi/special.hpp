#ifndef ENVCALVI_SPECIAL_HPP
#define ENVCALVI_SPECIAL_HPP

#include <Eigen/Core>

namespace envcalvi {

double digamma(double x);

// log of the multivariate gamma function Gamma_d(x)
double lmultigamma(int d, double x);

// multivariate digamma psi_d(x) = sum_{j=1..d} digamma(x + (1-j)/2)
double multidigamma(int d, double x);

} // namespace envcalvi

#endif
