#include "envcalvi/special.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>

namespace envcalvi {

double digamma(double x) { return boost::math::digamma(x); }

double lmultigamma(int d, double x) {
    double out = 0.25 * d * (d - 1) * std::log(M_PI);
    for (int j = 1; j <= d; ++j) out += std::lgamma(x + 0.5 * (1 - j));
    return out;
}

double multidigamma(int d, double x) {
    double out = 0.0;
    for (int j = 1; j <= d; ++j) out += digamma(x + 0.5 * (1 - j));
    return out;
}

} // namespace envcalvi
