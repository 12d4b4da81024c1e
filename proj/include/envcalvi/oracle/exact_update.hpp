#ifndef ENVCALVI_ORACLE_EXACT_UPDATE_HPP
#define ENVCALVI_ORACLE_EXACT_UPDATE_HPP

#include <functional>

#include "envcalvi/linalg.hpp"

namespace envcalvi::oracle {

// Quadrature-normalized density table for a scalar coordinate update with
// log kernel logf (an additive constant is irrelevant).
struct GridDensity {
    Vector grid;
    Vector density; // integrates to one by the trapezoid rule
};

GridDensity exact_coordinate_update_1d(const std::function<double(double)>& logf, double lo,
                                       double hi, int points);

// Total variation distance between the normalized kernel and a Gaussian,
// via 1/2 * integral |p - q|, refining the grid until the value moves by
// less than 1e-6.
double tv_to_gaussian(const std::function<double(double)>& logf, double lo, double hi,
                      double mean, double sd);

// Grid argmax of the kernel (the quadrature-side mode).
double grid_argmax(const std::function<double(double)>& logf, double lo, double hi,
                   double step);

} // namespace envcalvi::oracle

#endif
