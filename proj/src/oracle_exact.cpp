#include "envcalvi/oracle/exact_update.hpp"

#include <cmath>

namespace envcalvi::oracle {

namespace {

// Trapezoid weights on a uniform grid.
double trapezoid(const Vector& vals, double h) {
    double s = 0.5 * (vals(0) + vals(vals.size() - 1));
    for (Index i = 1; i + 1 < vals.size(); ++i) s += vals(i);
    return s * h;
}

} // namespace

GridDensity exact_coordinate_update_1d(const std::function<double(double)>& logf, double lo,
                                       double hi, int points) {
    if (points < 3 || !(hi > lo)) throw InputError("exact_coordinate_update_1d: bad grid");
    GridDensity out;
    out.grid.resize(points);
    Vector logs(points);
    const double h = (hi - lo) / (points - 1);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        out.grid(i) = lo + i * h;
        logs(i) = logf(out.grid(i));
        lmax = std::max(lmax, logs(i));
    }
    if (!std::isfinite(lmax)) {
        throw NumericalError("exact_coordinate_update_1d: kernel not finite on the grid");
    }
    out.density = (logs.array() - lmax).exp();
    const double z = trapezoid(out.density, h);
    if (!(z > 0.0)) throw NumericalError("exact_coordinate_update_1d: zero mass on the grid");
    out.density /= z;
    return out;
}

double tv_to_gaussian(const std::function<double(double)>& logf, double lo, double hi,
                      double mean, double sd) {
    if (!(sd > 0.0)) throw InputError("tv_to_gaussian: sd must be positive");
    const auto gauss = [&](double x) {
        const double z = (x - mean) / sd;
        return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    };
    double prev = -1.0;
    for (int points = 1025; points <= (1 << 22) + 1; points = 2 * (points - 1) + 1) {
        const GridDensity gd = exact_coordinate_update_1d(logf, lo, hi, points);
        const double h = gd.grid(1) - gd.grid(0);
        Vector diff(points);
        for (int i = 0; i < points; ++i) diff(i) = std::abs(gd.density(i) - gauss(gd.grid(i)));
        const double tv = 0.5 * trapezoid(diff, h);
        if (prev >= 0.0 && std::abs(tv - prev) < 1e-6) return tv;
        prev = tv;
    }
    return prev;
}

double grid_argmax(const std::function<double(double)>& logf, double lo, double hi,
                   double step) {
    double best_x = lo, best = logf(lo);
    for (double x = lo; x <= hi; x += step) {
        const double v = logf(x);
        if (v > best) {
            best = v;
            best_x = x;
        }
    }
    return best_x;
}

} // namespace envcalvi::oracle
