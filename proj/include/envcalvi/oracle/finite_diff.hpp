#ifndef ENVCALVI_ORACLE_FINITE_DIFF_HPP
#define ENVCALVI_ORACLE_FINITE_DIFF_HPP

#include <functional>

#include "envcalvi/linalg.hpp"

namespace envcalvi::oracle {

// Central finite differences with per-coordinate step h_i = base * (1 + |x_i|).
inline double fd_step(double xi, double base) { return base * (1.0 + std::abs(xi)); }

template <typename F>
Vector fd_grad(F&& f, const Vector& x, double base = 1e-5) {
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        const double h = fd_step(x(i), base);
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

template <typename F>
Matrix fd_hess(F&& f, const Vector& x, double base = 1e-4) {
    const Index d = x.size();
    Matrix h(d, d);
    for (Index i = 0; i < d; ++i) {
        const double hi = fd_step(x(i), base);
        for (Index j = i; j < d; ++j) {
            const double hj = fd_step(x(j), base);
            Vector xpp = x, xpm = x, xmp = x, xmm = x;
            xpp(i) += hi; xpp(j) += hj;
            xpm(i) += hi; xpm(j) -= hj;
            xmp(i) -= hi; xmp(j) += hj;
            xmm(i) -= hi; xmm(j) -= hj;
            h(i, j) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hi * hj);
            h(j, i) = h(i, j);
        }
    }
    return h;
}

// Jacobian of a vector field by central differences: row k is d g_k / d x.
template <typename G>
Matrix fd_jacobian(G&& g, const Vector& x, double base = 1e-5) {
    const Vector g0 = g(x);
    Matrix jac(g0.size(), x.size());
    for (Index i = 0; i < x.size(); ++i) {
        const double h = fd_step(x(i), base);
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        jac.col(i) = (g(xp) - g(xm)) / (2.0 * h);
    }
    return jac;
}

} // namespace envcalvi::oracle

#endif
