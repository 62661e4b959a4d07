#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mesh.hpp"

namespace degen {

struct Minimum {
    double arg, value;
};

// Coarse scan followed by golden-section refinement around the best sample.
template <class F>
Minimum minimize_1d(F&& f, double lo, double hi, int scan = 10000, double tol = 1e-8)
{
    int best = 0;
    double fbest = std::numeric_limits<double>::infinity();
    auto at = [&](int k) { return lo + (hi - lo) * (k + 0.5) / scan; };
    for (int k = 0; k < scan; ++k) {
        double v = f(at(k));
        if (v < fbest) fbest = v, best = k;
    }
    double a = best > 0 ? at(best - 1) : lo + 0.5 * (at(0) - lo);
    double b = best + 1 < scan ? at(best + 1) : hi - 0.5 * (hi - at(scan - 1));
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - r * (b - a), fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + r * (b - a), fd = f(d);
        }
    }
    double x = 0.5 * (a + b);
    return {x, f(x)};
}

inline double trace_profile_A(double lambda, double alpha)
{
    return std::pow(1.0 - lambda, -0.5) + std::sqrt(1.0 - lambda) * std::pow(lambda, -alpha / 2.0);
}

inline double trace_profile_B(double lambda, double alpha)
{
    double q = 4.0 * std::pow(lambda, -2.0 * alpha) + 4.0 * alpha * alpha * std::pow(lambda, -(2.0 + alpha));
    return std::pow(lambda, -alpha / 2.0) * std::pow(1.0 - lambda, -0.5) + std::sqrt(1.0 - lambda) * std::sqrt(q);
}

struct TraceConstants {
    double alpha = 0.0;
    double A_alpha = 0.0, B_alpha = 0.0;
    double lambda_A = 0.0, lambda_B = 0.0;
};

inline void check_trace_alpha(double alpha)
{
    if (!(alpha >= 0.0 && alpha < 2.0)) throw std::invalid_argument("alpha out of range");
}

inline TraceConstants trace_constant_A(double alpha)
{
    check_trace_alpha(alpha);
    auto m = minimize_1d([alpha](double l) { return trace_profile_A(l, alpha); }, 0.0, 1.0);
    TraceConstants tc;
    tc.alpha = alpha;
    tc.A_alpha = m.value;
    tc.lambda_A = m.arg;
    return tc;
}

inline TraceConstants trace_constant_B(double alpha)
{
    check_trace_alpha(alpha);
    auto m = minimize_1d([alpha](double l) { return trace_profile_B(l, alpha); }, 0.0, 1.0);
    TraceConstants tc;
    tc.alpha = alpha;
    tc.B_alpha = m.value;
    tc.lambda_B = m.arg;
    return tc;
}

inline TraceConstants trace_constants(double alpha)
{
    auto a = trace_constant_A(alpha);
    auto b = trace_constant_B(alpha);
    a.B_alpha = b.B_alpha;
    a.lambda_B = b.lambda_B;
    return a;
}

// Second-order one-sided derivative at x=1 on a possibly nonuniform grid.
inline double derivative_at_right(std::span<const double> u, const SpatialGrid& g)
{
    const int N = g.n_cells;
    double a = g.h(N - 1), b = a + g.h(N - 2);
    return u[N] * (a + b) / (a * b) - u[N - 1] * b / (a * (b - a)) + u[N - 2] * a / (b * (b - a));
}

inline double second_difference(std::span<const double> u, const SpatialGrid& g, int i)
{
    double hl = g.h(i - 1), hr = g.h(i);
    return 2.0 * ((u[i + 1] - u[i]) / hr - (u[i] - u[i - 1]) / hl) / (hl + hr);
}

struct TraceRatios {
    double ratio_trace = 0.0;
    double ratio_deriv = 0.0;
};

// |u(1)| / (A |u|_{H1a}) and |u_x(1)| / (B |u|_{H2a}); u(1) = 0 is not imposed.
inline TraceRatios check_trace_bounds(const std::function<double(double)>& u, const SpatialGrid& g,
                                      const TraceConstants& tc)
{
    auto v = sample(u, g);
    double n1 = weighted_norm(v, g, NormKind::H1alpha);
    double n2 = weighted_norm(v, g, NormKind::H2alpha);
    if (n1 == 0.0) throw std::invalid_argument("zero-norm input");
    TraceRatios r;
    r.ratio_trace = std::abs(v.back()) / (tc.A_alpha * n1);
    r.ratio_deriv = std::abs(derivative_at_right(v, g)) / (tc.B_alpha * n2);
    return r;
}

inline double hardy_poincare_ratio(const std::function<double(double)>& w, const SpatialGrid& g, double alpha)
{
    if (alpha == 1.0) throw std::domain_error("inequality stated for alpha != 1");
    if (alpha < 1.0 && std::abs(w(0.0)) > 1e-12) throw std::invalid_argument("w(0) must vanish for alpha < 1");
    if (alpha > 1.0 && std::abs(w(1.0)) > 1e-12) throw std::invalid_argument("w(1) must vanish for alpha > 1");
    double lhs = integrate_weighted([&](double x) { double v = w(x); return v * v; }, alpha - 2.0, g);
    double grad = 0.0;
    for (int f = 0; f < g.n_cells; ++f) {
        double d = (w(g.nodes[f + 1]) - w(g.nodes[f])) / g.h(f);
        grad += g.h(f) * std::pow(g.faces[f], alpha) * d * d;
    }
    double rhs = 4.0 / ((1.0 - alpha) * (1.0 - alpha)) * grad;
    if (lhs == 0.0) return 0.0;
    return lhs / rhs;
}

struct InteriorRatios {
    double ratio_ux = 0.0;
    double ratio_uxx = 0.0;
};

inline int node_index(const SpatialGrid& g, double a)
{
    for (int i = 0; i < g.n_nodes(); ++i)
        if (std::abs(g.nodes[i] - a) <= 1e-12) return i;
    throw std::invalid_argument("a must be a grid node");
}

// |u'|^2_{L2(a,1)} / (a^{-a} |u|^2_{H1a}) and |u''|^2_{L2(a,1)} / ((4a^{-2al} + 4al^2 a^{-2-al}) |u|^2_{H2a})
inline InteriorRatios interior_derivative_bounds(const std::function<double(double)>& u, const SpatialGrid& g, double a)
{
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("a must lie in (0,1)");
    const int ia = node_index(g, a);
    const double al = g.alpha;
    auto v = sample(u, g);
    double d1 = 0.0;
    for (int f = ia; f < g.n_cells; ++f) {
        double d = (v[f + 1] - v[f]) / g.h(f);
        d1 += g.h(f) * d * d;
    }
    // second derivative: nodal values, end nodes copy their neighbour
    std::vector<double> dd(g.n_nodes(), 0.0);
    for (int i = std::max(ia, 1); i < g.n_cells; ++i) dd[i] = second_difference(v, g, i);
    if (ia == 0) dd[0] = dd[1];
    dd[ia] = ia + 1 < g.n_cells ? dd[ia + 1] : dd[ia];
    dd[g.n_cells] = dd[g.n_cells - 1];
    double d2 = 0.0;
    for (int f = ia; f < g.n_cells; ++f) d2 += 0.5 * g.h(f) * (dd[f] * dd[f] + dd[f + 1] * dd[f + 1]);
    double n1 = std::pow(weighted_norm(v, g, NormKind::H1alpha), 2);
    double n2 = std::pow(weighted_norm(v, g, NormKind::H2alpha), 2);
    InteriorRatios r;
    if (d1 > 0.0) r.ratio_ux = d1 / (std::pow(a, -al) * n1);
    double kb = 4.0 / std::pow(a, 2.0 * al) + 4.0 * al * al / std::pow(a, 2.0 + al);
    if (d2 > 0.0) r.ratio_uxx = d2 / (kb * n2);
    return r;
}

// max over levels and x in [a,1] of |v - (-(1-x) v_x(1) + int_x^1 int_s^1 v_rr)|
inline double taylor_identity_residual(const Field& v, const SpatialGrid& g, const TimeGrid& tg, double a)
{
    (void)tg;
    const int ia = node_index(g, a), N = g.n_cells;
    if (N - ia < 2) throw std::invalid_argument("interval [a,1] needs at least two cells");
    double worst = 0.0;
    std::vector<double> vrr(N + 1), inner(N + 1), outer(N + 1);
    for (int j = 0; j < v.rows; ++j) {
        auto r = v.row(j);
        for (int i = ia + 1; i < N; ++i) vrr[i] = second_difference(r, g, i);
        vrr[ia] = vrr[ia + 1] + (vrr[ia + 1] - vrr[ia + 2]) * g.h(ia) / g.h(ia + 1);
        vrr[N] = vrr[N - 1] + (vrr[N - 1] - vrr[N - 2]) * g.h(N - 1) / g.h(N - 2);
        if (N - ia == 2) vrr[ia] = vrr[N] = vrr[ia + 1];
        inner[N] = 0.0;
        for (int i = N - 1; i >= ia; --i) inner[i] = inner[i + 1] + 0.5 * g.h(i) * (vrr[i] + vrr[i + 1]);
        outer[N] = 0.0;
        for (int i = N - 1; i >= ia; --i) outer[i] = outer[i + 1] + 0.5 * g.h(i) * (inner[i] + inner[i + 1]);
        double vx1 = derivative_at_right(r, g);
        for (int i = ia; i <= N; ++i) {
            double rhs = -(1.0 - g.nodes[i]) * vx1 + outer[i];
            worst = std::max(worst, std::abs(r[i] - rhs));
        }
    }
    return worst;
}

}  // namespace degen
