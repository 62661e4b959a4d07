#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mesh.hpp"
#include "tridiag.hpp"

namespace degen {

// (Lu)_i = lower_i u_{i-1} + diag_i u_i + upper_i u_{i+1}; constrained rows are zero.
struct DegenerateOperator {
    double alpha = 0.5;
    Degeneracy kind = Degeneracy::Weak;
    std::vector<double> lower, diag, upper;

    int size() const { return int(diag.size()); }

    std::vector<double> apply(std::span<const double> u) const
    {
        const int n = size();
        std::vector<double> r(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double v = diag[i] * u[i];
            if (i > 0) v += lower[i] * u[i - 1];
            if (i + 1 < n) v += upper[i] * u[i + 1];
            r[i] = v;
        }
        return r;
    }
};

inline DegenerateOperator assemble_operator(const SpatialGrid& g)
{
    const int n = g.n_nodes();
    DegenerateOperator L;
    L.alpha = g.alpha;
    L.kind = g.kind;
    L.lower.assign(n, 0.0);
    L.diag.assign(n, 0.0);
    L.upper.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (g.pinned(i)) continue;
        double c = g.cell_weights[i];
        double r = i < g.n_cells ? std::pow(g.faces[i], g.alpha) / g.h(i) / c : 0.0;
        double l = i > 0 ? std::pow(g.faces[i - 1], g.alpha) / g.h(i - 1) / c : 0.0;
        L.lower[i] = l;
        L.upper[i] = r;
        L.diag[i] = -(l + r);
    }
    return L;
}

struct EvolutionResult {
    Field trajectory;
    double dt = 0.0;
    double theta = 0.5;
};

namespace detail {

inline void check_finite(std::span<const double> v, int level)
{
    for (double x : v)
        if (!std::isfinite(x)) throw std::runtime_error("non-finite value at time level " + std::to_string(level));
}

// One theta step: (I - th dt L) y = (I + (1-th) dt L) x + dt src, constrained rows set to `pin`.
struct ThetaStepper {
    const SpatialGrid& g;
    const DegenerateOperator& L;
    double dt, th;
    std::vector<double> a, b, c;

    ThetaStepper(const SpatialGrid& grid, const DegenerateOperator& op, double dt_, double theta)
        : g(grid), L(op), dt(dt_), th(theta)
    {
        const int n = L.size();
        a.assign(n, 0.0), b.assign(n, 1.0), c.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (g.pinned(i)) continue;
            a[i] = -th * dt * L.lower[i];
            b[i] = 1.0 - th * dt * L.diag[i];
            c[i] = -th * dt * L.upper[i];
        }
    }

    std::vector<double> explicit_part(std::span<const double> x) const
    {
        std::vector<double> r(x.begin(), x.end());
        if (th < 1.0) {
            auto lx = L.apply(x);
            for (std::size_t i = 0; i < r.size(); ++i) r[i] += (1.0 - th) * dt * lx[i];
        }
        return r;
    }

    std::vector<double> step(std::span<const double> x, std::span<const double> src, double pin_left, double pin_right) const
    {
        auto rhs = explicit_part(x);
        const int n = L.size();
        for (int i = 0; i < n; ++i)
            if (!src.empty()) rhs[i] += dt * src[i];
        if (g.pinned(0)) rhs[0] = pin_left;
        rhs[n - 1] = pin_right;
        solve_tridiagonal(a, b, c, rhs);
        return rhs;
    }
};

}  // namespace detail

// Forward theta scheme. `source` holds one row per time cell (M rows);
// an empty Field means no source. `right_data`, if given, prescribes u(t_j,1).
inline EvolutionResult solve_forward(std::span<const double> u0, const Field& source, const SpatialGrid& g,
                                     const TimeGrid& tg, double theta = 0.5,
                                     const std::vector<double>* right_data = nullptr)
{
    const int n = g.n_nodes(), M = tg.m_steps;
    if (int(u0.size()) != n) throw std::invalid_argument("u0 size mismatch");
    if (source.rows != 0 && (source.rows != M || source.cols != n)) throw std::invalid_argument("source size mismatch");
    auto L = assemble_operator(g);
    detail::ThetaStepper st(g, L, tg.dt, theta);
    EvolutionResult res{level_field(tg, g), tg.dt, theta};
    for (int i = 0; i < n; ++i) res.trajectory(0, i) = u0[i];
    if (right_data) res.trajectory(0, n - 1) = (*right_data)[0];
    detail::check_finite(res.trajectory.row(0), 0);
    std::vector<double> src(n, 0.0);
    for (int j = 0; j < M; ++j) {
        if (source.rows) {
            for (int i = 0; i < n; ++i) src[i] = g.pinned(i) ? 0.0 : source(j, i);
        }
        double right = right_data ? (*right_data)[j + 1] : 0.0;
        auto next = st.step(res.trajectory.row(j), src, 0.0, right);
        detail::check_finite(next, j + 1);
        std::copy(next.begin(), next.end(), res.trajectory.row(j + 1).begin());
    }
    return res;
}

// Backward theta scheme for -z_t - (x^a z_x)_x = F, z(T) = zT. F has one row per time cell.
inline EvolutionResult solve_adjoint(std::span<const double> zT, const Field& F, const SpatialGrid& g,
                                     const TimeGrid& tg, double theta = 0.5)
{
    const int n = g.n_nodes(), M = tg.m_steps;
    if (int(zT.size()) != n) throw std::invalid_argument("zT size mismatch");
    if (F.rows != 0 && (F.rows != M || F.cols != n)) throw std::invalid_argument("source size mismatch");
    auto L = assemble_operator(g);
    detail::ThetaStepper st(g, L, tg.dt, theta);
    EvolutionResult res{level_field(tg, g), tg.dt, theta};
    for (int i = 0; i < n; ++i) res.trajectory(M, i) = g.pinned(i) ? 0.0 : zT[i];
    detail::check_finite(res.trajectory.row(M), M);
    std::vector<double> src(n, 0.0);
    for (int k = M; k >= 1; --k) {
        if (F.rows) {
            for (int i = 0; i < n; ++i) src[i] = g.pinned(i) ? 0.0 : F(k - 1, i);
        }
        auto prev = st.step(res.trajectory.row(k), src, 0.0, 0.0);
        detail::check_finite(prev, k - 1);
        std::copy(prev.begin(), prev.end(), res.trajectory.row(k - 1).begin());
    }
    return res;
}

// Discrete summation-by-parts identity for the theta pair:
//   sum_k dt <u^k, F_k> + <u^M, C zT> = sum_n dt <h_n, z^n> + <u^0, C z^0>,
// C = I + (1-theta) dt L. Returns |LHS-RHS| / (|LHS|+|RHS|).
inline double duality_residual(std::span<const double> u0, const Field& h, const Field& F, std::span<const double> zT,
                               const SpatialGrid& g, const TimeGrid& tg, double theta = 0.5)
{
    auto u = solve_forward(u0, h, g, tg, theta).trajectory;
    auto z = solve_adjoint(zT, F, g, tg, theta).trajectory;
    auto L = assemble_operator(g);
    detail::ThetaStepper st(g, L, tg.dt, theta);
    const int M = tg.m_steps, n = g.n_nodes();
    std::vector<double> hp(n), Fp(n);
    double lhs = 0.0, rhs = 0.0;
    for (int k = 0; k < M; ++k) {
        for (int i = 0; i < n; ++i) {
            hp[i] = g.pinned(i) || !h.rows ? 0.0 : h(k, i);
            Fp[i] = g.pinned(i) || !F.rows ? 0.0 : F(k, i);
        }
        lhs += tg.dt * dot(u.row(k + 1), Fp, g);
        rhs += tg.dt * dot(hp, z.row(k), g);
    }
    lhs += dot(u.row(M), st.explicit_part(z.row(M)), g);
    rhs += dot(u.row(0), st.explicit_part(z.row(0)), g);
    double den = std::abs(lhs) + std::abs(rhs);
    return den > 0.0 ? std::abs(lhs - rhs) / den : 0.0;
}

// Cell source from a pointwise f(t,x): theta-weighted in time.
inline Field cell_source(const std::function<double(double, double)>& f, const SpatialGrid& g, const TimeGrid& tg,
                         double theta)
{
    Field s = cell_field(tg, g);
    for (int j = 0; j < tg.m_steps; ++j)
        for (int i = 0; i < g.n_nodes(); ++i) {
            double x = g.nodes[i];
            s(j, i) = theta * f(tg.levels[j + 1], x) + (1.0 - theta) * f(tg.levels[j], x);
        }
    return s;
}

struct ManufacturedSolution {
    std::function<double(double, double)> u;
    std::function<double(double, double)> f;
};

// alpha = 0: e^{-t} sin(pi x); weak: e^{-t}(x^{2-a} - x^2); strong: e^{-t}(1 - x^2).
inline ManufacturedSolution manufactured_solution(double alpha)
{
    using std::numbers::pi;
    if (alpha == 0.0)
        return {[](double t, double x) { return std::exp(-t) * std::sin(pi * x); },
                [](double t, double x) { return (pi * pi - 1.0) * std::exp(-t) * std::sin(pi * x); }};
    if (alpha < 1.0)
        return {[alpha](double t, double x) { return std::exp(-t) * (std::pow(x, 2.0 - alpha) - x * x); },
                [alpha](double t, double x) {
                    double u = std::exp(-t) * (std::pow(x, 2.0 - alpha) - x * x);
                    return -u - std::exp(-t) * ((2.0 - alpha) - 2.0 * (alpha + 1.0) * std::pow(x, alpha));
                }};
    return {[](double t, double x) { return std::exp(-t) * (1.0 - x * x); },
            [alpha](double t, double x) {
                return -std::exp(-t) * (1.0 - x * x) + 2.0 * (alpha + 1.0) * std::pow(x, alpha) * std::exp(-t);
            }};
}

struct ConvergenceStudy {
    std::vector<int> levels;
    std::vector<double> errors;
    double order = 0.0;
};

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k], sy += y[k], sxx += x[k] * x[k], sxy += x[k] * y[k];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// N = M = level on [0,T]; L2 error at t = T.
inline ConvergenceStudy mms_convergence_study(double alpha, const std::vector<int>& levels, double theta = 0.5,
                                              double T = 1.0, double grading = 1.0)
{
    if (levels.size() < 3) throw std::invalid_argument("at least three levels required");
    auto ms = manufactured_solution(alpha);
    ConvergenceStudy cs;
    cs.levels = levels;
    std::vector<double> lh, le;
    for (int N : levels) {
        auto g = build_grid(alpha, N, grading);
        auto tg = build_time_grid(T, N);
        auto u0 = sample([&](double x) { return ms.u(0.0, x); }, g);
        auto src = cell_source(ms.f, g, tg, theta);
        auto u = solve_forward(u0, src, g, tg, theta).trajectory;
        std::vector<double> e(g.n_nodes());
        for (int i = 0; i < g.n_nodes(); ++i) e[i] = u(tg.m_steps, i) - ms.u(T, g.nodes[i]);
        double err = weighted_norm(e, g, NormKind::L2);
        cs.errors.push_back(err);
        lh.push_back(std::log(1.0 / N));
        le.push_back(std::log(err));
    }
    cs.order = least_squares_slope(lh, le);
    return cs;
}

// [sup_t |u|^2_{H1a} + sum dt (|u_t|^2 + |(x^a u_x)_x|^2)] / [|u0|^2_{H1a} + sum dt |h|^2]
inline double energy_ratio(std::span<const double> u0, const Field& h, const SpatialGrid& g, const TimeGrid& tg,
                           double theta = 0.5)
{
    auto u = solve_forward(u0, h, g, tg, theta).trajectory;
    auto L = assemble_operator(g);
    const int n = g.n_nodes();
    double sup = 0.0, integ = 0.0, hn = 0.0;
    std::vector<double> ut(n), um(n);
    for (int j = 0; j <= tg.m_steps; ++j) sup = std::max(sup, std::pow(weighted_norm(u.row(j), g, NormKind::H1alpha), 2));
    for (int j = 0; j < tg.m_steps; ++j) {
        for (int i = 0; i < n; ++i) {
            ut[i] = (u(j + 1, i) - u(j, i)) / tg.dt;
            um[i] = theta * u(j + 1, i) + (1.0 - theta) * u(j, i);
        }
        auto lu = L.apply(um);
        integ += tg.dt * (dot(ut, ut, g) + dot(lu, lu, g));
        if (h.rows) hn += tg.dt * dot(h.row(j), h.row(j), g);
    }
    double den = std::pow(weighted_norm(u0, g, NormKind::H1alpha), 2) + hn;
    return (sup + integ) / den;
}

}  // namespace degen
