#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "battery.hpp"
#include "hum.hpp"
#include "logsum.hpp"
#include "parallel.hpp"
#include "trace.hpp"

namespace degen {

struct BoundaryControl {
    std::vector<double> t;  // cell midpoints
    std::vector<double> g;
    double l2 = 0.0;        // L2(0,T) norm
};

inline double time_l2(const std::vector<double>& v, const TimeGrid& tg)
{
    double s = 0.0;
    for (double x : v) s += tg.dt * x * x;
    return std::sqrt(s);
}

// g_j = sign * (1/3) e^{2sA*} tau^7 d_x phi(t_j, 1), one value per time cell.
inline BoundaryControl extract_boundary_control(const ControlSolution& cs, const ControlProblem& p, double sign = 1.0)
{
    BoundaryControl bc;
    const int M = p.tgrid.m_steps;
    bc.t = p.tgrid.midpoints;
    bc.g.resize(M);
    for (int j = 0; j < M; ++j) {
        double dphi = derivative_at_right(cs.phi_hat.row(j), p.grid);
        bc.g[j] = sign * clamped_exp(cs.log_w_penalty[j] - cs.kappa) * dphi / 3.0;
    }
    bc.l2 = time_l2(bc.g, p.tgrid);
    return bc;
}

// eps^-3 int_{1-eps}^1 (1-x)^2 dx by Simpson per cell on the nodes of omega.
inline double one_third_identity(const SpatialGrid& g, const ControlRegion& omega)
{
    double s = 0.0;
    for (int c = omega.first_node; c < g.n_cells; ++c) {
        double a = g.nodes[c], b = g.nodes[c + 1], m = 0.5 * (a + b);
        auto f = [](double x) { return (1.0 - x) * (1.0 - x); };
        s += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    return s / std::pow(omega.epsilon, 3);
}

// |sum dt sum_w h z + sum dt g z_x(t,1)| for each adjoint state z.
inline ResidualStats weak_limit_residual(const Field& h, const ControlRegion& omega, const std::vector<double>& g,
                                         const std::vector<Field>& zs, const SpatialGrid& grid, const TimeGrid& tg)
{
    std::vector<double> res;
    for (const auto& z : zs) {
        double r = 0.0;
        for (int j = 0; j < tg.m_steps; ++j) {
            for (int i = omega.first_node; i < grid.n_nodes(); ++i) r += tg.dt * omega.weights[i] * h(j, i) * z(j, i);
            r += tg.dt * g[j] * derivative_at_right(z.row(j), grid);
        }
        res.push_back(std::abs(r));
    }
    return summarize(std::move(res));
}

// |int int u F + int g z_x(t,1) - int u0 z(0)| / (|LHS| + |RHS| + |u0|^2) per pair.
inline ResidualStats boundary_transposition_residual(const Field& u, const std::vector<double>& g,
                                                     std::span<const double> u0, const std::vector<SourcePair>& pairs,
                                                     const SpatialGrid& grid, const TimeGrid& tg)
{
    double u0n = dot(u0, u0, grid);
    std::vector<double> res;
    for (const auto& pr : pairs) {
        auto z = solve_adjoint(pr.zT, pr.F, grid, tg, 1.0).trajectory;
        double lhs = state_pairing(u, pr.F, grid, tg);
        double rhs = dot(u0, z.row(0), grid);
        for (int j = 0; j < tg.m_steps; ++j) rhs -= tg.dt * g[j] * derivative_at_right(z.row(j), grid);
        double den = std::abs(lhs) + std::abs(rhs) + u0n;
        res.push_back(den > 0.0 ? std::abs(lhs - rhs) / den : 0.0);
    }
    return summarize(std::move(res));
}

// log of sum_cells dt e^{2sA^} tau^-1 |phi^j|^2_{H2alpha}, true scale.
inline double log_multiplier_bound(const ControlSolution& cs, const ControlProblem& p)
{
    LogSum acc;
    for (int j = 0; j < p.tgrid.m_steps; ++j) {
        double n = weighted_norm(cs.phi_hat.row(j), p.grid, NormKind::H2alpha);
        if (n > 0.0) acc.add(2.0 * p.s * cs.A_hat[j] - std::log(cs.tau[j]) - 2.0 * cs.kappa + 2.0 * std::log(n), p.tgrid.dt);
    }
    return acc.log();
}

struct SweepConfig {
    double alpha = 0.5;
    double T = 1.0;
    double s = 1.0;
    int n_cells = 64;
    int m_steps = 64;
    double grading = 1.0;
    std::vector<double> eps_list{0.4, 0.2, 0.1};
    std::function<double(double)> u0;  // empty: x(1-x) for weak, 1-x^2 for strong
    int battery_size = 20;
    std::uint64_t seed = 1;
    SolveOptions solver;
};

inline std::function<double(double)> default_initial_state(double alpha)
{
    if (alpha < 1.0) return [](double x) { return x * (1.0 - x); };
    return [](double x) { return 1.0 - x * x; };
}

struct EpsilonEntry {
    double eps_requested = 0.0;
    double epsilon = 0.0;
    bool ok = false;
    std::string error;
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    WeightedNorms norms;
    double kappa = 0.0;
    BoundaryControl g;
    double one_third = 0.0;
    double terminal_ratio = 0.0;  // |u(T)| / |u0|
    ResidualStats transposition;
    ResidualStats weak_limit;
    ResidualStats boundary;          // g as extracted
    ResidualStats boundary_flipped;  // -g
    std::vector<double> pairings;    // int int u F over the F battery
    double log_multiplier_bound = 0.0;
    double log_u0_norm = 0.0;
};

struct SweepReport {
    SweepConfig config;
    std::vector<EpsilonEntry> entries;
    std::vector<double> g_differences;    // |g_{k+1} - g_k|_{L2(0,T)}
    std::vector<double> pairing_spreads;  // max_b |p_{k+1}(b) - p_k(b)|
    double pairing_cauchy_fraction = 0.0;
    double limit_state_gap = 0.0;  // boundary problem vs u at the smallest epsilon
    bool limit_state_available = false;
};

inline void check_eps_list(const std::vector<double>& eps)
{
    if (eps.empty()) throw std::invalid_argument("eps_list is empty");
    for (std::size_t k = 1; k < eps.size(); ++k)
        if (!(eps[k] < eps[k - 1])) throw std::invalid_argument("eps_list must be strictly decreasing");
}

inline SweepReport epsilon_sweep(const SweepConfig& cfg)
{
    check_eps_list(cfg.eps_list);
    SweepReport rep;
    rep.config = cfg;
    auto u0 = cfg.u0 ? cfg.u0 : default_initial_state(cfg.alpha);
    const int K = int(cfg.eps_list.size());

    std::vector<ControlProblem> problems;
    for (double e : cfg.eps_list)
        problems.push_back(make_control_problem(cfg.alpha, cfg.T, e, cfg.s, cfg.n_cells, cfg.m_steps, u0, cfg.grading));
    for (int k = 1; k < K; ++k)
        if (!(problems[k].epsilon < problems[k - 1].epsilon))
            throw std::invalid_argument("eps_list collapses after snapping to the mesh");

    const auto& grid = problems[0].grid;
    const auto& tg = problems[0].tgrid;
    auto pairs = random_source_pairs(cfg.battery_size, cfg.seed, grid, tg);
    auto sources = random_source_pairs(cfg.battery_size, cfg.seed + 1, grid, tg, Roughness::Smooth, false);
    auto zs = adjoint_battery(pairs, problems[0]);

    rep.entries.resize(K);
    std::vector<ControlSolution> sols(K);
    parallel_for(K, [&](int k) {
        auto& e = rep.entries[k];
        const auto& p = problems[k];
        e.eps_requested = cfg.eps_list[k];
        e.epsilon = p.epsilon;
        try {
            sols[k] = solve_control(p, cfg.solver);
            const auto& cs = sols[k];
            e.iterations = cs.iterations;
            e.rel_residual = cs.rel_residual;
            e.converged = cs.converged;
            e.norms = cs.norms;
            e.kappa = cs.kappa;
            e.g = extract_boundary_control(cs, p);
            e.one_third = one_third_identity(grid, p.omega);
            double n0 = weighted_norm(p.u0, grid, NormKind::L2);
            e.log_u0_norm = std::log(n0);
            e.terminal_ratio = weighted_norm(cs.u_hat.row(tg.m_steps), grid, NormKind::L2) / n0;
            e.transposition = transposition_residual(cs, p, pairs);
            e.weak_limit = weak_limit_residual(cs.h_hat, p.omega, e.g.g, zs, grid, tg);
            e.boundary = boundary_transposition_residual(cs.u_hat, e.g.g, p.u0, pairs, grid, tg);
            std::vector<double> flipped(e.g.g.size());
            for (std::size_t j = 0; j < flipped.size(); ++j) flipped[j] = -e.g.g[j];
            e.boundary_flipped = boundary_transposition_residual(cs.u_hat, flipped, p.u0, pairs, grid, tg);
            for (const auto& sp : sources) e.pairings.push_back(state_pairing(cs.u_hat, sp.F, grid, tg));
            e.log_multiplier_bound = log_multiplier_bound(cs, p);
            e.ok = true;
        } catch (const std::exception& ex) {
            e.ok = false;
            e.error = ex.what();
        }
    });

    int decreasing = 0;
    for (int k = 1; k < K; ++k) {
        const auto &a = rep.entries[k - 1], &b = rep.entries[k];
        if (!a.ok || !b.ok) {
            rep.g_differences.push_back(std::nan(""));
            rep.pairing_spreads.push_back(std::nan(""));
            continue;
        }
        std::vector<double> d(a.g.g.size());
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = b.g.g[j] - a.g.g[j];
        rep.g_differences.push_back(time_l2(d, tg));
        double spread = 0.0;
        for (std::size_t m = 0; m < a.pairings.size(); ++m) spread = std::max(spread, std::abs(b.pairings[m] - a.pairings[m]));
        rep.pairing_spreads.push_back(spread);
    }
    bool all_ok = true;
    for (const auto& e : rep.entries) all_ok = all_ok && e.ok;
    if (all_ok && K >= 3) {
        for (int m = 0; m < cfg.battery_size; ++m) {
            bool dec = true;
            for (int k = 2; k < K; ++k) {
                double d1 = std::abs(rep.entries[k - 1].pairings[m] - rep.entries[k - 2].pairings[m]);
                double d2 = std::abs(rep.entries[k].pairings[m] - rep.entries[k - 1].pairings[m]);
                dec = dec && d2 < d1;
            }
            decreasing += dec;
        }
        rep.pairing_cauchy_fraction = double(decreasing) / cfg.battery_size;
    }

    const auto& last = rep.entries.back();
    if (last.ok) {
        const auto& p = problems.back();
        std::vector<double> right(tg.m_steps + 1, 0.0);
        for (int j = 0; j < tg.m_steps; ++j) right[j + 1] = last.g.g[j];
        auto ub = solve_forward(p.u0, Field{}, grid, tg, 1.0, &right).trajectory;
        double num = 0.0, den = 0.0;
        for (int j = 1; j <= tg.m_steps; ++j) {
            if (tg.levels[j] > tg.T - 2.0 * tg.dt + 1e-12) break;
            for (int i = 0; i < grid.n_nodes(); ++i) {
                double d = ub(j, i) - sols.back().u_hat(j, i);
                num += tg.dt * grid.cell_weights[i] * d * d;
                den += tg.dt * grid.cell_weights[i] * sols.back().u_hat(j, i) * sols.back().u_hat(j, i);
            }
        }
        rep.limit_state_gap = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
        rep.limit_state_available = true;
    }
    return rep;
}

}  // namespace degen
