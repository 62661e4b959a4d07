#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mesh.hpp"

namespace degen {

inline constexpr double kLogClamp = 700.0;

// exp(l) when |l| < 700, else 0.
inline double clamped_exp(double l) { return std::abs(l) < kLogClamp ? std::exp(l) : 0.0; }

inline double psi(double x, double alpha) { return (std::pow(x, 2.0 - alpha) - 3.0) / (2.0 - alpha); }

inline double theta(double t, double T)
{
    if (!(t > 0.0 && t < T)) throw std::domain_error("theta undefined at t in {0,T}");
    return std::pow(t * (T - t), -4.0);
}

// m(t) = [t'(T-t')]^4 with t' = max(t, T/2)
inline double m_profile(double t, double T)
{
    double tt = std::max(t, 0.5 * T);
    return std::pow(tt * (T - tt), 4.0);
}

struct BaseWeights {
    double psi, theta, phi;
};

inline BaseWeights eval_base_weights(double t, double x, double alpha, double T)
{
    if (!(t > 0.0 && t < T)) throw std::domain_error("t must lie strictly inside (0,T)");
    if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("alpha out of range");
    BaseWeights w;
    w.psi = psi(x, alpha);
    w.theta = theta(t, T);
    w.phi = w.theta * w.psi;
    return w;
}

struct NonvanishingWeights {
    double m, tau, A, A_star, A_hat, A_bar;
};

inline NonvanishingWeights eval_nonvanishing_weights(double t, double x, double alpha, double T)
{
    if (!(t >= 0.0 && t < T)) throw std::domain_error("t must lie in [0,T)");
    if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("alpha out of range");
    NonvanishingWeights w;
    w.m = m_profile(t, T);
    w.tau = 1.0 / w.m;
    w.A = w.tau * psi(x, alpha);
    w.A_star = w.tau * psi(1.0, alpha);
    w.A_hat = w.tau * psi(0.0, alpha);
    w.A_bar = 2.0 * w.A_star - w.A_hat;
    return w;
}

// Weights at (time midpoint j, node i), stored in log form.
struct WeightTable {
    double s = 1.0;
    double alpha = 0.5;
    double T = 1.0;
    int n_times = 0;
    int n_nodes = 0;
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> psi;
    std::vector<double> theta, m, tau, A_star, A_hat, A_bar, log_w_penalty;
    std::vector<double> phi, A, log_w_state;  // n_times x n_nodes

    double& at(std::vector<double>& v, int j, int i) { return v[std::size_t(j) * n_nodes + i]; }
    double at(const std::vector<double>& v, int j, int i) const { return v[std::size_t(j) * n_nodes + i]; }

    double w_state(int j, int i) const { return clamped_exp(at(log_w_state, j, i)); }
    double w_penalty(int j) const { return clamped_exp(log_w_penalty[j]); }
};

inline WeightTable build_weight_table(const SpatialGrid& g, const TimeGrid& tg, double s)
{
    if (!(s > 0.0)) throw std::invalid_argument("s must be positive");
    WeightTable w;
    w.s = s;
    w.alpha = g.alpha;
    w.T = tg.T;
    w.n_times = tg.m_steps;
    w.n_nodes = g.n_nodes();
    w.t = tg.midpoints;
    w.x = g.nodes;
    w.psi.resize(w.n_nodes);
    for (int i = 0; i < w.n_nodes; ++i) w.psi[i] = degen::psi(g.nodes[i], g.alpha);
    const std::size_t nt = w.n_times, nn = w.n_nodes;
    w.theta.resize(nt), w.m.resize(nt), w.tau.resize(nt);
    w.A_star.resize(nt), w.A_hat.resize(nt), w.A_bar.resize(nt), w.log_w_penalty.resize(nt);
    w.phi.resize(nt * nn), w.A.resize(nt * nn), w.log_w_state.resize(nt * nn);
    for (int j = 0; j < w.n_times; ++j) {
        double t = w.t[j];
        auto nv = eval_nonvanishing_weights(t, 1.0, g.alpha, tg.T);
        w.theta[j] = theta(t, tg.T);
        w.m[j] = nv.m;
        w.tau[j] = nv.tau;
        w.A_star[j] = nv.A_star;
        w.A_hat[j] = nv.A_hat;
        w.A_bar[j] = nv.A_bar;
        w.log_w_penalty[j] = 2.0 * s * nv.A_star + 7.0 * std::log(nv.tau);
        for (int i = 0; i < w.n_nodes; ++i) {
            w.at(w.phi, j, i) = w.theta[j] * w.psi[i];
            w.at(w.A, j, i) = w.tau[j] * w.psi[i];
            w.at(w.log_w_state, j, i) = 2.0 * s * w.tau[j] * w.psi[i];
        }
    }
    return w;
}

}  // namespace degen
