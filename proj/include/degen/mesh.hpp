#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace degen {

enum class Degeneracy { Weak, Strong };

inline const char* to_string(Degeneracy d) { return d == Degeneracy::Weak ? "weak" : "strong"; }

inline Degeneracy degeneracy_of(double alpha) { return alpha < 1.0 ? Degeneracy::Weak : Degeneracy::Strong; }

// Nodes x_0=0 < ... < x_N=1. cell_weights holds the control-volume width of
// each node (half cells at the two ends), i.e. the trapezoid weights.
struct SpatialGrid {
    double alpha = 0.5;
    int n_cells = 0;
    double grading = 1.0;
    Degeneracy kind = Degeneracy::Weak;
    std::vector<double> nodes;
    std::vector<double> faces;
    std::vector<double> cell_weights;

    int n_nodes() const { return n_cells + 1; }
    double h(int i) const { return nodes[i + 1] - nodes[i]; }
    // first node that is an unknown (x=0 is pinned in the weak case)
    int first_free() const { return kind == Degeneracy::Weak ? 1 : 0; }
    int last_free() const { return n_cells - 1; }
    bool pinned(int i) const { return i == n_cells || (i == 0 && kind == Degeneracy::Weak); }
};

// alpha = 0 is accepted as the nondegenerate reference problem.
inline SpatialGrid build_grid(double alpha, int n_cells, double grading = 1.0)
{
    if (!(alpha >= 0.0 && alpha < 2.0)) throw std::invalid_argument("alpha out of range");
    if (n_cells < 4) throw std::invalid_argument("n_cells must be at least 4");
    if (!(grading >= 1.0)) throw std::invalid_argument("grading must be >= 1");
    SpatialGrid g;
    g.alpha = alpha;
    g.n_cells = n_cells;
    g.grading = grading;
    g.kind = degeneracy_of(alpha);
    g.nodes.resize(n_cells + 1);
    for (int i = 0; i <= n_cells; ++i) g.nodes[i] = std::pow(double(i) / n_cells, grading);
    g.nodes.front() = 0.0;
    g.nodes.back() = 1.0;
    g.faces.resize(n_cells);
    for (int i = 0; i < n_cells; ++i) g.faces[i] = 0.5 * (g.nodes[i] + g.nodes[i + 1]);
    g.cell_weights.assign(n_cells + 1, 0.0);
    for (int i = 0; i < n_cells; ++i) {
        g.cell_weights[i] += 0.5 * g.h(i);
        g.cell_weights[i + 1] += 0.5 * g.h(i);
    }
    return g;
}

struct TimeGrid {
    double T = 1.0;
    int m_steps = 0;
    double dt = 0.0;
    std::vector<double> levels;
    std::vector<double> midpoints;
};

inline TimeGrid build_time_grid(double T, int m_steps)
{
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    if (m_steps < 2) throw std::invalid_argument("m_steps must be at least 2");
    TimeGrid tg;
    tg.T = T;
    tg.m_steps = m_steps;
    tg.dt = T / m_steps;
    tg.levels.resize(m_steps + 1);
    for (int j = 0; j <= m_steps; ++j) tg.levels[j] = T * j / m_steps;
    tg.levels.back() = T;
    tg.midpoints.resize(m_steps);
    for (int j = 0; j < m_steps; ++j) tg.midpoints[j] = T * (j + 0.5) / m_steps;
    return tg;
}

// Row-major (time, space) array. Level fields have M+1 rows, cell fields M rows.
struct Field {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Field() = default;
    Field(int r, int c, double v = 0.0) : rows(r), cols(c), values(std::size_t(r) * c, v) {}

    double& operator()(int j, int i) { return values[std::size_t(j) * cols + i]; }
    double operator()(int j, int i) const { return values[std::size_t(j) * cols + i]; }
    std::span<double> row(int j) { return {values.data() + std::size_t(j) * cols, std::size_t(cols)}; }
    std::span<const double> row(int j) const { return {values.data() + std::size_t(j) * cols, std::size_t(cols)}; }
};

inline Field level_field(const TimeGrid& tg, const SpatialGrid& g) { return Field(tg.m_steps + 1, g.n_nodes()); }
inline Field cell_field(const TimeGrid& tg, const SpatialGrid& g) { return Field(tg.m_steps, g.n_nodes()); }

inline std::vector<double> sample(const std::function<double(double)>& f, const SpatialGrid& g)
{
    std::vector<double> v(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) v[i] = f(g.nodes[i]);
    return v;
}

inline double dot(std::span<const double> u, std::span<const double> w, const SpatialGrid& g)
{
    double s = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i) s += g.cell_weights[i] * u[i] * w[i];
    return s;
}

// Discrete (x^alpha u_x)_x at node i from face fluxes; ends use one-sided
// control volumes with the outer flux taken as zero.
inline double flux_divergence(std::span<const double> u, const SpatialGrid& g, int i)
{
    const int N = g.n_cells;
    auto flux = [&](int f) { return std::pow(g.faces[f], g.alpha) * (u[f + 1] - u[f]) / g.h(f); };
    double right = i < N ? flux(i) : 0.0;
    double left = i > 0 ? flux(i - 1) : 0.0;
    return (right - left) / g.cell_weights[i];
}

enum class NormKind { L2, H1alpha, H2alpha };

inline double weighted_norm(std::span<const double> u, const SpatialGrid& g, NormKind kind)
{
    if (int(u.size()) != g.n_nodes()) throw std::invalid_argument("dimension mismatch");
    double s = dot(u, u, g);
    if (kind != NormKind::L2) {
        for (int f = 0; f < g.n_cells; ++f) {
            double d = (u[f + 1] - u[f]) / g.h(f);
            s += g.h(f) * std::pow(g.faces[f], g.alpha) * d * d;
        }
    }
    if (kind == NormKind::H2alpha) {
        for (int i = 1; i < g.n_cells; ++i) {
            double l = flux_divergence(u, g, i);
            s += g.cell_weights[i] * l * l;
        }
    }
    return std::sqrt(s);
}

// Composite midpoint rule for int_0^1 x^beta f(x) dx.
inline double integrate_weighted(const std::function<double(double)>& f, double beta, const SpatialGrid& g)
{
    if (beta <= -1.0 && std::abs(f(0.0)) > 1e-300) throw std::domain_error("non-integrable");
    double s = 0.0;
    for (int c = 0; c < g.n_cells; ++c) {
        double xm = g.faces[c];
        s += g.h(c) * std::pow(xm, beta) * f(xm);
    }
    return s;
}

struct ControlRegion {
    double epsilon = 0.0;  // snapped so that 1 - epsilon is a node
    int first_node = 0;
    std::vector<double> weights;  // trapezoid weights of [1 - epsilon, 1]
};

inline ControlRegion control_region(const SpatialGrid& g, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0,1)");
    int k = 0;
    for (int i = 1; i < g.n_nodes(); ++i)
        if (std::abs(g.nodes[i] - (1.0 - epsilon)) < std::abs(g.nodes[k] - (1.0 - epsilon))) k = i;
    if (g.n_cells - k < 2) throw std::invalid_argument("control region under-resolved (fewer than 2 cells)");
    ControlRegion r;
    r.first_node = k;
    r.epsilon = 1.0 - g.nodes[k];
    r.weights.assign(g.n_nodes(), 0.0);
    for (int c = k; c < g.n_cells; ++c) {
        r.weights[c] += 0.5 * g.h(c);
        r.weights[c + 1] += 0.5 * g.h(c);
    }
    return r;
}

}  // namespace degen
