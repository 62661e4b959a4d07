#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "battery.hpp"
#include "logsum.hpp"
#include "mesh.hpp"
#include "parallel.hpp"
#include "pde.hpp"
#include "trace.hpp"
#include "weights.hpp"

namespace degen {

struct AdjointSample {
    std::uint64_t seed = 0;
    int index = 0;
    Field F;  // one row per time cell
    std::vector<double> vT;
    Field v;
    double alpha = 0.5;
    Degeneracy kind = Degeneracy::Weak;
};

// Adjoint states solved with Crank-Nicolson, so that -v_t - (x^a v_x)_x = F holds at cell midpoints.
inline std::vector<AdjointSample> sample_adjoint_battery(int count, std::uint64_t seed, const SpatialGrid& g,
                                                         const TimeGrid& tg, Roughness roughness = Roughness::Smooth)
{
    auto pairs = random_source_pairs(count, seed, g, tg, roughness);
    std::vector<AdjointSample> out;
    for (int k = 0; k < count; ++k) {
        AdjointSample a;
        a.seed = seed;
        a.index = k;
        a.alpha = g.alpha;
        a.kind = g.kind;
        a.F = std::move(pairs[k].F);
        a.vT = std::move(pairs[k].zT);
        a.v = solve_adjoint(a.vT, a.F, g, tg, 0.5).trajectory;
        out.push_back(std::move(a));
    }
    return out;
}

enum class CarlemanKind { Boundary, Distributed, NonVanishing, WForm };

inline const char* to_string(CarlemanKind k)
{
    switch (k) {
    case CarlemanKind::Boundary: return "boundary";
    case CarlemanKind::Distributed: return "distributed";
    case CarlemanKind::NonVanishing: return "nonvanishing";
    case CarlemanKind::WForm: return "wform";
    }
    return "?";
}

struct CarlemanReport {
    CarlemanKind kind = CarlemanKind::Boundary;
    double alpha = 0.0, s = 0.0;
    double epsilon = 0.0;      // requested (0 when unused)
    double epsilon_eff = 0.0;  // snapped to the mesh
    int N = 0, M = 0;
    std::uint64_t seed = 0;
    int sample = 0;
    double lhs = 0.0, rhs_source = 0.0, rhs_obs = 0.0, ratio = 0.0;
    double log_ratio = -std::numeric_limits<double>::infinity();
    double log_lhs = 0.0, log_rhs_source = 0.0, log_rhs_obs = 0.0;
    double lhs_initial = 0.0;  // |v(0)|^2 part of the nonvanishing LHS
    double log_lhs_weighted = 0.0;
};

struct CarlemanOptions {
    std::optional<double> epsilon;
    double t_lo = 0.0;
    double t_hi = std::numeric_limits<double>::infinity();
};

inline CarlemanReport carleman_ratio(const AdjointSample& a, const SpatialGrid& g, const TimeGrid& tg,
                                     const WeightTable& w, CarlemanKind kind, const CarlemanOptions& opt = {})
{
    const bool needs_eps = kind == CarlemanKind::Distributed || kind == CarlemanKind::NonVanishing;
    if (needs_eps != opt.epsilon.has_value()) throw std::invalid_argument("kind/epsilon mismatch");
    if (w.n_times != tg.m_steps || w.n_nodes != g.n_nodes()) throw std::invalid_argument("weight table does not match grids");
    const int n = g.n_nodes(), M = tg.m_steps, N = g.n_cells;
    const double s = w.s, al = g.alpha, dt = tg.dt;
    const bool nv = kind == CarlemanKind::NonVanishing;
    ControlRegion omega;
    if (needs_eps) omega = control_region(g, *opt.epsilon);
    auto L = assemble_operator(g);

    LogSum lhs, src, obs;
    std::vector<double> vm(n), vt(n);
    // time factor k(t) = s theta or tau, spatial profile via psi
    auto kfac = [&](int j) { return nv ? w.tau[j] : s * w.theta[j]; };
    auto logw = [&](int j, double x) { return 2.0 * s * (nv ? w.tau[j] : w.theta[j]) * psi(x, al); };

    if (kind != CarlemanKind::WForm) {
        for (int j = 0; j < M; ++j) {
            double t = tg.midpoints[j];
            if (t < opt.t_lo || t >= opt.t_hi) continue;
            for (int i = 0; i < n; ++i) {
                vm[i] = 0.5 * (a.v(j, i) + a.v(j + 1, i));
                vt[i] = (a.v(j + 1, i) - a.v(j, i)) / dt;
            }
            auto lv = L.apply(vm);
            const double k = kfac(j);
            for (int i = 0; i < n; ++i) {
                double x = g.nodes[i], c = g.cell_weights[i], lw = logw(j, x);
                lhs.add(lw, dt * c * (vt[i] * vt[i] + lv[i] * lv[i]) / k);
                lhs.add(lw, dt * c * k * k * k * std::pow(x, 2.0 - al) * vm[i] * vm[i]);
                src.add(lw, dt * c * a.F(j, i) * a.F(j, i));
                if (needs_eps && omega.weights[i] > 0.0) {
                    double pref = nv ? std::pow(w.tau[j], 7) : std::pow(s, 7) * std::pow(w.theta[j], 7);
                    obs.add(lw, dt * omega.weights[i] * pref * std::pow(x, 2.0 - al) * vm[i] * vm[i] /
                                    std::pow(omega.epsilon, 3));
                }
            }
            for (int f = 0; f < N; ++f) {
                double d = (vm[f + 1] - vm[f]) / g.h(f);
                lhs.add(logw(j, g.faces[f]), dt * g.h(f) * k * std::pow(g.faces[f], al) * d * d);
            }
            if (!needs_eps) {
                double vx = derivative_at_right(vm, g);
                obs.add(logw(j, 1.0), dt * s * w.theta[j] * vx * vx);
            }
        }
    } else {
        // w = e^{s phi} v at time levels, zero at t = 0 and t = T; values carry e^{-kappa/2}
        double kappa = -std::numeric_limits<double>::infinity();
        for (int j = 1; j < M; ++j) kappa = std::max(kappa, 2.0 * s * theta(tg.levels[j], tg.T) * psi(1.0, al));
        Field wl = level_field(tg, g);
        for (int j = 1; j < M; ++j) {
            double th = theta(tg.levels[j], tg.T);
            for (int i = 0; i < n; ++i)
                wl(j, i) = clamped_exp(s * th * psi(g.nodes[i], al) - 0.5 * kappa) * a.v(j, i);
        }
        for (int j = 0; j < M; ++j) {
            double t = tg.midpoints[j];
            if (t < opt.t_lo || t >= opt.t_hi) continue;
            for (int i = 0; i < n; ++i) {
                vm[i] = 0.5 * (wl(j, i) + wl(j + 1, i));
                vt[i] = (wl(j + 1, i) - wl(j, i)) / dt;
            }
            auto lw = L.apply(vm);
            const double k = s * w.theta[j];
            for (int i = 0; i < n; ++i) {
                double x = g.nodes[i], c = g.cell_weights[i];
                lhs.add(kappa, dt * c * (vt[i] * vt[i] + lw[i] * lw[i]) / k);
                lhs.add(kappa, dt * c * k * k * k * std::pow(x, 2.0 - al) * vm[i] * vm[i]);
                src.add(logw(j, x), dt * c * a.F(j, i) * a.F(j, i));
            }
            for (int f = 0; f < N; ++f) {
                double d = (vm[f + 1] - vm[f]) / g.h(f);
                lhs.add(kappa, dt * g.h(f) * k * std::pow(g.faces[f], al) * d * d);
            }
            double wx = derivative_at_right(vm, g);
            obs.add(kappa, dt * s * w.theta[j] * wx * wx);
        }
    }

    CarlemanReport r;
    r.kind = kind;
    r.alpha = al;
    r.s = s;
    r.epsilon = opt.epsilon.value_or(0.0);
    r.epsilon_eff = needs_eps ? omega.epsilon : 0.0;
    r.N = N;
    r.M = M;
    r.seed = a.seed;
    r.sample = a.index;
    r.log_lhs_weighted = lhs.log();
    if (nv) {
        std::vector<double> v0(a.v.row(0).begin(), a.v.row(0).end());
        r.lhs_initial = dot(v0, v0, g);
        lhs.add(0.0, r.lhs_initial);
    }
    r.log_lhs = lhs.log();
    r.log_rhs_source = src.log();
    r.log_rhs_obs = obs.log();
    r.lhs = lhs.value();
    r.rhs_source = src.value();
    r.rhs_obs = obs.value();
    LogSum rhs = src;
    rhs.add(obs);
    if (lhs.zero()) r.ratio = 0.0;
    else if (rhs.zero()) r.ratio = r.log_ratio = std::numeric_limits<double>::infinity();
    else r.log_ratio = lhs.log() - rhs.log(), r.ratio = std::exp(r.log_ratio);
    return r;
}

struct StabilityVerdict {
    bool pass = true;
    std::vector<std::string> failures;
    // (kind, alpha, s, epsilon, N) -> log of the max ratio
    std::map<std::tuple<int, double, double, double, int>, double> max_log_ratio;
};

inline StabilityVerdict report_ratio_stability(const std::vector<CarlemanReport>& reports,
                                               double mesh_factor = 1.5, double eps_factor = 2.0)
{
    using Key = std::tuple<int, double, double, double, int>;
    StabilityVerdict v;
    std::map<Key, int> counts;
    for (const auto& r : reports) {
        Key k{int(r.kind), r.alpha, r.s, r.epsilon, r.N};
        auto it = v.max_log_ratio.find(k);
        if (it == v.max_log_ratio.end()) v.max_log_ratio[k] = r.log_ratio;
        else it->second = std::max(it->second, r.log_ratio);
        counts[k]++;
    }
    std::map<std::tuple<int, double>, std::vector<double>> svals;
    std::map<std::tuple<int, double, double, double>, std::vector<int>> meshes;
    for (const auto& [k, c] : counts) {
        if (c < 10) throw std::invalid_argument("insufficient configurations: fewer than 10 samples");
        auto [kind, al, s, eps, N] = k;
        auto& sv = svals[{kind, al}];
        if (std::find(sv.begin(), sv.end(), s) == sv.end()) sv.push_back(s);
        meshes[{kind, al, s, eps}].push_back(N);
    }
    for (const auto& [k, sv] : svals)
        if (sv.size() < 2) throw std::invalid_argument("insufficient configurations: fewer than 2 s values");
    auto label = [](const Key& k) {
        auto [kind, al, s, eps, N] = k;
        return std::string(to_string(CarlemanKind(kind))) + " alpha=" + std::to_string(al) + " s=" + std::to_string(s) +
               " eps=" + std::to_string(eps) + " N=" + std::to_string(N);
    };
    for (const auto& [k, m] : v.max_log_ratio)
        if (m == std::numeric_limits<double>::infinity() || std::isnan(m)) v.pass = false, v.failures.push_back("non-finite ratio: " + label(k));
    for (auto& [k, Ns] : meshes) {
        if (Ns.size() < 2) throw std::invalid_argument("insufficient configurations: fewer than 2 mesh levels");
        std::sort(Ns.begin(), Ns.end());
        auto [kind, al, s, eps] = k;
        for (std::size_t q = 0; q + 1 < Ns.size(); ++q) {
            if (Ns[q + 1] != 2 * Ns[q]) continue;
            double a = v.max_log_ratio[{kind, al, s, eps, Ns[q]}], b = v.max_log_ratio[{kind, al, s, eps, Ns[q + 1]}];
            if (b > a + std::log(mesh_factor)) v.pass = false, v.failures.push_back("mesh growth > factor: " + label({kind, al, s, eps, Ns[q + 1]}));
        }
    }
    for (const auto& [k, m] : v.max_log_ratio) {
        auto [kind, al, s, eps, N] = k;
        if (CarlemanKind(kind) != CarlemanKind::Distributed) continue;
        for (const auto& [k2, m2] : v.max_log_ratio) {
            auto [kind2, al2, s2, eps2, N2] = k2;
            if (kind2 != kind || al2 != al || s2 != s || N2 != N) continue;
            if (std::abs(eps2 - eps / 2.0) > 1e-9 * eps) continue;
            if (std::abs(m - m2) > std::log(eps_factor)) v.pass = false, v.failures.push_back("epsilon halving > factor: " + label(k2));
        }
    }
    return v;
}

inline void write_carleman_csv(std::ostream& os, const std::vector<CarlemanReport>& reports)
{
    os << "kind,alpha,s,epsilon,N,M,seed,lhs,rhs_source,rhs_obs,ratio,sample,epsilon_eff,log_lhs,log_rhs_source,log_rhs_obs,log_ratio\n";
    char buf[512];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%d,%d,%llu,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      to_string(r.kind), r.alpha, r.s, r.epsilon, r.N, r.M, (unsigned long long)r.seed, r.lhs,
                      r.rhs_source, r.rhs_obs, r.ratio, r.sample, r.epsilon_eff, r.log_lhs, r.log_rhs_source,
                      r.log_rhs_obs, r.log_ratio);
        os << buf;
    }
}

struct CarlemanStudy {
    double alpha = 0.5;
    double T = 1.0;
    std::vector<double> s_values{0.5, 1.0};
    std::vector<int> meshes{32, 64};  // N = M
    double epsilon = 0.4;             // Distributed and NonVanishing also run at epsilon / 2
    int samples = 20;
    std::uint64_t seed = 42;
    double grading = 1.0;
};

// Every (mesh, s, kind, epsilon) configuration over one battery per mesh; order is deterministic.
inline std::vector<CarlemanReport> run_carleman_study(const CarlemanStudy& st)
{
    struct Job {
        int N;
        double s;
    };
    std::vector<Job> jobs;
    for (int N : st.meshes)
        for (double s : st.s_values) jobs.push_back({N, s});
    std::vector<std::vector<CarlemanReport>> out(jobs.size());
    parallel_for(int(jobs.size()), [&](int q) {
        const auto& jb = jobs[q];
        auto g = build_grid(st.alpha, jb.N, st.grading);
        auto tg = build_time_grid(st.T, jb.N);
        auto w = build_weight_table(g, tg, jb.s);
        auto battery = sample_adjoint_battery(st.samples, st.seed, g, tg);
        for (auto kind : {CarlemanKind::Boundary, CarlemanKind::Distributed, CarlemanKind::NonVanishing, CarlemanKind::WForm}) {
            std::vector<std::optional<double>> eps{std::nullopt};
            if (kind == CarlemanKind::Distributed || kind == CarlemanKind::NonVanishing) eps = {st.epsilon, st.epsilon / 2.0};
            for (const auto& e : eps) {
                CarlemanOptions o;
                o.epsilon = e;
                for (const auto& a : battery) {
                    out[q].push_back(carleman_ratio(a, g, tg, w, kind, o));
                }
            }
        }
    });
    std::vector<CarlemanReport> all;
    for (auto& v : out) all.insert(all.end(), v.begin(), v.end());
    return all;
}

}  // namespace degen
