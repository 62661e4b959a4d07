#pragma once

#include <cmath>
#include <exception>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "battery.hpp"
#include "carleman.hpp"
#include "config.hpp"
#include "hum.hpp"
#include "limit.hpp"
#include "pde.hpp"
#include "report.hpp"
#include "trace.hpp"

namespace degen {

enum ExitCode : int { kExitOk = 0, kExitFail = 1, kExitError = 2 };

class Emitter {
public:
    explicit Emitter(const RunConfig& c)
        : sink_(c.out, to_string(c.command), c.alpha), formats_(c.format.begin(), c.format.end())
    {
    }

    bool wants(const std::string& f) const { return formats_.count(f) > 0; }
    void csv(const Table& t, const std::string& part = {})
    {
        if (wants("csv")) sink_.csv(t, part);
    }
    void json(const Json& j, const std::string& part = {})
    {
        if (wants("json")) sink_.json(j, part);
    }
    void svg(const PlotSpec& p, const std::vector<Series>& s, const std::string& part = {})
    {
        if (wants("svg")) sink_.svg(p, s, part);
    }
    void raw(const std::string& ext, const std::string& content, const std::string& part = {})
    {
        if (wants(ext)) sink_.write(ext, content, part);
    }
    const std::vector<std::filesystem::path>& written() const { return sink_.written(); }

private:
    ReportSink sink_;
    std::set<std::string> formats_;
};

inline Json stats_json(const ResidualStats& r)
{
    Json j;
    j["max"] = json_num(r.max);
    j["mean"] = json_num(r.mean);
    j["residuals"] = json_array(r.residuals);
    return j;
}

inline SolveOptions solve_options(const RunConfig& c)
{
    SolveOptions o;
    o.method = c.solver == "cg" ? SolverMethod::ConjugateGradient : SolverMethod::Direct;
    o.rel_tol = c.rel_tol;
    o.max_iter = c.max_iter;
    return o;
}

inline int samples_or(const RunConfig& c, int fallback) { return c.samples > 0 ? c.samples : fallback; }

inline int run_solve(const RunConfig& c, std::ostream& out)
{
    auto g = build_grid(c.alpha, c.nx, c.grading);
    auto tg = build_time_grid(c.T, c.nt);
    auto u0 = sample(default_initial_state(c.alpha), g);
    auto u = solve_forward(u0, Field{}, g, tg, 0.5).trajectory;

    Table t{{"t", "l2", "h1alpha"}};
    Series l2{"|u(t)|", {}, {}};
    for (int j = 0; j <= tg.m_steps; ++j) {
        double a = weighted_norm(u.row(j), g, NormKind::L2), b = weighted_norm(u.row(j), g, NormKind::H1alpha);
        t.add(tg.levels[j], a, b);
        l2.x.push_back(tg.levels[j]);
        l2.y.push_back(a);
    }
    int base = std::max(8, c.nx / 4);
    auto mms = mms_convergence_study(c.alpha, {base, 2 * base, 4 * base}, 0.5, c.T, c.grading);
    auto pairs = random_source_pairs(3, c.seed, g, tg);
    double dual = duality_residual(u0, pairs[1].F, pairs[2].F, pairs[2].zT, g, tg, 0.5);

    Json j;
    j["config"] = to_json(c);
    j["final_l2"] = json_num(l2.y.back());
    j["mms"] = {{"levels", mms.levels}, {"errors", json_array(mms.errors)}, {"order", json_num(mms.order)}};
    j["duality_residual"] = json_num(dual);

    Emitter em(c);
    em.csv(t);
    em.json(j);
    em.svg({"uncontrolled state", "t", "L2 norm", true, {}}, {l2});
    out << "solve: |u(T)| = " << fmt_num(l2.y.back()) << ", mms order = " << fmt_num(mms.order)
        << ", duality residual = " << fmt_num(dual) << "\n";
    return kExitOk;
}

inline int run_control(const RunConfig& c, std::ostream& out)
{
    auto p = make_control_problem(c.alpha, c.T, c.epsilon, c.s, c.nx, c.nt, default_initial_state(c.alpha), c.grading);
    auto cs = solve_control(p, solve_options(c));
    if (!cs.converged)
        std::cerr << "warning: " << to_string(cs.method) << " solver stopped at relative residual " << fmt_num(cs.rel_residual)
                  << "\n";
    auto pairs = random_source_pairs(samples_or(c, 20), c.seed, p.grid, p.tgrid);
    auto tr = transposition_residual(cs, p, pairs);
    auto bc = extract_boundary_control(cs, p);
    auto fwd = resimulate(cs, p, 1.0);
    const auto& g = p.grid;
    const auto& tg = p.tgrid;
    double n0 = weighted_norm(p.u0, g, NormKind::L2);
    double terminal = weighted_norm(cs.u_hat.row(tg.m_steps), g, NormKind::L2) / n0;
    double terminal_fwd = weighted_norm(fwd.row(tg.m_steps), g, NormKind::L2) / n0;

    Table t{{"t", "state_l2", "control_l2", "g"}};
    Series su{"|u(t)|", {}, {}}, sh{"|h(t)|", {}, {}}, sg{"|g(t)|", {}, {}};
    for (int j = 0; j < tg.m_steps; ++j) {
        double un = weighted_norm(cs.u_hat.row(j + 1), g, NormKind::L2);
        double hn = 0.0;
        for (int i = 0; i < g.n_nodes(); ++i) hn += p.omega.weights[i] * cs.h_hat(j, i) * cs.h_hat(j, i);
        hn = std::sqrt(hn);
        t.add(tg.midpoints[j], un, hn, bc.g[j]);
        double tm = tg.midpoints[j];
        su.x.push_back(tm), su.y.push_back(un);
        sh.x.push_back(tm), sh.y.push_back(hn);
        sg.x.push_back(tm), sg.y.push_back(std::abs(bc.g[j]));
    }

    Json j;
    j["config"] = to_json(c);
    j["epsilon_effective"] = p.epsilon;
    j["solver"] = {{"method", to_string(cs.method)},
                   {"iterations", cs.iterations},
                   {"rel_residual", json_num(cs.rel_residual)},
                   {"converged", cs.converged}};
    j["kappa"] = json_num(cs.kappa);
    j["log_state_norm"] = json_num(cs.norms.log_state);
    j["log_penalty_norm"] = json_num(cs.norms.log_penalty);
    j["log_penalty_norm_from_control"] = json_num(cs.norms.log_penalty_from_control);
    j["terminal_ratio"] = json_num(terminal);
    j["terminal_ratio_resimulated"] = json_num(terminal_fwd);
    j["transposition"] = stats_json(tr);
    j["g_l2"] = json_num(bc.l2);

    Emitter em(c);
    em.csv(t);
    em.json(j);
    em.svg({"controlled state and control", "t", "L2 norm", true, {}}, {su, sh, sg});
    out << "control: epsilon = " << fmt_num(p.epsilon) << ", residual = " << fmt_num(cs.rel_residual)
        << ", transposition max = " << fmt_num(tr.max) << ", |u(T)|/|u0| = " << fmt_num(terminal_fwd)
        << " (resimulated)\n";
    return kExitOk;
}

inline SweepConfig sweep_config(const RunConfig& c)
{
    SweepConfig sc;
    sc.alpha = c.alpha;
    sc.T = c.T;
    sc.s = c.s;
    sc.n_cells = c.nx;
    sc.m_steps = c.nt;
    sc.grading = c.grading;
    sc.eps_list = c.eps_list;
    sc.battery_size = samples_or(c, 20);
    sc.seed = c.seed;
    sc.solver = solve_options(c);
    return sc;
}

inline Json sweep_json(const SweepReport& r)
{
    Json j;
    Json entries = Json::array();
    for (const auto& e : r.entries) {
        Json x;
        x["eps_requested"] = e.eps_requested;
        x["epsilon"] = e.epsilon;
        x["ok"] = e.ok;
        x["error"] = e.error;
        x["iterations"] = e.iterations;
        x["rel_residual"] = json_num(e.rel_residual);
        x["converged"] = e.converged;
        x["log_state_norm"] = json_num(e.norms.log_state);
        x["log_penalty_norm"] = json_num(e.norms.log_penalty);
        x["g_l2"] = json_num(e.g.l2);
        x["one_third"] = json_num(e.one_third);
        x["terminal_ratio"] = json_num(e.terminal_ratio);
        x["transposition"] = stats_json(e.transposition);
        x["weak_limit"] = stats_json(e.weak_limit);
        x["boundary_transposition"] = stats_json(e.boundary);
        x["boundary_transposition_flipped_sign"] = stats_json(e.boundary_flipped);
        x["pairings"] = json_array(e.pairings);
        x["log_multiplier_bound"] = json_num(e.log_multiplier_bound);
        x["g"] = json_array(e.g.g);
        entries.push_back(x);
    }
    j["entries"] = entries;
    j["g_differences"] = json_array(r.g_differences);
    j["pairing_spreads"] = json_array(r.pairing_spreads);
    j["pairing_cauchy_fraction"] = json_num(r.pairing_cauchy_fraction);
    if (r.limit_state_available) j["limit_state_gap"] = json_num(r.limit_state_gap);
    return j;
}

inline int run_sweep(const RunConfig& c, std::ostream& out)
{
    auto r = epsilon_sweep(sweep_config(c));
    bool failed = false;
    for (const auto& e : r.entries) {
        if (!e.ok) std::cerr << "error: epsilon " << fmt_num(e.eps_requested) << ": " << e.error << "\n", failed = true;
        else if (!e.converged)
            std::cerr << "warning: epsilon " << fmt_num(e.epsilon) << " solver stopped at relative residual "
                      << fmt_num(e.rel_residual) << "\n";
    }

    Table t{{"eps_requested", "epsilon", "ok", "iterations", "rel_residual", "log_state_norm", "log_penalty_norm", "g_l2",
             "one_third", "terminal_ratio", "transposition_max", "weak_limit_max", "boundary_max", "boundary_flipped_max",
             "log_multiplier_bound"}};
    for (const auto& e : r.entries)
        t.add(e.eps_requested, e.epsilon, e.ok, e.iterations, e.rel_residual, e.norms.log_state, e.norms.log_penalty, e.g.l2,
              e.one_third, e.terminal_ratio, e.transposition.max, e.weak_limit.max, e.boundary.max, e.boundary_flipped.max,
              e.log_multiplier_bound);

    Table gt;
    gt.columns.push_back("t");
    for (const auto& e : r.entries) gt.columns.push_back("g_eps_" + fmt_num(e.epsilon));
    std::vector<Series> gs;
    for (const auto& e : r.entries) gs.push_back({"eps=" + fmt_num(e.epsilon), e.g.t, e.g.g});
    const int M = c.nt;
    for (int j = 0; j < M; ++j) {
        std::vector<std::string> row{fmt_num((j + 0.5) * c.T / M)};
        for (const auto& e : r.entries) row.push_back(e.ok ? fmt_num(e.g.g[j]) : "nan");
        gt.rows.push_back(row);
    }

    Table ct{{"k", "eps_from", "eps_to", "g_difference", "pairing_spread"}};
    for (std::size_t k = 0; k < r.g_differences.size(); ++k)
        ct.add(int(k), r.entries[k].epsilon, r.entries[k + 1].epsilon, r.g_differences[k], r.pairing_spreads[k]);

    Series wl{"weak-limit max", {}, {}}, bt{"boundary transposition max", {}, {}};
    for (const auto& e : r.entries)
        if (e.ok) wl.x.push_back(e.epsilon), wl.y.push_back(e.weak_limit.max), bt.x.push_back(e.epsilon), bt.y.push_back(e.boundary.max);

    Json j;
    j["config"] = to_json(c);
    j["sweep"] = sweep_json(r);

    Emitter em(c);
    em.csv(t);
    em.csv(gt, "g");
    em.csv(ct, "cross");
    em.json(j);
    em.svg({"boundary control candidates", "t", "g", false, {}}, gs, "g");
    em.svg({"residual decay", "epsilon", "residual", true, {}}, {wl, bt}, "residuals");

    for (const auto& e : r.entries)
        if (e.ok)
            out << "sweep: epsilon = " << fmt_num(e.epsilon) << ", |g| = " << fmt_num(e.g.l2)
                << ", weak-limit max = " << fmt_num(e.weak_limit.max) << ", boundary max = " << fmt_num(e.boundary.max)
                << "\n";
    return failed ? kExitError : kExitOk;
}

inline int run_verify_carleman(const RunConfig& c, std::ostream& out)
{
    CarlemanStudy st;
    st.alpha = c.alpha;
    st.T = c.T;
    st.s_values = c.s_list;
    st.meshes = {std::max(4, c.nx / 2), c.nx};
    st.epsilon = c.eps_list.front();
    st.samples = samples_or(c, 20);
    st.seed = c.seed;
    st.grading = c.grading;
    auto reports = run_carleman_study(st);
    auto v = report_ratio_stability(reports);

    Json j;
    j["config"] = to_json(c);
    j["pass"] = v.pass;
    j["failures"] = v.failures;
    Json mx = Json::array();
    for (const auto& [k, m] : v.max_log_ratio) {
        auto [kind, al, s, eps, N] = k;
        mx.push_back({{"kind", to_string(CarlemanKind(kind))}, {"s", s}, {"epsilon", eps}, {"N", N}, {"max_log_ratio", json_num(m)}});
    }
    j["max_log_ratio"] = mx;

    std::ostringstream csv;
    write_carleman_csv(csv, reports);
    Emitter em(c);
    em.raw("csv", csv.str());
    em.json(j);
    for (const auto& f : v.failures) out << "  " << f << "\n";
    out << "verify-carleman: " << (v.pass ? "PASS" : "FAIL") << " (" << reports.size() << " reports)\n";
    return v.pass ? kExitOk : kExitFail;
}

inline int nearest_node(const SpatialGrid& g, double x)
{
    int k = 0;
    for (int i = 1; i < g.n_nodes(); ++i)
        if (std::abs(g.nodes[i] - x) < std::abs(g.nodes[k] - x)) k = i;
    return k;
}

inline int run_verify_trace(const RunConfig& c, std::ostream& out)
{
    constexpr double slack = 1.05;
    auto tc = trace_constants(c.alpha);
    auto g = build_grid(c.alpha, c.nx, c.grading);
    double a = g.nodes[nearest_node(g, 0.25)];
    auto polys = random_polynomials(samples_or(c, 100), c.seed);
    Table t{{"sample", "ratio_trace", "ratio_deriv", "ratio_ux", "ratio_uxx"}};
    double worst = 0.0;
    for (std::size_t k = 0; k < polys.size(); ++k) {
        auto tr = check_trace_bounds(polys[k], g, tc);
        auto in = interior_derivative_bounds(polys[k], g, a);
        t.add(int(k), tr.ratio_trace, tr.ratio_deriv, in.ratio_ux, in.ratio_uxx);
        worst = std::max({worst, tr.ratio_trace, tr.ratio_deriv, in.ratio_ux, in.ratio_uxx});
    }
    bool pass = worst <= slack;
    Json j;
    j["config"] = to_json(c);
    j["A_alpha"] = tc.A_alpha;
    j["B_alpha"] = tc.B_alpha;
    j["interior_point"] = a;
    j["max_ratio"] = json_num(worst);
    j["pass"] = pass;
    Emitter em(c);
    em.csv(t);
    em.json(j);
    out << "verify-trace: max ratio " << fmt_num(worst) << " over " << polys.size() << " samples: " << (pass ? "PASS" : "FAIL")
        << "\n";
    return pass ? kExitOk : kExitFail;
}

// Admissible w: x p(x) when alpha < 1, (1 - x) p(x) when alpha > 1.
inline int run_verify_hardy(const RunConfig& c, std::ostream& out)
{
    if (c.alpha == 1.0) throw std::invalid_argument("alpha=1 excluded");
    constexpr double slack = 1.05;
    auto g = build_grid(c.alpha, c.nx, c.grading);
    auto polys = random_polynomials(samples_or(c, 100), c.seed);
    Table t{{"sample", "ratio"}};
    double worst = 0.0;
    for (std::size_t k = 0; k < polys.size(); ++k) {
        const auto& p = polys[k];
        std::function<double(double)> w;
        if (c.alpha < 1.0) w = [&p](double x) { return x * p(x); };
        else w = [&p](double x) { return (1.0 - x) * p(x); };
        double r = hardy_poincare_ratio(w, g, c.alpha);
        t.add(int(k), r);
        worst = std::max(worst, r);
    }
    bool pass = worst <= slack;
    Json j;
    j["config"] = to_json(c);
    j["constant"] = 4.0 / ((1.0 - c.alpha) * (1.0 - c.alpha));
    j["max_ratio"] = json_num(worst);
    j["pass"] = pass;
    Emitter em(c);
    em.csv(t);
    em.json(j);
    out << "verify-hardy: max ratio " << fmt_num(worst) << " over " << polys.size() << " samples: " << (pass ? "PASS" : "FAIL")
        << "\n";
    return pass ? kExitOk : kExitFail;
}

inline int run_trace_constants(const RunConfig& c, std::ostream& out)
{
    auto tc = trace_constants(c.alpha);
    Table t{{"alpha", "A_alpha", "lambda_A", "B_alpha", "lambda_B"}};
    t.add(tc.alpha, tc.A_alpha, tc.lambda_A, tc.B_alpha, tc.lambda_B);
    Json j;
    j["config"] = to_json(c);
    j["A_alpha"] = tc.A_alpha;
    j["lambda_A"] = tc.lambda_A;
    j["B_alpha"] = tc.B_alpha;
    j["lambda_B"] = tc.lambda_B;
    Emitter em(c);
    em.csv(t);
    em.json(j);
    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha = %g\nA_alpha = %.8f (lambda = %.6f)\nB_alpha = %.8f (lambda = %.6f)\n", tc.alpha,
                  tc.A_alpha, tc.lambda_A, tc.B_alpha, tc.lambda_B);
    out << buf;
    return kExitOk;
}

// 0 success, 1 verification failure, 2 error; diagnostics go to err.
inline int run_command(const RunConfig& c, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    try {
        validate(c);
        switch (c.command) {
        case Command::Solve: return run_solve(c, out);
        case Command::Control: return run_control(c, out);
        case Command::Sweep: return run_sweep(c, out);
        case Command::VerifyCarleman: return run_verify_carleman(c, out);
        case Command::VerifyTrace: return run_verify_trace(c, out);
        case Command::VerifyHardy: return run_verify_hardy(c, out);
        case Command::TraceConstants: return run_trace_constants(c, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitError;
}

}  // namespace degen
