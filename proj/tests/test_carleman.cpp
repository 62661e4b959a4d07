#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "degen/carleman.hpp"

using namespace degen;

namespace {

struct Fixture {
    SpatialGrid g;
    TimeGrid tg;
    WeightTable w;
    std::vector<AdjointSample> battery;

    Fixture(double alpha, int N, double T, double s, int count = 5, std::uint64_t seed = 42)
        : g(build_grid(alpha, N)), tg(build_time_grid(T, N)), w(build_weight_table(g, tg, s)),
          battery(sample_adjoint_battery(count, seed, g, tg))
    {
    }
};

CarlemanOptions with_eps(double e)
{
    CarlemanOptions o;
    o.epsilon = e;
    return o;
}

CarlemanReport fake(CarlemanKind k, double s, double eps, int N, double log_ratio)
{
    CarlemanReport r;
    r.kind = k;
    r.alpha = 0.5;
    r.s = s;
    r.epsilon = eps;
    r.N = N;
    r.log_ratio = log_ratio;
    r.ratio = std::exp(log_ratio);
    return r;
}

std::vector<CarlemanReport> fake_study(double eps_growth)
{
    std::vector<CarlemanReport> out;
    for (double s : {0.5, 1.0})
        for (int N : {32, 64})
            for (int k = 0; k < 10; ++k) {
                out.push_back(fake(CarlemanKind::Boundary, s, 0.0, N, -1.0 - 0.01 * k));
                out.push_back(fake(CarlemanKind::Distributed, s, 0.4, N, -1.0 - 0.01 * k));
                out.push_back(fake(CarlemanKind::Distributed, s, 0.2, N, -1.0 - 0.01 * k + std::log(eps_growth)));
            }
    return out;
}

}  // namespace

TEST(Battery, Reproducible)
{
    Fixture a(0.5, 16, 1.0, 1.0, 4, 1), b(0.5, 16, 1.0, 1.0, 4, 1);
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(a.battery[k].F.values, b.battery[k].F.values);
        EXPECT_EQ(a.battery[k].v.values, b.battery[k].v.values);
    }
}

TEST(Battery, ZeroSampleFirst)
{
    Fixture a(1.5, 16, 1.0, 1.0, 3);
    for (double v : a.battery[0].v.values) EXPECT_EQ(v, 0.0);
    for (auto k : {CarlemanKind::Boundary, CarlemanKind::WForm}) {
        auto r = carleman_ratio(a.battery[0], a.g, a.tg, a.w, k);
        EXPECT_EQ(r.lhs, 0.0);
        EXPECT_EQ(r.rhs_source + r.rhs_obs, 0.0);
        EXPECT_EQ(r.ratio, 0.0);
    }
}

TEST(Battery, FiftySamplesFinite)
{
    Fixture a(0.5, 24, 1.0, 1.0, 50, 7);
    ASSERT_EQ(a.battery.size(), 50u);
    for (const auto& s : a.battery)
        for (double v : s.v.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(Ratio, KindEpsilonMismatch)
{
    Fixture a(0.5, 16, 1.0, 1.0, 2);
    EXPECT_THROW(carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::Distributed), std::invalid_argument);
    EXPECT_THROW(carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::Boundary, with_eps(0.25)), std::invalid_argument);
    auto tg2 = build_time_grid(1.0, 8);
    EXPECT_THROW(carleman_ratio(a.battery[1], a.g, tg2, a.w, CarlemanKind::Boundary), std::invalid_argument);
}

TEST(Ratio, SignInvariant)
{
    Fixture a(0.5, 16, 2.0, 1.0, 3);
    auto neg = a.battery[2];
    for (auto& v : neg.F.values) v = -v;
    for (auto& v : neg.v.values) v = -v;
    for (auto k : {CarlemanKind::Boundary, CarlemanKind::WForm}) {
        auto p = carleman_ratio(a.battery[2], a.g, a.tg, a.w, k), q = carleman_ratio(neg, a.g, a.tg, a.w, k);
        EXPECT_NEAR(p.log_ratio, q.log_ratio, 1e-12);
    }
    auto p = carleman_ratio(a.battery[2], a.g, a.tg, a.w, CarlemanKind::Distributed, with_eps(0.25));
    auto q = carleman_ratio(neg, a.g, a.tg, a.w, CarlemanKind::Distributed, with_eps(0.25));
    EXPECT_NEAR(p.log_ratio, q.log_ratio, 1e-12);
}

TEST(Ratio, WindowShrinksTerms)
{
    Fixture a(0.5, 32, 2.0, 1.0, 3);
    CarlemanOptions o;
    o.t_lo = 0.5;
    o.t_hi = 1.5;
    auto full = carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::Boundary);
    auto part = carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::Boundary, o);
    EXPECT_LE(part.log_lhs, full.log_lhs + 1e-12);
    EXPECT_LE(part.log_rhs_source, full.log_rhs_source + 1e-12);
}

TEST(Ratio, LhsDominatesZeroOrderTerm)
{
    Fixture a(1.5, 32, 2.0, 1.0, 4);
    const auto& g = a.g;
    const auto& tg = a.tg;
    for (int k = 1; k < 4; ++k) {
        auto r = carleman_ratio(a.battery[k], g, tg, a.w, CarlemanKind::Boundary);
        LogSum sub;
        for (int j = 0; j < tg.m_steps; ++j) {
            double th = a.w.theta[j];
            for (int i = 0; i < g.n_nodes(); ++i) {
                double vm = 0.5 * (a.battery[k].v(j, i) + a.battery[k].v(j + 1, i)), x = g.nodes[i];
                sub.add(2.0 * th * psi(x, 1.5), tg.dt * g.cell_weights[i] * std::pow(th, 3) * std::pow(x, 0.5) * vm * vm);
            }
        }
        EXPECT_GE(r.log_lhs, sub.log() - 1e-12);
    }
}

TEST(Ratio, NonvanishingIncludesInitialEnergy)
{
    Fixture a(0.5, 32, 2.0, 1.0, 3);
    auto r = carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::NonVanishing, with_eps(0.25));
    std::vector<double> v0(a.battery[1].v.row(0).begin(), a.battery[1].v.row(0).end());
    EXPECT_NEAR(r.lhs_initial, dot(v0, v0, a.g), 1e-14);
    EXPECT_GE(r.log_lhs, std::log(r.lhs_initial) - 1e-12);
    EXPECT_GE(r.log_lhs, r.log_lhs_weighted - 1e-12);
}

TEST(Ratio, EffectiveEpsilonSnapped)
{
    Fixture a(0.5, 32, 2.0, 1.0, 2);
    auto r = carleman_ratio(a.battery[1], a.g, a.tg, a.w, CarlemanKind::Distributed, with_eps(0.26));
    EXPECT_DOUBLE_EQ(r.epsilon, 0.26);
    EXPECT_DOUBLE_EQ(r.epsilon_eff, 0.25);
}

TEST(Ratio, Baseline)
{
    Fixture a(0.5, 64, 1.0, 1.0, 20, 42);
    double worst = -INFINITY;
    for (const auto& smp : a.battery) {
        auto r = carleman_ratio(smp, a.g, a.tg, a.w, CarlemanKind::Boundary);
        EXPECT_FALSE(std::isnan(r.log_ratio));
        EXPECT_NE(r.log_ratio, INFINITY);
        worst = std::max(worst, r.log_ratio);
    }
    EXPECT_TRUE(std::isfinite(worst));
}

TEST(Verdict, IdenticalMeshesPass)
{
    auto v = report_ratio_stability(fake_study(1.0));
    EXPECT_TRUE(v.pass);
    EXPECT_TRUE(v.failures.empty());
}

TEST(Verdict, MisScaledObservationFails)
{
    auto v = report_ratio_stability(fake_study(4.0));
    EXPECT_FALSE(v.pass);
    ASSERT_FALSE(v.failures.empty());
    EXPECT_NE(v.failures[0].find("epsilon halving"), std::string::npos);
}

TEST(Verdict, MeshGrowthFails)
{
    auto r = fake_study(1.0);
    for (auto& x : r)
        if (x.N == 64 && x.kind == CarlemanKind::Boundary) x.log_ratio += std::log(1.6);
    EXPECT_FALSE(report_ratio_stability(r).pass);
}

TEST(Verdict, NonFiniteFails)
{
    auto r = fake_study(1.0);
    r[0].log_ratio = INFINITY;
    EXPECT_FALSE(report_ratio_stability(r).pass);
}

TEST(Verdict, InsufficientConfigurations)
{
    auto r = fake_study(1.0);
    r.resize(5);
    EXPECT_THROW(report_ratio_stability(r), std::invalid_argument);
    std::vector<CarlemanReport> one_s;
    for (const auto& x : fake_study(1.0))
        if (x.s == 1.0) one_s.push_back(x);
    EXPECT_THROW(report_ratio_stability(one_s), std::invalid_argument);
}

TEST(Study, DeterministicAndComplete)
{
    CarlemanStudy st;
    st.alpha = 1.5;
    st.T = 2.0;
    st.meshes = {16, 32};
    st.samples = 10;
    auto a = run_carleman_study(st), b = run_carleman_study(st);
    // per (mesh, s): Boundary + WForm once, Distributed + NonVanishing at two widths
    ASSERT_EQ(a.size(), std::size_t(2 * 2 * 6 * 10));
    std::ostringstream sa, sb;
    write_carleman_csv(sa, a);
    write_carleman_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    auto v = report_ratio_stability(a);
    for (const auto& [k, m] : v.max_log_ratio) EXPECT_TRUE(std::isfinite(m));
}
