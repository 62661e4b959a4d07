#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "degen/battery.hpp"
#include "degen/pde.hpp"

using namespace degen;
using std::numbers::pi;

namespace {

std::vector<double> random_free(const SpatialGrid& g, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<double> u(g.n_nodes(), 0.0);
    for (int i = 0; i < g.n_nodes(); ++i)
        if (!g.pinned(i)) u[i] = d(rng);
    return u;
}

}  // namespace

TEST(Operator, ClassicalStencil)
{
    auto g = build_grid(0.0, 10);
    auto L = assemble_operator(g);
    const double h2 = 0.01;
    for (int i = 1; i < 10; ++i) {
        EXPECT_NEAR(L.lower[i] * h2, 1.0, 1e-12);
        EXPECT_NEAR(L.diag[i] * h2, -2.0, 1e-12);
        EXPECT_NEAR(L.upper[i] * h2, 1.0, 1e-12);
    }
    EXPECT_EQ(L.diag[0], 0.0);
    EXPECT_EQ(L.diag[10], 0.0);
}

TEST(Operator, StrongZeroFluxRow)
{
    auto g = build_grid(1.5, 16);
    auto L = assemble_operator(g);
    EXPECT_EQ(L.lower[0], 0.0);
    EXPECT_GT(L.upper[0], 0.0);
    EXPECT_DOUBLE_EQ(L.diag[0], -L.upper[0]);
}

TEST(Operator, SelfAdjoint)
{
    std::mt19937_64 rng(3);
    for (double a : {0.0, 0.4, 1.0, 1.6})
        for (double gr : {1.0, 2.0}) {
            auto g = build_grid(a, 33, gr);
            auto L = assemble_operator(g);
            for (int k = 0; k < 10; ++k) {
                auto u = random_free(g, rng), w = random_free(g, rng);
                double lhs = dot(L.apply(u), w, g), rhs = dot(u, L.apply(w), g);
                double scale = std::sqrt(dot(u, u, g) * dot(w, w, g));
                EXPECT_LE(std::abs(lhs - rhs), 1e-10 * scale * std::max(1.0, std::abs(lhs)));
            }
        }
}

TEST(Operator, NonPositive)
{
    std::mt19937_64 rng(4);
    for (double a : {0.5, 1.5}) {
        auto g = build_grid(a, 40);
        auto L = assemble_operator(g);
        for (int k = 0; k < 10; ++k) {
            auto u = random_free(g, rng);
            EXPECT_LE(dot(L.apply(u), u, g), 1e-12);
        }
    }
}

TEST(Operator, MatchesFluxDivergence)
{
    std::mt19937_64 rng(5);
    auto g = build_grid(0.8, 20, 1.7);
    auto L = assemble_operator(g);
    auto u = random_free(g, rng);
    auto Lu = L.apply(u);
    for (int i = 1; i < g.n_cells; ++i) EXPECT_NEAR(Lu[i], flux_divergence(u, g, i), 1e-9 * std::max(1.0, std::abs(Lu[i])));
}

TEST(Forward, ClassicalBenchmark)
{
    auto g = build_grid(0.0, 200);
    auto tg = build_time_grid(0.1, 200);
    auto u0 = sample([](double x) { return std::sin(pi * x); }, g);
    auto u = solve_forward(u0, Field{}, g, tg).trajectory;
    std::vector<double> e(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) e[i] = u(200, i) - std::exp(-0.1 * pi * pi) * std::sin(pi * g.nodes[i]);
    EXPECT_LE(weighted_norm(e, g, NormKind::L2), 5e-3);
}

TEST(Forward, ZeroStaysZero)
{
    auto g = build_grid(0.5, 16);
    auto tg = build_time_grid(1.0, 16);
    std::vector<double> u0(g.n_nodes(), 0.0);
    auto u = solve_forward(u0, Field{}, g, tg).trajectory;
    for (double v : u.values) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SizeChecks)
{
    auto g = build_grid(0.5, 16);
    auto tg = build_time_grid(1.0, 16);
    std::vector<double> bad(3, 0.0);
    EXPECT_THROW(solve_forward(bad, Field{}, g, tg), std::invalid_argument);
    std::vector<double> u0(g.n_nodes(), 0.0);
    EXPECT_THROW(solve_forward(u0, Field(3, 3), g, tg), std::invalid_argument);
}

TEST(Forward, Linear)
{
    std::mt19937_64 rng(6);
    auto g = build_grid(1.2, 24);
    auto tg = build_time_grid(1.0, 24);
    auto a = random_free(g, rng), b = random_free(g, rng);
    auto src = random_source_pairs(2, 9, g, tg);
    std::vector<double> c(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) c[i] = 2.0 * a[i] - b[i];
    Field s = src[1].F;
    auto ua = solve_forward(a, s, g, tg).trajectory;
    auto ub = solve_forward(b, s, g, tg).trajectory;
    auto uc = solve_forward(c, s, g, tg).trajectory;
    for (std::size_t k = 0; k < ua.values.size(); ++k)
        EXPECT_NEAR(uc.values[k], 2.0 * ua.values[k] - ub.values[k], 1e-12);
}

TEST(Forward, MaxNormDecaysWithoutSource)
{
    std::mt19937_64 rng(8);
    for (double a : {0.5, 1.5}) {
        auto g = build_grid(a, 32);
        auto tg = build_time_grid(1.0, 64);
        auto u0 = random_free(g, rng);
        auto u = solve_forward(u0, Field{}, g, tg, 1.0).trajectory;
        double m0 = 0;
        for (double v : u0) m0 = std::max(m0, std::abs(v));
        for (double v : u.values) EXPECT_LE(std::abs(v), m0 + 1e-14);
    }
}

TEST(Adjoint, ZeroStaysZero)
{
    auto g = build_grid(1.5, 16);
    auto tg = build_time_grid(1.0, 16);
    std::vector<double> zT(g.n_nodes(), 0.0);
    auto z = solve_adjoint(zT, Field{}, g, tg).trajectory;
    for (double v : z.values) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, ClassicalTimeReversal)
{
    auto g = build_grid(0.0, 200);
    auto tg = build_time_grid(0.1, 200);
    auto zT = sample([](double x) { return std::sin(pi * x); }, g);
    auto z = solve_adjoint(zT, Field{}, g, tg).trajectory;
    std::vector<double> e(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) e[i] = z(0, i) - std::exp(-0.1 * pi * pi) * std::sin(pi * g.nodes[i]);
    EXPECT_LE(weighted_norm(e, g, NormKind::L2), 5e-3);
}

TEST(Duality, RandomTriples)
{
    for (double a : {0.5, 1.5})
        for (double th : {0.5, 1.0}) {
            auto g = build_grid(a, 64);
            auto tg = build_time_grid(1.0, 64);
            auto hs = random_source_pairs(4, 11, g, tg, Roughness::Rough, false);
            auto fs = random_source_pairs(4, 12, g, tg, Roughness::Rough, false);
            std::vector<double> u0(g.n_nodes(), 0.0);
            for (int k = 0; k < 4; ++k) EXPECT_LE(duality_residual(u0, hs[k].F, fs[k].F, fs[k].zT, g, tg, th), 1e-8);
        }
}

TEST(Duality, NonzeroInitialState)
{
    auto g = build_grid(0.7, 48, 1.5);
    auto tg = build_time_grid(2.0, 40);
    auto u0 = sample([](double x) { return x * (1 - x); }, g);
    auto p = random_source_pairs(3, 5, g, tg, Roughness::Smooth, false);
    EXPECT_LE(duality_residual(u0, p[0].F, p[1].F, p[2].zT, g, tg), 1e-8);
}

TEST(Manufactured, ClassicalSecondOrder)
{
    auto cs = mms_convergence_study(0.0, {16, 32, 64});
    EXPECT_NEAR(cs.order, 2.0, 0.2);
}

TEST(Manufactured, WeakFirstOrder)
{
    auto cs = mms_convergence_study(0.5, {16, 32, 64});
    EXPECT_GE(cs.order, 1.0);
    EXPECT_LT(cs.errors[2], cs.errors[0]);
}

TEST(Manufactured, StrongFirstOrder)
{
    auto cs = mms_convergence_study(1.5, {16, 32, 64});
    EXPECT_GE(cs.order, 1.0);
}

TEST(Manufactured, NeedsThreeLevels)
{
    EXPECT_THROW(mms_convergence_study(0.5, {8, 16}), std::invalid_argument);
}

TEST(Energy, RatioStableUnderRefinement)
{
    for (double a : {0.5, 1.5}) {
        std::vector<double> r;
        for (int N : {32, 64, 128}) {
            auto g = build_grid(a, N);
            auto tg = build_time_grid(1.0, N);
            auto u0 = sample([](double x) { return x * (1 - x) * (1 + x); }, g);
            auto h = random_source_pairs(2, 21, g, tg)[1].F;
            r.push_back(energy_ratio(u0, h, g, tg));
        }
        for (double v : r) EXPECT_TRUE(std::isfinite(v));
        EXPECT_LE(r[2], 2.0 * r[0]);
    }
}

TEST(Tridiagonal, SolvesKnownSystem)
{
    std::vector<double> a{0, 1, 1, 1}, b{4, 4, 4, 4}, c{1, 1, 1, 0}, x{1, -2, 3, 0.5};
    std::vector<double> d(4);
    for (int i = 0; i < 4; ++i) d[i] = b[i] * x[i] + (i ? a[i] * x[i - 1] : 0) + (i < 3 ? c[i] * x[i + 1] : 0);
    solve_tridiagonal(a, b, c, d);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(d[i], x[i], 1e-14);
    std::vector<double> z{0, 0}, one{1, 1};
    EXPECT_THROW(solve_tridiagonal(z, z, z, one), std::runtime_error);
}
