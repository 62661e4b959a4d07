#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>

#include "degen/hum.hpp"

using namespace degen;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

double weak_u0(double x) { return x * (1.0 - x); }
double strong_u0(double x) { return 1.0 - x * x; }

ControlProblem problem(double alpha, double T, int N, int M, double eps = 0.25)
{
    return make_control_problem(alpha, T, eps, 1.0, N, M, alpha < 1.0 ? weak_u0 : strong_u0);
}

NormalSystem system_of(const ControlProblem& p)
{
    return assemble_variational_system(p, build_weight_table(p.grid, p.tgrid, p.s));
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> d(-1, 1);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = d(rng);
    return v;
}

double field_max(const Field& f)
{
    double m = 0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST(Problem, Preconditions)
{
    EXPECT_THROW(make_control_problem(0.5, 1, 0.25, 1, 16, 16, strong_u0), std::invalid_argument);
    EXPECT_THROW(make_control_problem(1.5, 1, 0.25, 1, 16, 16, [](double) { return 1.0; }), std::invalid_argument);
    EXPECT_THROW(make_control_problem(2.0, 1, 0.25, 1, 16, 16, weak_u0), std::invalid_argument);
    EXPECT_THROW(make_control_problem(0.5, 1, 0.05, 1, 16, 16, weak_u0), std::invalid_argument);
}

TEST(Assembly, ZeroInitialStateGivesZeroLoad)
{
    auto p = make_control_problem(0.5, 1, 0.25, 1, 16, 16, [](double) { return 0.0; });
    EXPECT_EQ(system_of(p).rhs.norm(), 0.0);
}

TEST(Assembly, Symmetric)
{
    std::mt19937_64 rng(1);
    for (double a : {0.5, 1.5}) {
        auto S = system_of(problem(a, 2.0, 16, 16));
        for (int k = 0; k < 10; ++k) {
            auto x = random_vec(S.dim(), rng), y = random_vec(S.dim(), rng);
            double p = S.form(x, y), q = S.form(y, x);
            EXPECT_LE(std::abs(p - q), 1e-10 * (std::abs(p) + std::abs(q)));
        }
    }
}

TEST(Assembly, Positive)
{
    std::mt19937_64 rng(2);
    for (double a : {0.5, 1.5}) {
        auto S = system_of(problem(a, 2.0, 16, 16));
        for (int k = 0; k < 10; ++k) {
            auto x = random_vec(S.dim(), rng);
            EXPECT_GT(S.form(x, x), 0.0);
        }
    }
}

TEST(Assembly, MatrixMatchesOperator)
{
    std::mt19937_64 rng(3);
    auto S = system_of(problem(0.5, 2.0, 12, 12));
    auto A = S.matrix();
    auto x = random_vec(S.dim(), rng);
    Eigen::VectorXd y = A * x, z = S.apply(x);
    EXPECT_LE((y - z).norm(), 1e-12 * z.norm());
}

TEST(Solver, ZeroLoad)
{
    auto p = make_control_problem(0.5, 1, 0.25, 1, 16, 16, [](double) { return 0.0; });
    for (auto m : {SolverMethod::Direct, SolverMethod::ConjugateGradient}) {
        SolveOptions o;
        o.method = m;
        auto cs = solve_control(p, o);
        EXPECT_EQ(cs.iterations, 0);
        EXPECT_TRUE(cs.converged);
        EXPECT_EQ(field_max(cs.phi_hat), 0.0);
        EXPECT_EQ(field_max(cs.u_hat), 0.0);
        EXPECT_EQ(field_max(cs.h_hat), 0.0);
    }
}

TEST(Solver, CgMatchesDenseOracle)
{
    for (double a : {0.5, 1.5}) {
        auto S = system_of(problem(a, 1.0, 8, 8));
        auto A = to_csr(S);
        std::vector<double> b(S.rhs.data(), S.rhs.data() + S.dim());
        auto dense = dense_solve_generic<Big>(A, b);
        int it = 0;
        auto cg = conjugate_gradient_generic<Big>(A, b, 1e-30, 10 * S.dim(), &it);
        Big num = 0, den = 0;
        for (int i = 0; i < S.dim(); ++i) num += (cg[i] - dense[i]) * (cg[i] - dense[i]), den += dense[i] * dense[i];
        EXPECT_LE(double(sqrt(num / den)), 1e-8) << "alpha=" << a << " iterations=" << it;
    }
}

TEST(Solver, DirectSolvesOracleSystem)
{
    auto S = system_of(problem(0.5, 2.0, 8, 8));
    auto A = to_csr(S);
    std::vector<double> b(S.rhs.data(), S.rhs.data() + S.dim());
    auto dense = dense_solve_generic<Big>(A, b);
    auto vs = solve_variational(S);
    std::vector<Big> x(S.dim());
    for (int i = 0; i < S.dim(); ++i) x[i] = Big(vs.phi[i].str(40));
    auto Ax = csr_apply(A, x);
    Big num = 0, den = 0;
    for (int i = 0; i < S.dim(); ++i) num += (Big(b[i]) - Ax[i]) * (Big(b[i]) - Ax[i]), den += Big(b[i]) * Big(b[i]);
    EXPECT_LE(double(sqrt(num / den)), 1e-9);
    EXPECT_FALSE(dense.empty());
}

TEST(Solver, GalerkinOrthogonality)
{
    std::mt19937_64 rng(4);
    for (double a : {0.5, 1.5}) {
        auto S = system_of(problem(a, 2.0, 32, 64));
        auto vs = solve_variational(S);
        EXPECT_TRUE(vs.converged);
        for (int k = 0; k < 10; ++k) EXPECT_LE(galerkin_defect(S, vs.phi, random_vec(S.dim(), rng)), 1e-9);
    }
}

TEST(Solver, DefaultProblemConverges)
{
    auto p = problem(0.5, 1.0, 64, 64);
    auto cs = solve_control(p);
    EXPECT_TRUE(cs.converged) << cs.rel_residual;
    EXPECT_LE(cs.iterations, 5000);
}

TEST(Solver, Linear)
{
    auto p = problem(1.5, 2.0, 16, 32);
    auto q = p;
    for (auto& v : q.u0) v *= 2.0;
    auto a = solve_control(p), b = solve_control(q);
    ASSERT_DOUBLE_EQ(a.kappa, b.kappa);
    double m = field_max(a.phi_hat);
    for (std::size_t k = 0; k < a.phi_hat.values.size(); ++k)
        EXPECT_NEAR(b.phi_hat.values[k], 2.0 * a.phi_hat.values[k], 1e-9 * m);
}

TEST(Control, TerminalStateVanishes)
{
    for (double a : {0.5, 1.5}) {
        auto p = problem(a, 2.0, 32, 64);
        auto cs = solve_control(p);
        double m = field_max(cs.u_hat);
        for (double v : cs.u_hat.row(p.tgrid.m_steps)) EXPECT_LE(std::abs(v), 1e-12 * m);
        EXPECT_LE(weighted_norm(cs.u_hat.row(p.tgrid.m_steps), p.grid, NormKind::L2),
                  1e-10 * weighted_norm(p.u0, p.grid, NormKind::L2));
    }
}

TEST(Control, ControlSupportedInRegion)
{
    auto p = problem(0.5, 2.0, 32, 32);
    auto cs = solve_control(p);
    for (int j = 0; j < cs.h_hat.rows; ++j)
        for (int i = 0; i < p.omega.first_node; ++i) EXPECT_EQ(cs.h_hat(j, i), 0.0);
}

TEST(Control, PenaltyIdentity)
{
    for (double a : {0.5, 1.5}) {
        auto cs = solve_control(problem(a, 2.0, 32, 64));
        EXPECT_LE(std::abs(std::expm1(cs.norms.log_penalty - cs.norms.log_penalty_from_control)), 1e-10);
    }
}

TEST(Control, StateNormIdentity)
{
    auto cs = solve_control(problem(0.5, 2.0, 32, 64));
    EXPECT_LE(std::abs(std::expm1(cs.norms.log_state - cs.norms.log_state_from_state)), 1e-8);
}

TEST(Control, TranspositionBattery)
{
    for (double a : {0.5, 1.5}) {
        auto p = problem(a, 2.0, 64, 64);
        auto cs = solve_control(p);
        auto pairs = random_source_pairs(20, 5, p.grid, p.tgrid);
        EXPECT_LE(transposition_residual(cs, p, pairs).max, 1e-6);
    }
}

TEST(Control, TranspositionDefaultProblem)
{
    auto p = problem(0.5, 1.0, 64, 64);
    auto cs = solve_control(p);
    auto pairs = random_source_pairs(20, 5, p.grid, p.tgrid);
    EXPECT_LE(transposition_residual(cs, p, pairs).max, 1e-6);
}

TEST(Control, NullControlCertificate)
{
    auto p = problem(1.5, 2.0, 32, 64);
    auto cs = solve_control(p);
    auto pairs = random_source_pairs(10, 6, p.grid, p.tgrid);
    for (auto& pr : pairs) pr.F = cell_field(p.tgrid, p.grid);
    EXPECT_LE(transposition_residual(cs, p, pairs).max, 1e-6);
}

TEST(Control, ZeroStateZeroResiduals)
{
    auto p = make_control_problem(0.5, 2.0, 0.25, 1, 16, 16, [](double) { return 0.0; });
    auto cs = solve_control(p);
    auto pairs = random_source_pairs(5, 7, p.grid, p.tgrid);
    EXPECT_EQ(transposition_residual(cs, p, pairs).max, 0.0);
}

TEST(Control, ResimulationReachesRest)
{
    for (double a : {0.5, 1.5}) {
        auto p = problem(a, 2.0, 64, 64);
        auto cs = solve_control(p);
        auto u = resimulate(cs, p, 1.0);
        EXPECT_LE(weighted_norm(u.row(p.tgrid.m_steps), p.grid, NormKind::L2),
                  1e-2 * weighted_norm(p.u0, p.grid, NormKind::L2));
        double m = 0;
        for (std::size_t k = 0; k < u.values.size(); ++k) m = std::max(m, std::abs(u.values[k] - cs.u_hat.values[k]));
        EXPECT_LE(m, 1e-6 * field_max(cs.u_hat));
    }
}

TEST(Control, CgAgreesWithDirect)
{
    auto p = problem(0.5, 2.0, 8, 8);
    SolveOptions o;
    o.method = SolverMethod::ConjugateGradient;
    o.max_iter = 100000;
    auto a = solve_control(p), b = solve_control(p, o);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < a.u_hat.values.size(); ++k) {
        double d = a.u_hat.values[k] - b.u_hat.values[k];
        num += d * d, den += a.u_hat.values[k] * a.u_hat.values[k];
    }
    EXPECT_LE(std::sqrt(num / den), 1e-8);
}

TEST(Solver, QuadFallbackRestoresOrthogonality)
{
    std::mt19937_64 rng(5);
    auto S = system_of(problem(1.5, 2.0, 64, 64));
    SolveOptions o;
    o.quad_fallback = false;
    auto ld = solve_variational(S, o), q = solve_variational(S);
    EXPECT_FALSE(ld.converged);
    EXPECT_TRUE(q.converged) << q.rel_residual;
    EXPECT_TRUE(q.quad);
    EXPECT_LT(q.rel_residual, ld.rel_residual);
    for (int k = 0; k < 20; ++k) EXPECT_LE(galerkin_defect(S, q.phi, random_vec(S.dim(), rng)), 1e-9);
}
