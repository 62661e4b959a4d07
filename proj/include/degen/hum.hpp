#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "battery.hpp"
#include "logsum.hpp"
#include "mesh.hpp"
#include "pde.hpp"
#include "weights.hpp"

namespace degen {

struct ControlProblem {
    double alpha = 0.5;
    double T = 1.0;
    double epsilon = 0.25;  // snapped to the mesh
    double s = 1.0;
    std::vector<double> u0;
    SpatialGrid grid;
    TimeGrid tgrid;
    ControlRegion omega;
};

inline ControlProblem make_control_problem(double alpha, double T, double epsilon, double s, int n_cells, int m_steps,
                                           const std::function<double(double)>& u0, double grading = 1.0)
{
    if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("alpha out of (0,2)");
    ControlProblem p;
    p.alpha = alpha;
    p.T = T;
    p.s = s;
    p.grid = build_grid(alpha, n_cells, grading);
    p.tgrid = build_time_grid(T, m_steps);
    p.omega = control_region(p.grid, epsilon);
    p.epsilon = p.omega.epsilon;
    p.u0 = sample(u0, p.grid);
    if (std::abs(p.u0.back()) > 1e-12) throw std::invalid_argument("u0 must vanish at x=1");
    if (p.grid.kind == Degeneracy::Weak && std::abs(p.u0.front()) > 1e-12)
        throw std::invalid_argument("u0 must vanish at x=0 in the weakly degenerate case");
    p.u0.back() = 0.0;
    if (p.grid.kind == Degeneracy::Weak) p.u0.front() = 0.0;
    return p;
}

// Discrete a_eps(w, w') = sum_cells dt sum_i c_i e^{2sA} (L*w)(L*w') + eps^-3 sum_cells dt e^{2sA*} tau^7 sum_i cw_i w w',
// with (L*w)_j = ((I - dt L) w^j - w^{j+1}) / dt on cell j. All weights are divided by e^kappa.
struct NormalSystem {
    int n_free = 0, levels = 0, cells = 0;
    std::vector<int> free_nodes;
    double kappa = 0.0;
    double epsilon = 0.0;
    Eigen::SparseMatrix<double> D;    // cells*n_free x levels*n_free
    Eigen::VectorXd state_weight;     // dt c_i e^{2sA - kappa}, per cell row
    Eigen::VectorXd penalty_weight;   // dt cw_i eps^-3 e^{2sA* + 7 ln tau - kappa}, per level dof
    Eigen::VectorXd rhs;
    std::vector<double> log_w_state;  // cells x n_nodes
    std::vector<double> log_w_penalty;
    std::vector<double> tau, A_hat;

    int dim() const { return n_free * levels; }
    int index(int level, int k) const { return level * n_free + k; }

    Eigen::VectorXd apply(const Eigen::VectorXd& w) const
    {
        Eigen::VectorXd d = D * w;
        d.array() *= state_weight.array();
        Eigen::VectorXd y = D.transpose() * d;
        y.array() += penalty_weight.array() * w.array();
        return y;
    }

    Eigen::SparseMatrix<double> matrix() const
    {
        Eigen::SparseMatrix<double> A = D.transpose() * state_weight.asDiagonal() * D;
        for (int i = 0; i < dim(); ++i) A.coeffRef(i, i) += penalty_weight[i];
        A.makeCompressed();
        return A;
    }

    double form(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(apply(b)); }
    double load(const Eigen::VectorXd& w) const { return rhs.dot(w); }
};

inline NormalSystem assemble_variational_system(const ControlProblem& p, const WeightTable& w)
{
    const auto& g = p.grid;
    const auto& tg = p.tgrid;
    if (w.n_times != tg.m_steps || w.n_nodes != g.n_nodes() || w.s != p.s) throw std::invalid_argument("weights do not match problem");
    if (g.n_cells - p.omega.first_node < 2) throw std::invalid_argument("control region under-resolved (fewer than 2 cells)");
    NormalSystem S;
    for (int i = 0; i < g.n_nodes(); ++i)
        if (!g.pinned(i)) S.free_nodes.push_back(i);
    S.n_free = int(S.free_nodes.size());
    S.cells = tg.m_steps;
    S.levels = tg.m_steps + 1;
    S.epsilon = p.epsilon;
    S.log_w_state = w.log_w_state;
    S.log_w_penalty = w.log_w_penalty;
    S.tau = w.tau;
    S.A_hat = w.A_hat;
    const double leps = -3.0 * std::log(p.epsilon);
    double kappa = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < S.cells; ++j) {
        for (int i : S.free_nodes) kappa = std::max(kappa, w.at(w.log_w_state, j, i));
        kappa = std::max(kappa, w.log_w_penalty[j] + leps);
    }
    S.kappa = kappa;

    const double dt = tg.dt;
    auto L = assemble_operator(g);
    std::vector<int> pos(g.n_nodes(), -1);
    for (int k = 0; k < S.n_free; ++k) pos[S.free_nodes[k]] = k;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(S.cells) * S.n_free * 4);
    S.state_weight.resize(S.cells * S.n_free);
    for (int j = 0; j < S.cells; ++j) {
        for (int k = 0; k < S.n_free; ++k) {
            int i = S.free_nodes[k], row = j * S.n_free + k;
            trip.emplace_back(row, S.index(j, k), (1.0 - dt * L.diag[i]) / dt);
            if (i > 0 && pos[i - 1] >= 0) trip.emplace_back(row, S.index(j, pos[i - 1]), -L.lower[i]);
            if (i + 1 < g.n_nodes() && pos[i + 1] >= 0) trip.emplace_back(row, S.index(j, pos[i + 1]), -L.upper[i]);
            trip.emplace_back(row, S.index(j + 1, k), -1.0 / dt);
            S.state_weight[row] = dt * g.cell_weights[i] * clamped_exp(w.at(w.log_w_state, j, i) - kappa);
        }
    }
    S.D.resize(S.cells * S.n_free, S.dim());
    S.D.setFromTriplets(trip.begin(), trip.end());
    S.penalty_weight = Eigen::VectorXd::Zero(S.dim());
    for (int j = 0; j < S.cells; ++j) {
        double pj = clamped_exp(w.log_w_penalty[j] + leps - kappa);
        for (int k = 0; k < S.n_free; ++k) S.penalty_weight[S.index(j, k)] = dt * p.omega.weights[S.free_nodes[k]] * pj;
    }
    S.rhs = Eigen::VectorXd::Zero(S.dim());
    for (int k = 0; k < S.n_free; ++k) {
        int i = S.free_nodes[k];
        S.rhs[S.index(0, k)] = g.cell_weights[i] * p.u0[i];
    }
    return S;
}

enum class SolverMethod { ConjugateGradient, Direct };
enum class Preconditioner { None, Jacobi };

inline const char* to_string(SolverMethod m) { return m == SolverMethod::Direct ? "direct" : "cg"; }
inline const char* to_string(Preconditioner p)
{
    return p == Preconditioner::None ? "none" : "jacobi";
}

struct SolveOptions {
    SolverMethod method = SolverMethod::Direct;
    Preconditioner preconditioner = Preconditioner::Jacobi;  // used by conjugate gradient
    int max_iter = 20000;
    double rel_tol = 1e-10;
    int refinement_steps = 8;
    bool quad_fallback = true;  // refactor in float128 when long double refinement stalls above rel_tol
};

using Quad = boost::multiprecision::float128;
using VectorXq = Eigen::Matrix<Quad, Eigen::Dynamic, 1>;

struct VariationalSolution {
    VectorXq phi;
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    SolverMethod method = SolverMethod::Direct;
    int active_dofs = 0;
    bool quad = false;
};

namespace detail {

inline Eigen::VectorXd normal_diagonal(const NormalSystem& S)
{
    Eigen::VectorXd d = S.penalty_weight;
    for (int k = 0; k < S.D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(S.D, k); it; ++it)
            d[it.col()] += S.state_weight[it.row()] * it.value() * it.value();
    return d;
}

// b - A x accumulated in LD.
template <class LD = long double, class Vec>
Eigen::VectorXd extended_residual(const NormalSystem& S, const Vec& x)
{
    const int rows = int(S.D.rows());
    std::vector<LD> dx(rows, 0.0L);
    for (int k = 0; k < S.D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(S.D, k); it; ++it) dx[it.row()] += LD(it.value()) * LD(x[it.col()]);
    for (int r = 0; r < rows; ++r) dx[r] *= LD(S.state_weight[r]);
    std::vector<LD> y(S.dim(), 0.0L);
    for (int k = 0; k < S.D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(S.D, k); it; ++it) y[it.col()] += LD(it.value()) * dx[it.row()];
    Eigen::VectorXd r(S.dim());
    for (int i = 0; i < S.dim(); ++i) r[i] = double(LD(S.rhs[i]) - y[i] - LD(S.penalty_weight[i]) * LD(x[i]));
    return r;
}

template <class LD = long double, class Vec>
double relative_residual(const NormalSystem& S, const Vec& x)
{
    double bn = S.rhs.norm();
    return bn > 0.0 ? extended_residual<LD>(S, x).norm() / bn : 0.0;
}

}  // namespace detail

// Sparse LU of the Jacobi-scaled matrix restricted to dofs whose weights did not underflow,
// carried out in LD.
template <class LD>
struct BasicFactorization {
    using SpMat = Eigen::SparseMatrix<LD>;
    std::vector<int> active;
    Eigen::Matrix<LD, Eigen::Dynamic, 1> scale;
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;

    explicit BasicFactorization(const NormalSystem& S)
    {
        SpMat D = S.D.cast<LD>();
        Eigen::Matrix<LD, Eigen::Dynamic, 1> w = S.state_weight.cast<LD>();
        SpMat A = D.transpose() * w.asDiagonal() * D;
        for (int i = 0; i < S.dim(); ++i) A.coeffRef(i, i) += LD(S.penalty_weight[i]);
        A.makeCompressed();
        Eigen::Matrix<LD, Eigen::Dynamic, 1> d = A.diagonal();
        for (int i = 0; i < d.size(); ++i)
            if (d[i] > LD(0)) active.push_back(i);
        const int n = int(active.size());
        std::vector<int> pos(S.dim(), -1);
        for (int k = 0; k < n; ++k) pos[active[k]] = k;
        scale.resize(n);
        using std::sqrt;
        for (int k = 0; k < n; ++k) scale[k] = LD(1) / sqrt(d[active[k]]);
        std::vector<Eigen::Triplet<LD>> trip;
        for (int c = 0; c < A.outerSize(); ++c)
            for (typename SpMat::InnerIterator it(A, c); it; ++it) {
                int r = pos[it.row()], q = pos[it.col()];
                if (r >= 0 && q >= 0) trip.emplace_back(r, q, it.value() * scale[r] * scale[q]);
            }
        SpMat As(n, n);
        As.setFromTriplets(trip.begin(), trip.end());
        As.makeCompressed();
        lu.compute(As);
        if (lu.info() != Eigen::Success) throw std::runtime_error("sparse factorization failed");
    }

    VectorXq solve(const Eigen::VectorXd& r) const
    {
        const int n = int(active.size());
        Eigen::Matrix<LD, Eigen::Dynamic, 1> rs(n);
        for (int k = 0; k < n; ++k) rs[k] = LD(r[active[k]]) * scale[k];
        Eigen::Matrix<LD, Eigen::Dynamic, 1> y = lu.solve(rs);
        VectorXq x = VectorXq::Zero(r.size());
        for (int k = 0; k < n; ++k) x[active[k]] = Quad(y[k] * scale[k]);
        return x;
    }
};

using Factorization = BasicFactorization<long double>;

inline VariationalSolution solve_conjugate_gradient(const NormalSystem& S, const SolveOptions& opt)
{
    VariationalSolution out;
    out.method = SolverMethod::ConjugateGradient;
    out.phi = VectorXq::Zero(S.dim());
    const double bn = S.rhs.norm();
    if (bn == 0.0) {
        out.converged = true;
        return out;
    }
    Eigen::VectorXd d = detail::normal_diagonal(S);
    Eigen::VectorXd mask = (d.array() > 0.0).cast<double>();
    out.active_dofs = int(mask.sum());
    auto precond = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
        if (opt.preconditioner == Preconditioner::None) return r.cwiseProduct(mask);
        Eigen::VectorXd z(r.size());
        for (int i = 0; i < r.size(); ++i) z[i] = d[i] > 0.0 ? r[i] / d[i] : 0.0;
        return z;
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(S.dim());
    Eigen::VectorXd r = S.rhs.cwiseProduct(mask);
    Eigen::VectorXd z = precond(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        if (r.norm() <= opt.rel_tol * bn) {
            // recursive residual may drift; restart from the true residual once
            r = detail::extended_residual(S, x).cwiseProduct(mask);
            if (r.norm() <= opt.rel_tol * bn) break;
            z = precond(r), p = z, rz = r.dot(z);
        }
        Eigen::VectorXd Ap = S.apply(p).cwiseProduct(mask);
        double pAp = p.dot(Ap);
        if (!(pAp > 0.0)) break;
        double a = rz / pAp;
        x += a * p;
        r -= a * Ap;
        z = precond(r);
        double rzn = r.dot(z);
        p = z + (rzn / rz) * p;
        rz = rzn;
    }
    out.phi = x.cast<Quad>();
    out.iterations = it;
    out.rel_residual = detail::relative_residual(S, x);
    out.converged = out.rel_residual <= opt.rel_tol;
    return out;
}

namespace detail {

// Iterative refinement from x with residuals accumulated in LD; keeps the best iterate.
template <class LD>
double refine(const NormalSystem& S, const BasicFactorization<LD>& fac, VectorXq& x, int steps, double target, int& count)
{
    const double bn = S.rhs.norm();
    Eigen::VectorXd r = extended_residual<LD>(S, x);
    double best = r.norm() / bn;
    VectorXq xbest = x;
    for (int step = 0; step <= steps && best > target; ++step) {
        x += fac.solve(r);
        r = extended_residual<LD>(S, x);
        ++count;
        double rn = r.norm() / bn;
        if (!(rn < best)) break;
        best = rn, xbest = x;
    }
    x = xbest;
    return best;
}

}  // namespace detail

// Long double factorization plus iterative refinement, escalated to float128 when refinement stalls.
inline VariationalSolution solve_direct(const NormalSystem& S, const SolveOptions& opt)
{
    VariationalSolution out;
    out.method = SolverMethod::Direct;
    out.phi = VectorXq::Zero(S.dim());
    if (S.rhs.norm() == 0.0) {
        out.converged = true;
        return out;
    }
    const double target = 1e-3 * opt.rel_tol;
    double best;
    {
        Factorization fac(S);
        out.active_dofs = int(fac.active.size());
        best = detail::refine(S, fac, out.phi, opt.refinement_steps, target, out.iterations);
    }
    if (best > opt.rel_tol && opt.quad_fallback) {
        BasicFactorization<Quad> fac(S);
        VectorXq x = VectorXq::Zero(S.dim());
        double q = detail::refine(S, fac, x, opt.refinement_steps, target, out.iterations);
        if (q < best) best = q, out.phi = x, out.quad = true;
    }
    out.rel_residual = best;
    out.converged = best <= opt.rel_tol;
    return out;
}

inline VariationalSolution solve_variational(const NormalSystem& S, const SolveOptions& opt = {})
{
    return opt.method == SolverMethod::Direct ? solve_direct(S, opt) : solve_conjugate_gradient(S, opt);
}

// |a(phi, psi) - l(psi)| / (|a(phi, psi)| + |l(psi)|), using the float128 residual.
inline double galerkin_defect(const NormalSystem& S, const VectorXq& phi, const Eigen::VectorXd& psi)
{
    Eigen::VectorXd r = detail::extended_residual<Quad>(S, phi);
    double l = S.load(psi);
    double a = l - r.dot(psi);
    double den = std::abs(a) + std::abs(l);
    return den > 0.0 ? std::abs(r.dot(psi)) / den : 0.0;
}

// Compressed rows of the normal matrix for scalar types other than double.
struct CsrMatrix {
    int n = 0;
    std::vector<int> start, col;
    std::vector<double> val;
};

inline CsrMatrix to_csr(const NormalSystem& S)
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> A = S.matrix();
    CsrMatrix m;
    m.n = int(A.rows());
    m.start.push_back(0);
    for (int r = 0; r < A.outerSize(); ++r) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it)
            m.col.push_back(int(it.col())), m.val.push_back(it.value());
        m.start.push_back(int(m.col.size()));
    }
    return m;
}

template <class Real>
std::vector<Real> csr_apply(const CsrMatrix& A, const std::vector<Real>& x)
{
    std::vector<Real> y(A.n, Real(0));
    for (int r = 0; r < A.n; ++r)
        for (int k = A.start[r]; k < A.start[r + 1]; ++k) y[r] += Real(A.val[k]) * x[A.col[k]];
    return y;
}

// Jacobi-preconditioned CG in arbitrary precision on the assembled matrix.
template <class Real>
std::vector<Real> conjugate_gradient_generic(const CsrMatrix& A, const std::vector<double>& b, double rel_tol,
                                             int max_iter, int* iterations = nullptr)
{
    using std::sqrt;
    std::vector<Real> d(A.n, Real(0));
    for (int r = 0; r < A.n; ++r)
        for (int k = A.start[r]; k < A.start[r + 1]; ++k)
            if (A.col[k] == r) d[r] = Real(A.val[k]);
    auto dotp = [](const std::vector<Real>& u, const std::vector<Real>& v) {
        Real s(0);
        for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
        return s;
    };
    std::vector<Real> x(A.n, Real(0)), r(A.n), z(A.n), p(A.n);
    for (int i = 0; i < A.n; ++i) r[i] = d[i] > 0 ? Real(b[i]) : Real(0);
    Real bn = sqrt(dotp(r, r));
    for (int i = 0; i < A.n; ++i) z[i] = d[i] > 0 ? Real(r[i] / d[i]) : Real(0);
    p = z;
    Real rz = dotp(r, z);
    int it = 0;
    for (; it < max_iter && bn > 0; ++it) {
        if (sqrt(dotp(r, r)) <= Real(rel_tol) * bn) break;
        auto Ap = csr_apply(A, p);
        for (int i = 0; i < A.n; ++i)
            if (!(d[i] > 0)) Ap[i] = 0;
        Real a = rz / dotp(p, Ap);
        for (int i = 0; i < A.n; ++i) x[i] += a * p[i], r[i] -= a * Ap[i];
        for (int i = 0; i < A.n; ++i) z[i] = d[i] > 0 ? Real(r[i] / d[i]) : Real(0);
        Real rzn = dotp(r, z);
        for (int i = 0; i < A.n; ++i) p[i] = z[i] + (rzn / rz) * p[i];
        rz = rzn;
    }
    if (iterations) *iterations = it;
    return x;
}

// Gaussian elimination with partial pivoting in arbitrary precision (small systems only).
template <class Real>
std::vector<Real> dense_solve_generic(const CsrMatrix& A, const std::vector<double>& b)
{
    using std::abs;
    std::vector<int> act;
    for (int r = 0; r < A.n; ++r)
        for (int k = A.start[r]; k < A.start[r + 1]; ++k)
            if (A.col[k] == r && A.val[k] > 0.0) act.push_back(r);
    const int n = int(act.size());
    std::vector<int> pos(A.n, -1);
    for (int k = 0; k < n; ++k) pos[act[k]] = k;
    std::vector<std::vector<Real>> M(n, std::vector<Real>(n + 1, Real(0)));
    for (int k = 0; k < n; ++k) {
        int r = act[k];
        for (int q = A.start[r]; q < A.start[r + 1]; ++q)
            if (pos[A.col[q]] >= 0) M[k][pos[A.col[q]]] = Real(A.val[q]);
        M[k][n] = Real(b[r]);
    }
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (abs(M[r][c]) > abs(M[piv][c])) piv = r;
        std::swap(M[c], M[piv]);
        if (M[c][c] == 0) throw std::runtime_error("singular dense system");
        for (int r = c + 1; r < n; ++r) {
            Real f = M[r][c] / M[c][c];
            if (f == 0) continue;
            for (int q = c; q <= n; ++q) M[r][q] -= f * M[c][q];
        }
    }
    std::vector<Real> y(n);
    for (int r = n - 1; r >= 0; --r) {
        Real s = M[r][n];
        for (int q = r + 1; q < n; ++q) s -= M[r][q] * y[q];
        y[r] = s / M[r][r];
    }
    std::vector<Real> x(A.n, Real(0));
    for (int k = 0; k < n; ++k) x[act[k]] = y[k];
    return x;
}

struct WeightedNorms {
    double log_state = 0.0;      // log of int int e^{2sA} |L* phi|^2  (= int int e^{-2sA} |u|^2)
    double log_penalty = 0.0;    // log of eps^-3 int int_w e^{2sA*} tau^7 |phi|^2
    double log_penalty_from_control = 0.0;  // log of eps^3 int int_w e^{-2sA*} tau^-7 |h|^2
    double log_state_from_state = 0.0;      // log of int int e^{-2sA} |u|^2 over cells with unclamped weight
};

struct ControlSolution {
    Field phi_hat;               // multiplier in scaled units: true value = phi_hat * exp(-kappa)
    double kappa = 0.0;
    Field u_hat;                 // levels; row 0 = u0, row j+1 = e^{2sA} L* phi on cell j
    Field h_hat;                 // cells; zero off omega
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    SolverMethod method = SolverMethod::Direct;
    WeightedNorms norms;
    std::vector<double> log_w_penalty;  // per cell: 2sA* + 7 ln tau
    std::vector<double> tau, A_hat;     // per cell
};

template <class Vec>
Field to_field(const NormalSystem& S, const Vec& x, int n_nodes)
{
    Field f(S.levels, n_nodes);
    for (int j = 0; j < S.levels; ++j)
        for (int k = 0; k < S.n_free; ++k) f(j, S.free_nodes[k]) = double(x[S.index(j, k)]);
    return f;
}

inline ControlSolution reconstruct_solution(const VariationalSolution& vs, const NormalSystem& S, const ControlProblem& p)
{
    const auto& g = p.grid;
    const int n = g.n_nodes();
    const double dt = p.tgrid.dt, eps = p.epsilon;
    ControlSolution cs;
    cs.kappa = S.kappa;
    cs.iterations = vs.iterations;
    cs.rel_residual = vs.rel_residual;
    cs.converged = vs.converged;
    cs.method = vs.method;
    cs.phi_hat = to_field(S, vs.phi, n);
    cs.log_w_penalty = S.log_w_penalty;
    cs.tau = S.tau;
    cs.A_hat = S.A_hat;
    VectorXq Dphi = S.D.cast<Quad>() * vs.phi;
    cs.u_hat = level_field(p.tgrid, g);
    for (int i = 0; i < n; ++i) cs.u_hat(0, i) = p.u0[i];
    cs.h_hat = cell_field(p.tgrid, g);
    LogSum st, st2, pen, pen2;
    for (int j = 0; j < S.cells; ++j) {
        for (int k = 0; k < S.n_free; ++k) {
            int i = S.free_nodes[k];
            double lw = S.log_w_state[std::size_t(j) * n + i];
            const Quad& q = Dphi[j * S.n_free + k];
            double lq = q != 0 ? double(log(abs(q))) : -std::numeric_limits<double>::infinity();
            double u = q != 0 ? std::copysign(clamped_exp(lw - S.kappa + lq), double(q)) : 0.0;
            cs.u_hat(j + 1, i) = u;
            if (q != 0) st.add(lw - S.kappa + 2.0 * lq, dt * g.cell_weights[i]);
            if (std::abs(lw - S.kappa) < kLogClamp && u != 0.0) st2.add(-lw, dt * g.cell_weights[i] * u * u);
            double cw = p.omega.weights[i];
            if (cw > 0.0) {
                double lp = S.log_w_penalty[j];
                double ph = double(vs.phi[S.index(j, k)]);
                double h = -clamped_exp(lp - 3.0 * std::log(eps) - S.kappa) * ph;
                cs.h_hat(j, i) = h;
                pen.add(lp - 3.0 * std::log(eps) - S.kappa, dt * cw * ph * ph);
                pen2.add(-lp + 3.0 * std::log(eps), dt * cw * h * h);
            }
        }
    }
    cs.norms.log_state = st.log() - S.kappa;
    cs.norms.log_state_from_state = st2.log();
    cs.norms.log_penalty = pen.log() - S.kappa;
    cs.norms.log_penalty_from_control = pen2.log();
    return cs;
}

inline ControlSolution solve_control(const ControlProblem& p, const SolveOptions& opt = {})
{
    auto w = build_weight_table(p.grid, p.tgrid, p.s);
    auto S = assemble_variational_system(p, w);
    auto vs = solve_variational(S, opt);
    return reconstruct_solution(vs, S, p);
}

// Cell source that puts the control h on the state equation: h * cw / c on omega.
inline Field control_source(const ControlSolution& cs, const ControlProblem& p)
{
    Field src = cell_field(p.tgrid, p.grid);
    for (int j = 0; j < src.rows; ++j)
        for (int i = 0; i < src.cols; ++i)
            if (p.omega.weights[i] > 0.0) src(j, i) = cs.h_hat(j, i) * p.omega.weights[i] / p.grid.cell_weights[i];
    return src;
}

inline Field resimulate(const ControlSolution& cs, const ControlProblem& p, double theta)
{
    return solve_forward(p.u0, control_source(cs, p), p.grid, p.tgrid, theta).trajectory;
}

struct ResidualStats {
    std::vector<double> residuals;
    double max = 0.0;
    double mean = 0.0;
};

inline ResidualStats summarize(std::vector<double> r)
{
    ResidualStats s;
    s.residuals = std::move(r);
    for (double v : s.residuals) s.max = std::max(s.max, v), s.mean += v;
    if (!s.residuals.empty()) s.mean /= double(s.residuals.size());
    return s;
}

// Pairing sum_cells dt <u^{j+1}, F_j>.
inline double state_pairing(const Field& u, const Field& F, const SpatialGrid& g, const TimeGrid& tg)
{
    double s = 0.0;
    for (int j = 0; j < tg.m_steps; ++j) s += tg.dt * dot(u.row(j + 1), F.row(j), g);
    return s;
}

// Adjoint states of the normal-equation stencil: (I - dt L) z^j = z^{j+1} + dt F_j.
inline std::vector<Field> adjoint_battery(const std::vector<SourcePair>& pairs, const ControlProblem& p)
{
    std::vector<Field> z;
    for (const auto& pr : pairs) z.push_back(solve_adjoint(pr.zT, pr.F, p.grid, p.tgrid, 1.0).trajectory);
    return z;
}

// |int int u F - int int_w h z - int u0 z(0)| / (|LHS| + |RHS| + |u0|^2)
inline ResidualStats transposition_residual(const ControlSolution& cs, const ControlProblem& p,
                                            const std::vector<SourcePair>& pairs)
{
    const auto& g = p.grid;
    const auto& tg = p.tgrid;
    auto zs = adjoint_battery(pairs, p);
    double u0n = dot(p.u0, p.u0, g);
    std::vector<double> res;
    for (std::size_t b = 0; b < pairs.size(); ++b) {
        const auto& z = zs[b];
        double lhs = state_pairing(cs.u_hat, pairs[b].F, g, tg);
        double rhs = dot(p.u0, z.row(0), g);
        for (int j = 0; j < tg.m_steps; ++j)
            for (int i = 0; i < g.n_nodes(); ++i) rhs += tg.dt * p.omega.weights[i] * cs.h_hat(j, i) * z(j, i);
        double den = std::abs(lhs) + std::abs(rhs) + u0n;
        res.push_back(den > 0.0 ? std::abs(lhs - rhs) / den : 0.0);
    }
    return summarize(std::move(res));
}

}  // namespace degen
