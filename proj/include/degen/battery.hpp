#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "mesh.hpp"

namespace degen {

enum class Roughness { Smooth, Rough };

// Spatial modes compatible with the boundary conditions of each case.
inline double boundary_mode(int k, double x, Degeneracy kind)
{
    using std::numbers::pi;
    return kind == Degeneracy::Weak ? std::sin(k * pi * x) : std::cos((k - 0.5) * pi * x);
}

struct SourcePair {
    Field F;  // one row per time cell
    std::vector<double> zT;
};

// Member 0 is (0, 0) when include_zero is set. Low-order Fourier mixes otherwise.
inline std::vector<SourcePair> random_source_pairs(int count, std::uint64_t seed, const SpatialGrid& g,
                                                   const TimeGrid& tg, Roughness roughness = Roughness::Smooth,
                                                   bool include_zero = true)
{
    using std::numbers::pi;
    if (count < 1) throw std::invalid_argument("count must be positive");
    const int K = roughness == Roughness::Smooth ? 3 : 8;
    std::vector<SourcePair> out;
    for (int k = 0; k < count; ++k) {
        SourcePair p{cell_field(tg, g), std::vector<double>(g.n_nodes(), 0.0)};
        if (k > 0 || !include_zero) {
            std::seed_seq ss{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(k)};
            std::mt19937_64 rng(ss);
            auto uni = [&] { return 2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0; };
            std::vector<double> cf(3 * K), cz(K);
            for (auto& c : cf) c = uni();
            for (auto& c : cz) c = uni();
            for (int j = 0; j < tg.m_steps; ++j) {
                double t = tg.midpoints[j];
                for (int i = 0; i < g.n_nodes(); ++i) {
                    if (g.pinned(i)) continue;
                    double s = 0.0;
                    for (int m = 1; m <= K; ++m)
                        for (int l = 0; l < 3; ++l)
                            s += cf[3 * (m - 1) + l] * std::cos(l * pi * t / tg.T) * boundary_mode(m, g.nodes[i], g.kind) / m;
                    p.F(j, i) = s;
                }
            }
            for (int i = 0; i < g.n_nodes(); ++i) {
                if (g.pinned(i)) continue;
                double s = 0.0;
                for (int m = 1; m <= K; ++m) s += cz[m - 1] * boundary_mode(m, g.nodes[i], g.kind) / m;
                p.zT[i] = s;
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

struct Polynomial {
    std::vector<double> c;  // ascending powers

    double operator()(double x) const
    {
        double v = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
        return v;
    }
};

// Coefficients uniform in [-1,1], degree drawn in [1, max_degree].
inline std::vector<Polynomial> random_polynomials(int count, std::uint64_t seed, int max_degree = 6)
{
    if (count < 0 || max_degree < 1) throw std::invalid_argument("bad polynomial battery size");
    std::vector<Polynomial> out;
    for (int k = 0; k < count; ++k) {
        std::seed_seq ss{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(k), 0x706f6cu};
        std::mt19937_64 rng(ss);
        auto uni = [&] { return 2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0; };
        int deg = 1 + int(rng() % std::uint64_t(max_degree));
        Polynomial p;
        p.c.resize(deg + 1);
        for (auto& c : p.c) c = uni();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace degen
