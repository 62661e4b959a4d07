#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace degen {

// Thomas algorithm. a: sub-diagonal (a[0] unused), b: diagonal,
// c: super-diagonal (c[n-1] unused). d is overwritten with the solution.
inline void solve_tridiagonal(const std::vector<double>& a, const std::vector<double>& b,
                              const std::vector<double>& c, std::vector<double>& d)
{
    const std::size_t n = b.size();
    if (a.size() != n || c.size() != n || d.size() != n) throw std::invalid_argument("tridiagonal size mismatch");
    std::vector<double> cp(n);
    double piv = b[0];
    if (piv == 0.0) throw std::runtime_error("zero pivot in tridiagonal solve");
    cp[0] = c[0] / piv;
    d[0] /= piv;
    for (std::size_t i = 1; i < n; ++i) {
        piv = b[i] - a[i] * cp[i - 1];
        if (piv == 0.0) throw std::runtime_error("zero pivot in tridiagonal solve");
        cp[i] = c[i] / piv;
        d[i] = (d[i] - a[i] * d[i - 1]) / piv;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= cp[i] * d[i + 1];
}

}  // namespace degen
