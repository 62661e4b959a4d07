#pragma once

#include <cmath>
#include <limits>

namespace degen {

// Accumulates sum_k exp(l_k) v_k (v_k >= 0) without forming exp(l_k).
struct LogSum {
    double shift = -std::numeric_limits<double>::infinity();
    double scaled = 0.0;

    void add(double log_weight, double v)
    {
        if (!(v > 0.0)) return;
        if (log_weight > shift) {
            scaled = scaled * std::exp(shift - log_weight) + v;
            shift = log_weight;
        } else {
            scaled += v * std::exp(log_weight - shift);
        }
    }
    void add(const LogSum& o)
    {
        if (o.scaled > 0.0) add(o.shift, o.scaled);
    }
    bool zero() const { return !(scaled > 0.0); }
    double log() const { return zero() ? -std::numeric_limits<double>::infinity() : shift + std::log(scaled); }
    double value() const { return zero() ? 0.0 : std::exp(log()); }
};

}  // namespace degen
