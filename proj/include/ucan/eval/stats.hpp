#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace ucan::eval {

struct Summary {
    double mean = 0;
    double std = 0;  // sample standard deviation; 0 for a single value
    std::size_t n = 0;
};

inline std::optional<Summary> summarize(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    Summary s;
    s.n = xs.size();
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

/// Two-sided paired t-test p-value; nullopt with fewer than two pairs or
/// zero spread of the differences.
inline std::optional<double> paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) return std::nullopt;
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const auto s = summarize(d);
    if (!s || s->std == 0.0) return std::nullopt;
    const double t = s->mean / (s->std / std::sqrt(static_cast<double>(s->n)));
    boost::math::students_t dist(static_cast<double>(s->n - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace ucan::eval
