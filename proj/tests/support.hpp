#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ucan/autograd/var.hpp"
#include "ucan/core/volume.hpp"

namespace testing_support {

/// splitmix64; `uniform()` maps the top 53 bits to [0, 1). The Python
/// reference generator in tests/reference uses the same recurrence.
struct SplitMix {
    std::uint64_t s;
    explicit SplitMix(std::uint64_t seed) : s(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (s += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }
};

inline ucan::Volume random_volume(ucan::Shape3 s, SplitMix& r, double lo = 0.0, double hi = 1.0,
                                  ucan::VoxelSize vox = {1.0, 1.0, 1.0}) {
    ucan::Volume v(s, vox);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.uniform(lo, hi);
    return v;
}

inline ucan::Volume random_mask(ucan::Shape3 s, SplitMix& r, double p = 0.5) {
    ucan::Volume v(s, {1.0, 1.0, 1.0});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.uniform() < p ? 1.0 : 0.0;
    v[r.index(v.size())] = 1.0;
    return v;
}

template <class T = double>
ucan::ag::Tensor<T> random_tensor(ucan::ag::Shape shape, SplitMix& r, double lo = -1.0, double hi = 1.0) {
    ucan::ag::Tensor<T> t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<T>(r.uniform(lo, hi));
    return t;
}

/// Σ r_i y_i with fixed r: turns any tensor output into a scalar whose
/// gradient w.r.t. y is r.
template <class T>
ucan::ag::Var<T> project(const ucan::ag::Var<T>& y, const std::vector<T>& r) {
    T s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * y.value()[i];
    return ucan::ag::make_result<T>(ucan::ag::Tensor<T>({1}, std::vector<T>{s}), {y}, [r](ucan::ag::Node<T>& n) {
        auto* p = ucan::ag::grad_target(n, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < r.size(); ++i) g[i] += n.grad[0] * r[i];
    });
}

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double worst = 0.0;
    double pass_fraction() const { return checked ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0; }
};

/// Central-difference check of d loss / d input for sampled entries of each
/// input. `loss` must rebuild the graph from the inputs on every call.
/// An entry passes when |a - n| <= tol * max(|a|, |n|) or both are below `floor`.
inline GradCheckResult grad_check(const std::function<ucan::ag::Var<double>()>& loss,
                                  std::vector<ucan::ag::Var<double>> inputs, std::size_t samples_per_input,
                                  SplitMix& r, double h = 1e-6, double tol = 1e-3, double floor = 1e-8) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }
    loss().backward();
    GradCheckResult res;
    for (auto& in : inputs) {
        const auto analytic = in.grad();
        const std::size_t n = in.value().numel();
        const std::size_t count = std::min(n, samples_per_input);
        for (std::size_t s = 0; s < count; ++s) {
            const std::size_t i = count == n ? s : r.index(n);
            const double orig = in.value()[i];
            double lp, lm;
            {
                ucan::ag::NoGradGuard ng;
                in.mutable_value()[i] = orig + h;
                lp = loss().value()[0];
                in.mutable_value()[i] = orig - h;
                lm = loss().value()[0];
                in.mutable_value()[i] = orig;
            }
            const double num = (lp - lm) / (2 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double err = std::abs(a - num);
            const double scale = std::max(std::abs(a), std::abs(num));
            const bool ok = scale < floor || err <= tol * scale;
            ++res.checked;
            if (ok) ++res.passed;
            if (scale >= floor) res.worst = std::max(res.worst, err / scale);
        }
    }
    return res;
}

}  // namespace testing_support
