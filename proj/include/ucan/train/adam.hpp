#pragma once

#include <cmath>
#include <vector>

#include "ucan/nets/layers.hpp"

namespace ucan::train {

/// Adaptive-moment optimizer with bias correction and a constant learning rate.
template <class T>
class Adam {
public:
    Adam(nets::ParamStore<T>& params, double lr, double beta1, double beta2, double eps = 1e-8)
        : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& [_, v] : params.entries()) {
            m_.emplace_back(v.value().numel(), T(0));
            v_.emplace_back(v.value().numel(), T(0));
        }
    }

    /// One update from the accumulated gradients. Parameters without a
    /// gradient buffer are treated as having zero gradient.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::size_t k = 0;
        for (const auto& [_, var] : params_->entries()) {
            auto p = var;
            auto& value = p.mutable_value().vec();
            const auto& g = p.grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
                m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * gi);
                v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * gi * gi);
                const double mh = m[i] / bc1, vh = v[i] / bc2;
                value[i] = static_cast<T>(value[i] - lr_ * mh / (std::sqrt(vh) + eps_));
            }
            ++k;
        }
    }

    long steps() const noexcept { return t_; }
    void set_steps(long t) noexcept { t_ = t; }
    std::vector<std::vector<T>>& first_moments() noexcept { return m_; }
    std::vector<std::vector<T>>& second_moments() noexcept { return v_; }

private:
    nets::ParamStore<T>* params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace ucan::train
