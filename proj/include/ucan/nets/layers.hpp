#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ucan/autograd/ops.hpp"

namespace ucan::nets {

using ag::Shape;
using ag::Tensor;
using ag::Var;

/// Ordered, named collection of trainable leaves. Order is construction order
/// and is what checkpoints serialize.
template <class T>
class ParamStore {
public:
    Var<T> add(std::string name, Tensor<T> init) {
        auto v = Var<T>::leaf(std::move(init), true);
        params_.emplace_back(std::move(name), v);
        return v;
    }

    const std::vector<std::pair<std::string, Var<T>>>& entries() const noexcept { return params_; }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : params_) n += v.value().numel();
        return n;
    }

    void zero_grad() {
        for (auto& [_, v] : params_) v.zero_grad();
    }

    void set_requires_grad(bool r) {
        for (auto& [_, v] : params_) v.set_requires_grad(r);
    }

    Var<T> find(const std::string& name) const {
        for (const auto& [n, v] : params_)
            if (n == name) return v;
        throw ValidationError("no parameter named " + name);
    }

    /// Flat copy of all parameter values, in order.
    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(count());
        for (const auto& [_, v] : params_) out.insert(out.end(), v.value().vec().begin(), v.value().vec().end());
        return out;
    }

    void assign(const std::vector<T>& flat) {
        if (flat.size() != count()) throw ShapeMismatch("parameter vector has " + std::to_string(flat.size()) + " values, expected " + std::to_string(count()));
        std::size_t off = 0;
        for (auto& [_, v] : params_) {
            auto& dst = v.mutable_value().vec();
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
            off += dst.size();
        }
    }

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike.
template <class T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
    return t;
}

template <class T>
struct Conv3d {
    Var<T> weight, bias;
    std::size_t stride = 1, pad = 0;

    Conv3d() = default;
    Conv3d(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
           std::size_t stride_, std::size_t pad_, std::mt19937_64& rng)
        : stride(stride_), pad(pad_) {
        const std::size_t fan_in = in * k * k * k;
        weight = ps.add(name + ".weight", uniform_init<T>({out, in, k, k, k}, fan_in, rng));
        bias = ps.add(name + ".bias", uniform_init<T>({out}, fan_in, rng));
    }

    Var<T> operator()(const Var<T>& x) const { return ag::conv3d(x, weight, bias, stride, pad); }
};

template <class T>
struct Linear {
    Var<T> weight, bias;

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
        weight = ps.add(name + ".weight", uniform_init<T>({out, in}, in, rng));
        bias = ps.add(name + ".bias", uniform_init<T>({out}, in, rng));
    }

    Var<T> operator()(const Var<T>& x) const { return ag::linear(x, weight, bias); }
};

}  // namespace ucan::nets
