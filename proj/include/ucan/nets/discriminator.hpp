#pragma once

#include <array>
#include <random>

#include "ucan/core/config.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/nets/layers.hpp"

namespace ucan::nets {

/// Six convolutions: a four-layer stride-2 trunk shared by a real/fake head
/// and a tracer-domain head.
struct DiscriminatorSpec {
    std::size_t in_channels = 1;
    std::size_t base_width = 16;
    std::size_t trunk_kernel = 4;
    std::size_t head_kernel = 3;
    static constexpr std::size_t trunk_layers = 4;
    static constexpr std::size_t num_layers = trunk_layers + 2;

    friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;

    static DiscriminatorSpec from_config(const TrainConfig& c) {
        DiscriminatorSpec s;
        s.in_channels = c.d_sees_mr ? 2 : 1;
        s.base_width = static_cast<std::size_t>(c.d_base_width);
        return s;
    }

    /// Score-map extent for an input extent (stride 2 per trunk layer, pad 1).
    std::size_t score_extent(std::size_t in) const {
        for (std::size_t i = 0; i < trunk_layers; ++i) in = ag::conv_out_extent(in, trunk_kernel, 2, 1);
        return in;
    }
};

template <class T>
struct DiscriminatorOutput {
    Var<T> scores;  // (N, 1, d, h, w), in (0, 1)
    Var<T> logits;  // (N, 3)
};

template <class T>
class Discriminator {
public:
    Discriminator(const DiscriminatorSpec& spec, std::mt19937_64& rng) : spec_(spec) {
        std::size_t in = spec.in_channels;
        for (std::size_t i = 0; i < DiscriminatorSpec::trunk_layers; ++i) {
            const std::size_t out = spec.base_width << i;
            trunk_[i] = Conv3d<T>(params_, "trunk" + std::to_string(i), in, out, spec.trunk_kernel, 2, 1, rng);
            in = out;
        }
        const std::size_t pad = spec.head_kernel / 2;
        gan_head_ = Conv3d<T>(params_, "gan_head", in, 1, spec.head_kernel, 1, pad, rng);
        clsf_head_ = Conv3d<T>(params_, "clsf_head", in, kNumDomains, spec.head_kernel, 1, pad, rng);
    }

    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    Discriminator(Discriminator&&) noexcept = default;
    Discriminator& operator=(Discriminator&&) noexcept = default;

    const DiscriminatorSpec& spec() const noexcept { return spec_; }
    ParamStore<T>& params() noexcept { return params_; }
    const ParamStore<T>& params() const noexcept { return params_; }

    DiscriminatorOutput<T> forward(const Var<T>& x) const {
        if (x.shape().size() != 5 || x.shape()[1] != spec_.in_channels)
            throw ShapeMismatch("discriminator expects (N," + std::to_string(spec_.in_channels) + ",D,H,W), got " + ag::shape_str(x.shape()));
        Var<T> h = ag::leaky_relu(trunk_[0](x), T(0.2));
        for (std::size_t i = 1; i < DiscriminatorSpec::trunk_layers; ++i)
            h = ag::leaky_relu(ag::instance_norm(trunk_[i](h)), T(0.2));
        return {ag::sigmoid(gan_head_(h)), ag::global_avg_pool(clsf_head_(h))};
    }

private:
    DiscriminatorSpec spec_;
    ParamStore<T> params_;
    std::array<Conv3d<T>, DiscriminatorSpec::trunk_layers> trunk_;
    Conv3d<T> gan_head_, clsf_head_;
};

}  // namespace ucan::nets
