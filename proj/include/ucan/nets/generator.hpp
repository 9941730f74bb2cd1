#pragma once

#include <random>
#include <string>
#include <vector>

#include "ucan/core/config.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/nets/se.hpp"

namespace ucan::nets {

struct GeneratorSpec {
    std::size_t in_channels = 1 + 1 + kNumDomains;
    std::size_t out_channels = 1;
    std::size_t depth = 4;
    std::size_t base_width = 16;
    std::size_t latent_res_blocks = 3;
    std::size_t se_reduction = 8;
    SeFusion fusion = SeFusion::max;

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;

    static GeneratorSpec from_config(const TrainConfig& c) {
        GeneratorSpec s;
        s.depth = static_cast<std::size_t>(c.g_depth);
        s.base_width = static_cast<std::size_t>(c.g_base_width);
        s.latent_res_blocks = static_cast<std::size_t>(c.g_res_blocks);
        s.se_reduction = static_cast<std::size_t>(c.g_se_reduction);
        s.fusion = c.se_fusion;
        return s;
    }

    /// Spatial extents must be divisible by this.
    std::size_t granularity() const { return std::size_t{1} << depth; }
};

/// conv-norm-ReLU, twice.
template <class T>
struct ConvBlock {
    Conv3d<T> first, second;

    ConvBlock() = default;
    ConvBlock(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
        : first(ps, name + ".conv1", in, out, 3, 1, 1, rng), second(ps, name + ".conv2", out, out, 3, 1, 1, rng) {}

    Var<T> operator()(const Var<T>& x) const {
        return ag::relu(ag::instance_norm(second(ag::relu(ag::instance_norm(first(x))))));
    }
};

/// conv-norm-ReLU-conv-norm plus identity skip; channel preserving.
template <class T>
struct ResBlock {
    Conv3d<T> first, second;

    ResBlock() = default;
    ResBlock(ParamStore<T>& ps, const std::string& name, std::size_t ch, std::mt19937_64& rng)
        : first(ps, name + ".conv1", ch, ch, 3, 1, 1, rng), second(ps, name + ".conv2", ch, ch, 3, 1, 1, rng) {}

    Var<T> operator()(const Var<T>& x) const {
        return ag::add(x, ag::instance_norm(second(ag::relu(ag::instance_norm(first(x))))));
    }
};

/// 3D U-Net whose every block output passes through a dual SE unit, with a
/// stack of residual blocks at the bottleneck and a tanh output.
///
/// Input is the channel concatenation (tracer volume, MR volume, 3-channel
/// domain label); output is one channel at the input's spatial extent.
template <class T>
class Generator {
public:
    Generator(const GeneratorSpec& spec, std::mt19937_64& rng) : spec_(spec) {
        if (spec.in_channels != 2 + kNumDomains) throw ValidationError("generator input must have 5 channels");
        if (spec.depth < 1) throw ValidationError("generator depth must be >= 1");
        const std::size_t w = spec.base_width, r = spec.se_reduction;
        std::size_t in = spec.in_channels;
        for (std::size_t i = 0; i < spec.depth; ++i) {
            const std::size_t out = w << i;
            const std::string p = "enc" + std::to_string(i);
            encoders_.push_back(ConvBlock<T>(params_, p, in, out, rng));
            enc_se_.push_back(DuSEBlock<T>(params_, p + ".duse", out, r, spec.fusion, rng));
            in = out;
        }
        const std::size_t latent = w << spec.depth;
        bottleneck_ = ConvBlock<T>(params_, "latent", in, latent, rng);
        for (std::size_t i = 0; i < spec.latent_res_blocks; ++i)
            res_.push_back(ResBlock<T>(params_, "latent.res" + std::to_string(i), latent, rng));
        latent_se_ = DuSEBlock<T>(params_, "latent.duse", latent, r, spec.fusion, rng);
        for (std::size_t k = 0; k < spec.depth; ++k) {
            const std::size_t i = spec.depth - 1 - k;
            const std::size_t out = w << i;
            const std::string p = "dec" + std::to_string(i);
            up_.push_back(Conv3d<T>(params_, p + ".up", out * 2, out, 3, 1, 1, rng));
            decoders_.push_back(ConvBlock<T>(params_, p, out * 2, out, rng));
            dec_se_.push_back(DuSEBlock<T>(params_, p + ".duse", out, r, spec.fusion, rng));
        }
        head_ = Conv3d<T>(params_, "head", w, spec.out_channels, 1, 1, 0, rng);
    }

    Generator(const Generator&) = delete;
    Generator& operator=(const Generator&) = delete;
    Generator(Generator&&) noexcept = default;
    Generator& operator=(Generator&&) noexcept = default;

    const GeneratorSpec& spec() const noexcept { return spec_; }
    ParamStore<T>& params() noexcept { return params_; }
    const ParamStore<T>& params() const noexcept { return params_; }

    /// pet, mr: (N, 1, D, H, W); label: (N, 3, D, H, W).
    Var<T> forward(const Var<T>& pet, const Var<T>& mr, const Var<T>& label) const {
        const auto& ps = pet.shape();
        if (ps.size() != 5 || ps[1] != 1) throw ShapeMismatch("generator tracer input must be (N,1,D,H,W), got " + ag::shape_str(ps));
        auto spatial_eq = [&](const Shape& s, std::size_t ch) {
            return s.size() == 5 && s[0] == ps[0] && s[1] == ch && s[2] == ps[2] && s[3] == ps[3] && s[4] == ps[4];
        };
        if (!spatial_eq(mr.shape(), 1)) throw ShapeMismatch("MR input " + ag::shape_str(mr.shape()) + " vs tracer " + ag::shape_str(ps));
        if (!spatial_eq(label.shape(), kNumDomains)) throw ShapeMismatch("label input " + ag::shape_str(label.shape()) + " vs tracer " + ag::shape_str(ps));
        const std::size_t m = spec_.granularity();
        if (ps[2] % m || ps[3] % m || ps[4] % m)
            throw ShapeMismatch("generator input extents must be multiples of " + std::to_string(m) + ", got " + ag::shape_str(ps));

        Var<T> x = ag::concat<T>({pet, mr, label}, 1);
        std::vector<Var<T>> skips;
        for (std::size_t i = 0; i < spec_.depth; ++i) {
            x = enc_se_[i](encoders_[i](x));
            skips.push_back(x);
            x = ag::max_pool2(x);
        }
        x = bottleneck_(x);
        for (const auto& rb : res_) x = rb(x);
        x = latent_se_(x);
        for (std::size_t k = 0; k < spec_.depth; ++k) {
            const std::size_t i = spec_.depth - 1 - k;
            x = ag::relu(ag::instance_norm(up_[k](ag::upsample_trilinear2(x))));
            x = dec_se_[k](decoders_[k](ag::concat<T>({skips[i], x}, 1)));
        }
        return ag::tanh(head_(x));
    }

private:
    GeneratorSpec spec_;
    ParamStore<T> params_;
    std::vector<ConvBlock<T>> encoders_;
    std::vector<DuSEBlock<T>> enc_se_;
    ConvBlock<T> bottleneck_;
    std::vector<ResBlock<T>> res_;
    DuSEBlock<T> latent_se_;
    std::vector<Conv3d<T>> up_;
    std::vector<ConvBlock<T>> decoders_;
    std::vector<DuSEBlock<T>> dec_se_;
    Conv3d<T> head_;
};

}  // namespace ucan::nets
