#pragma once

#include <algorithm>

#include "ucan/core/config.hpp"
#include "ucan/nets/layers.hpp"

namespace ucan::nets {

/// Channel recalibration: global average pool -> bottleneck MLP -> sigmoid
/// gate per channel. Bottleneck width is max(1, C / reduction).
template <class T>
struct ChannelSE {
    Linear<T> reduce, expand;

    ChannelSE() = default;
    ChannelSE(ParamStore<T>& ps, const std::string& name, std::size_t channels, std::size_t reduction,
              std::mt19937_64& rng) {
        const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
        reduce = Linear<T>(ps, name + ".reduce", channels, hidden, rng);
        expand = Linear<T>(ps, name + ".expand", hidden, channels, rng);
    }

    Var<T> gate(const Var<T>& x) const { return ag::sigmoid(expand(ag::relu(reduce(ag::global_avg_pool(x))))); }
    Var<T> operator()(const Var<T>& x) const { return ag::scale_channels(x, gate(x)); }
};

/// Spatial recalibration: pointwise convolution to one map -> sigmoid gate per voxel.
template <class T>
struct SpatialSE {
    Conv3d<T> squeeze;

    SpatialSE() = default;
    SpatialSE(ParamStore<T>& ps, const std::string& name, std::size_t channels, std::mt19937_64& rng)
        : squeeze(ps, name + ".squeeze", channels, 1, 1, 1, 0, rng) {}

    Var<T> gate(const Var<T>& x) const { return ag::sigmoid(squeeze(x)); }
    Var<T> operator()(const Var<T>& x) const { return ag::scale_voxels(x, gate(x)); }
};

/// Runs both recalibrations on the same input and fuses them.
template <class T>
struct DuSEBlock {
    ChannelSE<T> channel;
    SpatialSE<T> spatial;
    SeFusion fusion = SeFusion::max;

    DuSEBlock() = default;
    DuSEBlock(ParamStore<T>& ps, const std::string& name, std::size_t channels, std::size_t reduction, SeFusion f,
              std::mt19937_64& rng)
        : channel(ps, name + ".cse", channels, reduction, rng), spatial(ps, name + ".sse", channels, rng), fusion(f) {}

    Var<T> operator()(const Var<T>& x) const {
        auto c = channel(x);
        auto s = spatial(x);
        return fusion == SeFusion::max ? ag::maximum(c, s) : ag::add(c, s);
    }
};

}  // namespace ucan::nets
