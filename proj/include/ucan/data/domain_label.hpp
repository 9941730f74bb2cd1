#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ucan/autograd/tensor.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/core/volume.hpp"

namespace ucan {

/// Spatially constant one-hot volume (3, D, H, W) naming a tracer domain.
class DomainLabel {
public:
    DomainLabel(TracerId tracer, Shape3 shape) : tracer_(tracer), shape_(shape) {
        if (shape.voxels() == 0) throw ValidationError("domain label shape must be positive");
        channels_.assign(kNumDomains * shape.voxels(), 0);
        const std::size_t hot = static_cast<std::size_t>(ordinal(tracer));
        std::fill_n(channels_.begin() + static_cast<std::ptrdiff_t>(hot * shape.voxels()), shape.voxels(), 1);
    }

    TracerId tracer() const noexcept { return tracer_; }
    const Shape3& shape() const noexcept { return shape_; }

    std::uint8_t at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const {
        return channels_[((c * shape_.d + z) * shape_.h + y) * shape_.w + x];
    }
    const std::vector<std::uint8_t>& channels() const noexcept { return channels_; }

private:
    TracerId tracer_;
    Shape3 shape_;
    std::vector<std::uint8_t> channels_;
};

inline DomainLabel make_domain_label(TracerId tracer, Shape3 shape) { return DomainLabel(tracer, shape); }

namespace ag {

/// Batch of labels as a (N, 3, D, H, W) tensor.
template <class T>
Tensor<T> label_tensor(const std::vector<TracerId>& tracers, Shape3 s) {
    Tensor<T> t({tracers.size(), static_cast<std::size_t>(kNumDomains), s.d, s.h, s.w});
    const std::size_t V = s.voxels();
    for (std::size_t n = 0; n < tracers.size(); ++n) {
        T* dst = t.data() + (n * kNumDomains + static_cast<std::size_t>(ordinal(tracers[n]))) * V;
        std::fill_n(dst, V, T(1));
    }
    return t;
}

/// Batch of single-channel volumes as a (N, 1, D, H, W) tensor.
template <class T>
Tensor<T> volume_tensor(const std::vector<const Volume*>& vols) {
    if (vols.empty()) throw ValidationError("empty volume batch");
    const Shape3 s = vols[0]->shape();
    Tensor<T> t({vols.size(), 1, s.d, s.h, s.w});
    for (std::size_t n = 0; n < vols.size(); ++n) {
        if (vols[n]->shape() != s) throw ShapeMismatch("volume batch with mixed shapes");
        std::transform(vols[n]->data().begin(), vols[n]->data().end(), t.data() + n * s.voxels(),
                       [](double v) { return static_cast<T>(v); });
    }
    return t;
}

/// Sample `n`, channel `c` of a 5D tensor as a Volume.
template <class T>
Volume to_volume(const Tensor<T>& t, std::size_t n, std::size_t c, VoxelSize voxel) {
    if (t.rank() != 5) throw ShapeMismatch("to_volume needs a 5D tensor");
    const Shape3 s{t.dim(2), t.dim(3), t.dim(4)};
    const T* src = t.data() + (n * t.dim(1) + c) * s.voxels();
    return Volume(s, voxel, std::vector<double>(src, src + s.voxels()));
}

}  // namespace ag
}  // namespace ucan
