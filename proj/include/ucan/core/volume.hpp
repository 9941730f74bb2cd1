#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ucan/core/error.hpp"

namespace ucan {

/// Spatial extent in (depth, height, width) order; width is the fastest axis.
struct Shape3 {
    std::size_t d = 0, h = 0, w = 0;

    std::size_t voxels() const noexcept { return d * h * w; }
    friend bool operator==(const Shape3&, const Shape3&) = default;

    std::string str() const {
        return std::to_string(d) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

using VoxelSize = std::array<double, 3>;

/// Dense scalar 3D grid with voxel spacing in mm. Intensities are stored in
/// double so that normalize/denormalize round trips stay exact to ~1e-12.
class Volume {
public:
    Volume() = default;

    Volume(Shape3 shape, VoxelSize voxel_mm = {1.0, 1.0, 1.0}, double fill = 0.0)
        : shape_(shape), voxel_mm_(voxel_mm), data_(shape.voxels(), fill) {
        check_geometry();
    }

    Volume(Shape3 shape, VoxelSize voxel_mm, std::vector<double> data)
        : shape_(shape), voxel_mm_(voxel_mm), data_(std::move(data)) {
        check_geometry();
        if (data_.size() != shape_.voxels())
            throw ShapeMismatch("data holds " + std::to_string(data_.size()) + " values, shape " + shape_.str());
        for (double v : data_)
            if (!std::isfinite(v)) throw ValidationError("volume contains non-finite values");
    }

    const Shape3& shape() const noexcept { return shape_; }
    const VoxelSize& voxel_size() const noexcept { return voxel_mm_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept {
        return (z * shape_.h + y) * shape_.w + x;
    }
    double& at(std::size_t z, std::size_t y, std::size_t x) noexcept { return data_[index(z, y, x)]; }
    double at(std::size_t z, std::size_t y, std::size_t x) const noexcept { return data_[index(z, y, x)]; }

    double max() const { return *std::max_element(data_.begin(), data_.end()); }
    double min() const { return *std::min_element(data_.begin(), data_.end()); }

    bool same_geometry(const Volume& o) const noexcept {
        return shape_ == o.shape_ && voxel_mm_ == o.voxel_mm_;
    }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    void check_geometry() const {
        if (shape_.d == 0 || shape_.h == 0 || shape_.w == 0)
            throw ValidationError("volume shape must be positive, got " + shape_.str());
        for (double s : voxel_mm_)
            if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("voxel size must be positive");
    }

    Shape3 shape_{};
    VoxelSize voxel_mm_{1.0, 1.0, 1.0};
    std::vector<double> data_;
};

inline void require_same_shape(const Volume& a, const Volume& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
}

inline bool is_binary(const Volume& v) {
    return std::all_of(v.data().begin(), v.data().end(), [](double x) { return x == 0.0 || x == 1.0; });
}

/// Extracts the box starting at `origin` with extent `extent`.
inline Volume crop(const Volume& v, Shape3 origin, Shape3 extent) {
    const auto& s = v.shape();
    if (origin.d + extent.d > s.d || origin.h + extent.h > s.h || origin.w + extent.w > s.w)
        throw ShapeMismatch("crop box exceeds volume " + s.str());
    Volume out(extent, v.voxel_size());
    for (std::size_t z = 0; z < extent.d; ++z)
        for (std::size_t y = 0; y < extent.h; ++y)
            for (std::size_t x = 0; x < extent.w; ++x)
                out.at(z, y, x) = v.at(origin.d + z, origin.h + y, origin.w + x);
    return out;
}

}  // namespace ucan
