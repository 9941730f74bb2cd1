#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "ucan/data/domain_label.hpp"
#include "ucan/data/normalize.hpp"
#include "ucan/nets/generator.hpp"

namespace ucan::eval {

/// Window origins along one axis: stride (patch - overlap), last window flush
/// with the end. `extent` must be >= `patch`.
inline std::vector<std::size_t> window_origins(std::size_t extent, std::size_t patch, std::size_t overlap) {
    if (patch > extent) throw ShapeMismatch("window larger than extent");
    if (overlap >= patch) throw ValidationError("overlap must be smaller than the patch");
    std::vector<std::size_t> out{0};
    const std::size_t stride = patch - overlap;
    while (out.back() + patch < extent) out.push_back(std::min(out.back() + stride, extent - patch));
    return out;
}

/// Raised-cosine taps, strictly positive: w(i) = 0.5 - 0.5 cos(2π (i + 0.5) / n).
inline std::vector<double> cosine_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return w;
}

struct SlidingWindow {
    Shape3 patch;
    std::size_t overlap = 16;
};

namespace detail {

inline Volume pad_to(const Volume& v, Shape3 s, double fill) {
    if (v.shape() == s) return v;
    Volume out(s, v.voxel_size(), fill);
    const Shape3 in = v.shape();
    for (std::size_t z = 0; z < in.d; ++z)
        for (std::size_t y = 0; y < in.h; ++y)
            for (std::size_t x = 0; x < in.w; ++x) out.at(z, y, x) = v.at(z, y, x);
    return out;
}

/// Accumulates weighted windows over a padded grid.
template <class Fn>
std::pair<Volume, Volume> blend(Shape3 grid, VoxelSize vox, const SlidingWindow& sw, Fn&& predict) {
    const Shape3 p = sw.patch;
    const auto oz = window_origins(grid.d, p.d, std::min(sw.overlap, p.d - 1));
    const auto oy = window_origins(grid.h, p.h, std::min(sw.overlap, p.h - 1));
    const auto ox = window_origins(grid.w, p.w, std::min(sw.overlap, p.w - 1));
    const auto wz = cosine_window(p.d), wy = cosine_window(p.h), wx = cosine_window(p.w);
    Volume acc(grid, vox), wsum(grid, vox);
    for (std::size_t z0 : oz)
        for (std::size_t y0 : oy)
            for (std::size_t x0 : ox) {
                const Shape3 origin{z0, y0, x0};
                const Volume pred = predict(origin);
                for (std::size_t z = 0; z < p.d; ++z)
                    for (std::size_t y = 0; y < p.h; ++y)
                        for (std::size_t x = 0; x < p.w; ++x) {
                            const double w = wz[z] * wy[y] * wx[x];
                            acc.at(z0 + z, y0 + y, x0 + x) += w * pred.at(z, y, x);
                            wsum.at(z0 + z, y0 + y, x0 + x) += w;
                        }
            }
    return {std::move(acc), std::move(wsum)};
}

}  // namespace detail

/// Σ over windows of each window's normalized blending weight, per voxel.
/// Identically 1 wherever the windows cover the grid.
inline Volume blend_weight_sum(Shape3 grid, const SlidingWindow& sw) {
    auto [acc, wsum] = detail::blend(grid, {1, 1, 1}, sw, [&](Shape3) { return Volume(sw.patch, {1, 1, 1}, 1.0); });
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = wsum[i] > 0 ? acc[i] / wsum[i] : 0.0;
    return acc;
}

/// Generator applied once to a whole (normalized) volume pair.
template <class T>
Volume forward_volume(const nets::Generator<T>& g, const Volume& pet_n, const Volume& mr_n, TracerId target) {
    ag::NoGradGuard ng;
    auto pet = ag::Var<T>::leaf(ag::volume_tensor<T>({&pet_n}));
    auto mr = ag::Var<T>::leaf(ag::volume_tensor<T>({&mr_n}));
    auto lab = ag::Var<T>::leaf(ag::label_tensor<T>({target}, pet_n.shape()));
    return ag::to_volume(g.forward(pet, mr, lab).value(), 0, 0, pet_n.voxel_size());
}

/// Sliding-window translation in normalized space. Volumes smaller than the
/// patch are padded with -1 (normalized background) and cropped back.
template <class T>
Volume infer_normalized(const nets::Generator<T>& g, const Volume& pet_n, const Volume& mr_n, TracerId target,
                        SlidingWindow sw) {
    require_same_shape(pet_n, mr_n, "inference inputs");
    const Shape3 s = pet_n.shape();
    const std::size_t m = g.spec().granularity();
    if (sw.patch.d % m || sw.patch.h % m || sw.patch.w % m)
        throw ValidationError("inference patch " + sw.patch.str() + " is not a multiple of " + std::to_string(m));
    const Shape3 grid{std::max(s.d, sw.patch.d), std::max(s.h, sw.patch.h), std::max(s.w, sw.patch.w)};
    const Volume pet = detail::pad_to(pet_n, grid, -1.0), mr = detail::pad_to(mr_n, grid, -1.0);
    auto [acc, wsum] = detail::blend(grid, pet_n.voxel_size(), sw, [&](Shape3 origin) {
        return forward_volume(g, crop(pet, origin, sw.patch), crop(mr, origin, sw.patch), target);
    });
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= wsum[i];
    return acc.shape() == s ? acc : crop(acc, {0, 0, 0}, s);
}

/// Translates a raw source tracer volume to `target`. The output is
/// denormalized with `target_record` when one is available, and left in
/// normalized [-1, 1] space otherwise.
template <class T>
Volume infer_whole_volume(const nets::Generator<T>& g, const Volume& x_pet, const Volume& x_mr, TracerId target,
                          SlidingWindow sw, const std::optional<NormRecord>& target_record) {
    const Volume pet_n = normalize(x_pet).first;
    const Volume mr_n = normalize(x_mr).first;
    Volume out = infer_normalized(g, pet_n, mr_n, target, sw);
    return target_record ? denormalize(out, *target_record) : out;
}

}  // namespace ucan::eval
