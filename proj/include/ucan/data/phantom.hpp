#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ucan/core/filter.hpp"
#include "ucan/data/study.hpp"

namespace ucan {

struct PhantomOptions {
    /// Relative uplift of tracer B inside the thalamus blob.
    double thalamus_deviation = 0.2;
    /// Exponent of the monotone map from A to B.
    double ab_exponent = 0.6;
    VoxelSize voxel_mm{1.2, 1.055, 1.055};
};

/// ROI names emitted by the phantom generator.
inline const std::vector<std::string>& phantom_roi_names() {
    static const std::vector<std::string> names{"thalamus", "region_1", "region_2", "region_3", "region_4",
                                                "region_5", "region_6", "region_7", "region_8"};
    return names;
}

namespace detail {

struct Ellipsoid {
    std::array<double, 3> centre;
    std::array<double, 3> radii;

    double radius_at(const std::array<double, 3>& q) const {
        double r = 0.0;
        for (int i = 0; i < 3; ++i) r += std::pow((q[i] - centre[i]) / radii[i], 2);
        return std::sqrt(r);
    }
};

inline Volume smooth_field(Shape3 s, VoxelSize vox, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Volume v(s, vox);
    for (double& x : v.data()) x = n01(rng);
    v = gaussian_blur(v, sigma, 3.0);
    double mean = 0.0, sq = 0.0;
    for (double x : v.data()) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v.data()) sq += (x - mean) * (x - mean);
    const double sd = std::sqrt(sq / static_cast<double>(v.size()));
    for (double& x : v.data()) x = (x - mean) / (sd > 0 ? sd : 1.0);
    return v;
}

}  // namespace detail

/// Synthetic subject: nested ellipsoidal anatomy (cortex shell, white matter,
/// ventricles, nine deep/cortical blobs) with three tracer fields related by
///   B = 12 * (A / 8)^ab_exponent * (1 + thalamus_deviation * thalamus)
///   C = white-matter weighted uptake modulated by an independent smooth field.
/// Deterministic given the generator state.
inline Study generate_phantom_study(const std::string& id, Shape3 shape, std::mt19937_64& rng,
                                    const PhantomOptions& opt = {}) {
    if (shape.d < 16 || shape.h < 16 || shape.w < 16)
        throw ValidationError("phantom shape must be at least 16 in every extent, got " + shape.str());
    std::uniform_real_distribution<double> jit(-1.0, 1.0);
    const VoxelSize vox = opt.voxel_mm;

    std::array<double, 3> bc{0.03 * jit(rng), 0.03 * jit(rng), 0.03 * jit(rng)};
    std::array<double, 3> br{0.78 * (1 + 0.04 * jit(rng)), 0.85 * (1 + 0.04 * jit(rng)), 0.80 * (1 + 0.04 * jit(rng))};

    const std::vector<detail::Ellipsoid> ventricles{{{0.05, -0.1, 0.18}, {0.25, 0.12, 0.08}},
                                                    {{0.05, -0.1, -0.18}, {0.25, 0.12, 0.08}}};
    const std::vector<std::array<double, 3>> blob_centres{
        {-0.10, 0.15, 0.00}, {0.30, 0.45, 0.35},   {0.30, 0.45, -0.35}, {-0.35, 0.40, 0.40}, {-0.35, 0.40, -0.40},
        {0.10, -0.50, 0.40}, {0.10, -0.50, -0.40}, {0.50, -0.10, 0.00}, {-0.55, -0.20, 0.00}};
    std::vector<detail::Ellipsoid> blobs;
    std::vector<double> blob_uptake, blob_mr;
    for (std::size_t i = 0; i < blob_centres.size(); ++i) {
        auto c = blob_centres[i];
        for (double& v : c) v += 0.03 * jit(rng);
        const std::array<double, 3> r = i == 0 ? std::array<double, 3>{0.18, 0.16, 0.22} : std::array<double, 3>{0.17, 0.17, 0.17};
        blobs.push_back({c, r});
        blob_uptake.push_back(1.05 + 0.25 * jit(rng));
        blob_mr.push_back(0.62 + 0.06 * jit(rng));
    }

    const double min_extent = static_cast<double>(std::min({shape.d, shape.h, shape.w}));
    const Volume s_a = detail::smooth_field(shape, vox, 0.15 * min_extent, rng);
    const Volume s_c = detail::smooth_field(shape, vox, 0.15 * min_extent, rng);
    const Volume s_mr = detail::smooth_field(shape, vox, 0.10 * min_extent, rng);

    Volume mr(shape, vox), a(shape, vox), c(shape, vox), wm(shape, vox), brain(shape, vox);
    std::vector<Volume> masks(blobs.size(), Volume(shape, vox));
    for (std::size_t z = 0; z < shape.d; ++z)
        for (std::size_t y = 0; y < shape.h; ++y)
            for (std::size_t x = 0; x < shape.w; ++x) {
                const std::array<double, 3> p{(z + 0.5) / shape.d * 2 - 1, (y + 0.5) / shape.h * 2 - 1,
                                              (x + 0.5) / shape.w * 2 - 1};
                std::array<double, 3> q{};
                for (int i = 0; i < 3; ++i) q[i] = (p[i] - bc[i]) / br[i];
                const double r = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
                if (r > 1.0) continue;
                const std::size_t idx = mr.index(z, y, x);
                brain[idx] = 1.0;
                double m_val, a_val;
                if (r > 0.72) {
                    m_val = 0.55;
                    a_val = 1.0;
                } else {
                    m_val = 0.85;
                    a_val = 0.3;
                    wm[idx] = 1.0;
                }
                for (const auto& v : ventricles)
                    if (v.radius_at(q) <= 1.0) {
                        m_val = 0.15;
                        a_val = 0.05;
                        wm[idx] = 0.0;
                    }
                for (std::size_t b = 0; b < blobs.size(); ++b)
                    if (blobs[b].radius_at(q) <= 1.0) {
                        masks[b][idx] = 1.0;
                        m_val = blob_mr[b];
                        a_val = blob_uptake[b];
                        wm[idx] = 0.0;
                    }
                mr[idx] = 100.0 * m_val * (1.0 + 0.03 * s_mr[idx]);
                a[idx] = 8.0 * a_val * std::max(0.2, 1.0 + 0.25 * s_a[idx]);
            }
    // Guarantee non-empty masks on coarse grids: the voxel nearest each centre.
    for (std::size_t b = 0; b < blobs.size(); ++b) {
        if (std::any_of(masks[b].data().begin(), masks[b].data().end(), [](double v) { return v > 0; })) continue;
        std::array<std::size_t, 3> vox_idx{};
        const std::array<std::size_t, 3> ext{shape.d, shape.h, shape.w};
        for (int i = 0; i < 3; ++i) {
            const double p = blobs[b].centre[i] * br[i] + bc[i];
            const double f = (p + 1.0) / 2.0 * static_cast<double>(ext[i]) - 0.5;
            vox_idx[i] = static_cast<std::size_t>(std::clamp(std::lround(f), 0L, static_cast<long>(ext[i]) - 1));
        }
        masks[b].at(vox_idx[0], vox_idx[1], vox_idx[2]) = 1.0;
    }

    // Scanner-like resolution.
    a = gaussian_blur(a, 0.8, 3.0);
    const Volume wm_soft = gaussian_blur(wm, 1.0, 3.0);
    const Volume thal_soft = gaussian_blur(masks[0], 0.8, 3.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = std::max(a[i], 0.0) + 0.02;
        const double uptake = brain[i] > 0 ? (0.5 + 0.5 * wm_soft[i]) * std::max(0.2, 1.0 + 0.45 * s_c[i]) + 0.3 * a[i] / 8.0 : 0.0;
        c[i] = 6.0 * uptake;
    }
    c = gaussian_blur(c, 0.8, 3.0);

    Study s;
    s.id = id;
    Volume b(shape, vox);
    for (std::size_t i = 0; i < b.size(); ++i) {
        b[i] = 12.0 * std::pow(a[i] / 8.0, opt.ab_exponent) * (1.0 + opt.thalamus_deviation * thal_soft[i]);
        c[i] = std::max(c[i], 0.0) + 0.02;
    }
    s.pet.emplace(TracerId::A, std::move(a));
    s.pet.emplace(TracerId::B, std::move(b));
    s.pet.emplace(TracerId::C, std::move(c));
    s.mr = std::move(mr);
    for (std::size_t i = 0; i < masks.size(); ++i) s.roi_masks.emplace(phantom_roi_names()[i], std::move(masks[i]));
    for (const auto& [t, v] : s.pet) s.norm_records[t] = NormRecord{v.max()};
    return s;
}

/// Study `index` of a seeded phantom cohort. Each study draws from its own
/// stream so that cohort members do not depend on cohort size.
inline Study generate_cohort_member(std::uint64_t seed, std::size_t index, Shape3 shape, const PhantomOptions& opt = {}) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x55434Eu};
    std::mt19937_64 rng(seq);
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03zu", index);
    return generate_phantom_study(id, shape, rng, opt);
}

}  // namespace ucan
