#pragma once

#include <vector>

#include "ucan/core/filter.hpp"
#include "ucan/core/volume.hpp"

namespace ucan::eval {

/// 100 * Σ(pred - gt)^2 / Σ gt^2, over `mask` voxels when given.
inline double nmse(const Volume& pred, const Volume& gt, const Volume* mask = nullptr) {
    require_same_shape(pred, gt, "nmse");
    if (mask) require_same_shape(*mask, gt, "nmse mask");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (mask && (*mask)[i] == 0.0) continue;
        const double e = pred[i] - gt[i];
        num += e * e;
        den += gt[i] * gt[i];
    }
    if (den == 0.0) throw UndefinedMetric("nmse: ground truth has zero energy");
    return 100.0 * num / den;
}

/// Relative error of the summed intensity inside the mask.
inline double roi_bias(const Volume& pred, const Volume& gt, const Volume& mask) {
    require_same_shape(pred, gt, "roi_bias");
    require_same_shape(mask, gt, "roi_bias mask");
    double sp = 0.0, sg = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (mask[i] == 0.0) continue;
        sp += pred[i];
        sg += gt[i];
        ++n;
    }
    if (n == 0) throw UndefinedMetric("roi_bias: empty mask");
    if (sg == 0.0) throw UndefinedMetric("roi_bias: ground truth sums to zero inside the mask");
    return (sp - sg) / sg;
}

struct SsimOptions {
    double sigma = 1.5;
    double truncate = 3.5;  // 11-tap support at sigma 1.5
    double k1 = 0.01;
    double k2 = 0.03;
    /// Dynamic range; <= 0 means max(gt) - min(gt), falling back to 1 for constant gt.
    double data_range = 0.0;
};

/// Local SSIM map from Gaussian-weighted moments (reflect boundaries,
/// population covariance).
inline Volume ssim_map(const Volume& pred, const Volume& gt, const SsimOptions& opt = {}) {
    require_same_shape(pred, gt, "ssim");
    double L = opt.data_range;
    if (L <= 0.0) {
        L = gt.max() - gt.min();
        if (L <= 0.0) L = 1.0;
    }
    const double c1 = (opt.k1 * L) * (opt.k1 * L), c2 = (opt.k2 * L) * (opt.k2 * L);
    const auto kernel = gaussian_kernel(opt.sigma, opt.truncate);
    Volume xx = pred, yy = gt, xy = pred;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        xx[i] = pred[i] * pred[i];
        yy[i] = gt[i] * gt[i];
        xy[i] = pred[i] * gt[i];
    }
    const Volume mx = separable_filter(pred, kernel), my = separable_filter(gt, kernel);
    const Volume sxx = separable_filter(xx, kernel), syy = separable_filter(yy, kernel), sxy = separable_filter(xy, kernel);
    Volume s(gt.shape(), gt.voxel_size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
        s[i] = ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return s;
}

/// Mean SSIM. With a mask: mean of the map over mask voxels. Without: mean over
/// the interior that lies a full kernel radius away from every border (the
/// whole volume when it is too small to have one).
inline double ssim(const Volume& pred, const Volume& gt, const Volume* mask = nullptr, const SsimOptions& opt = {}) {
    if (mask) require_same_shape(*mask, gt, "ssim mask");
    const Volume s = ssim_map(pred, gt, opt);
    double acc = 0.0;
    std::size_t n = 0;
    if (mask) {
        for (std::size_t i = 0; i < s.size(); ++i)
            if ((*mask)[i] != 0.0) {
                acc += s[i];
                ++n;
            }
        if (n == 0) throw UndefinedMetric("ssim: empty mask");
        return acc / static_cast<double>(n);
    }
    const std::size_t r = gaussian_kernel(opt.sigma, opt.truncate).size() / 2;
    const Shape3 sh = s.shape();
    const bool interior = sh.d > 2 * r && sh.h > 2 * r && sh.w > 2 * r;
    const std::size_t lo = interior ? r : 0;
    for (std::size_t z = lo; z < sh.d - lo; ++z)
        for (std::size_t y = lo; y < sh.h - lo; ++y)
            for (std::size_t x = lo; x < sh.w - lo; ++x) {
                acc += s.at(z, y, x);
                ++n;
            }
    return acc / static_cast<double>(n);
}

}  // namespace ucan::eval
