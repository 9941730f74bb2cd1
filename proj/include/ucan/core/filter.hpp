#pragma once

#include <cmath>
#include <vector>

#include "ucan/core/volume.hpp"

namespace ucan {

/// Index into [0, n) under half-sample symmetric extension (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(long i, std::size_t n) {
    const long len = static_cast<long>(n);
    const long period = 2 * len;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < len ? i : period - 1 - i);
}

/// Normalized Gaussian taps, radius = int(truncate * sigma + 0.5).
inline std::vector<double> gaussian_kernel(double sigma, double truncate = 4.0) {
    const long radius = static_cast<long>(truncate * sigma + 0.5);
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Separable correlation of `v` with `kernel` along all three axes, reflect boundaries.
inline Volume separable_filter(const Volume& v, const std::vector<double>& kernel) {
    const long r = static_cast<long>(kernel.size() / 2);
    const Shape3 s = v.shape();
    Volume a = v, b = v;
    auto pass = [&](const Volume& in, Volume& out, int axis) {
        for (std::size_t z = 0; z < s.d; ++z)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (long k = -r; k <= r; ++k) {
                        const double w = kernel[static_cast<std::size_t>(k + r)];
                        switch (axis) {
                            case 0: acc += w * in.at(reflect_index(static_cast<long>(z) + k, s.d), y, x); break;
                            case 1: acc += w * in.at(z, reflect_index(static_cast<long>(y) + k, s.h), x); break;
                            default: acc += w * in.at(z, y, reflect_index(static_cast<long>(x) + k, s.w)); break;
                        }
                    }
                    out.at(z, y, x) = acc;
                }
    };
    pass(a, b, 2);
    pass(b, a, 1);
    pass(a, b, 0);
    return b;
}

inline Volume gaussian_blur(const Volume& v, double sigma, double truncate = 4.0) {
    return separable_filter(v, gaussian_kernel(sigma, truncate));
}

}  // namespace ucan
