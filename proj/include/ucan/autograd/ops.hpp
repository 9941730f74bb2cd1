#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "ucan/autograd/var.hpp"

namespace ucan::ag {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
    if (s.size() != r) throw ShapeMismatch(std::string(op) + " expects rank " + std::to_string(r) + ", got " + shape_str(s));
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeMismatch(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

template <class T>
void accumulate(Node<T>* p, const Tensor<T>& g) {
    if (p) p->grad_buffer() += g;
}

struct ConvGeom {
    std::size_t ci, d, h, w;     // input
    std::size_t k, stride, pad;  // cubic kernel
    std::size_t od, oh, ow;      // output

    std::size_t rows() const { return ci * k * k * k; }
    std::size_t cols() const { return od * oh * ow; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

/// Reusable per-thread work buffer; contents are unspecified on return.
template <class T>
T* scratch(std::size_t slot, std::size_t size) {
    thread_local std::vector<T> bufs[2];
    auto& b = bufs[slot];
    if (b.size() < size) b.resize(size);
    return b.data();
}

/// Output positions [lo, hi) along one axis whose input index o*stride + k - pad
/// falls inside [0, n).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t n, std::size_t out, std::size_t k, std::size_t stride,
                                                       std::size_t pad) {
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    // largest o with o*stride + k - pad <= n - 1
    const long top = static_cast<long>(n) - 1 + static_cast<long>(pad) - static_cast<long>(k);
    std::size_t hi = top < 0 ? 0 : std::min(out, static_cast<std::size_t>(top) / stride + 1);
    return {std::min(lo, hi), hi};
}

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::size_t P = g.cols();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.ci; ++c) {
        const T* xc = x + c * g.d * g.h * g.w;
        for (std::size_t kz = 0; kz < g.k; ++kz)
            for (std::size_t ky = 0; ky < g.k; ++ky)
                for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
                    T* out = cols + row * P;
                    const auto [xlo, xhi] = valid_range(g.w, g.ow, kx, g.stride, g.pad);
                    for (std::size_t oz = 0; oz < g.od; ++oz) {
                        const long iz = static_cast<long>(oz * g.stride + kz) - static_cast<long>(g.pad);
                        for (std::size_t oy = 0; oy < g.oh; ++oy) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            T* o = out + (oz * g.oh + oy) * g.ow;
                            if (iz < 0 || iz >= static_cast<long>(g.d) || iy < 0 || iy >= static_cast<long>(g.h)) {
                                std::fill(o, o + g.ow, T(0));
                                continue;
                            }
                            const T* xr = xc + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w;
                            std::fill(o, o + xlo, T(0));
                            if (g.stride == 1) {
                                std::copy(xr + xlo + kx - g.pad, xr + xhi + kx - g.pad, o + xlo);
                            } else {
                                for (std::size_t ox = xlo; ox < xhi; ++ox) o[ox] = xr[ox * g.stride + kx - g.pad];
                            }
                            std::fill(o + xhi, o + g.ow, T(0));
                        }
                    }
                }
    }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
    const std::size_t P = g.cols();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.ci; ++c) {
        T* xc = dx + c * g.d * g.h * g.w;
        for (std::size_t kz = 0; kz < g.k; ++kz)
            for (std::size_t ky = 0; ky < g.k; ++ky)
                for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
                    const T* in = cols + row * P;
                    const auto [xlo, xhi] = valid_range(g.w, g.ow, kx, g.stride, g.pad);
                    for (std::size_t oz = 0; oz < g.od; ++oz) {
                        const long iz = static_cast<long>(oz * g.stride + kz) - static_cast<long>(g.pad);
                        if (iz < 0 || iz >= static_cast<long>(g.d)) continue;
                        for (std::size_t oy = 0; oy < g.oh; ++oy) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                            const T* o = in + (oz * g.oh + oy) * g.ow;
                            T* xr = xc + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w;
                            for (std::size_t ox = xlo; ox < xhi; ++ox) xr[ox * g.stride + kx - g.pad] += o[ox];
                        }
                    }
                }
    }
}

template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df_from_in_out) {
    const auto& xv = x.value();
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(xv[i]);
    return make_result<T>(std::move(y), {x}, [df_from_in_out](Node<T>& n) {
        Node<T>* p = grad_target(n, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        const auto& in = p->value;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * df_from_in_out(in[i], n.value[i]);
    });
}

}  // namespace detail

/// Output extent of a cubic convolution along one axis.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < k) throw ShapeMismatch("convolution kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

/// 3D convolution. x: (N, Ci, D, H, W), w: (Co, Ci, k, k, k), b: (Co).
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    detail::require_rank(xs, 5, "conv3d input");
    detail::require_rank(ws, 5, "conv3d weight");
    if (ws[1] != xs[1]) throw ShapeMismatch("conv3d: weight expects " + std::to_string(ws[1]) + " input channels, got " + std::to_string(xs[1]));
    if (b.value().numel() != ws[0]) throw ShapeMismatch("conv3d: bias size");
    const std::size_t k = ws[2];
    detail::ConvGeom g{xs[1], xs[2], xs[3], xs[4], k, stride, pad,
                       conv_out_extent(xs[2], k, stride, pad), conv_out_extent(xs[3], k, stride, pad),
                       conv_out_extent(xs[4], k, stride, pad)};
    const std::size_t N = xs[0], Co = ws[0], K = g.rows(), P = g.cols(), in_sz = g.ci * g.d * g.h * g.w;

    Tensor<T> y({N, Co, g.od, g.oh, g.ow});
    T* cols = g.pointwise() ? nullptr : detail::scratch<T>(0, K * P);
    detail::CMapMat<T> W(w.value().data(), Co, K);
    for (std::size_t n = 0; n < N; ++n) {
        const T* xn = x.value().data() + n * in_sz;
        if (!g.pointwise()) detail::im2col(xn, g, cols);
        detail::CMapMat<T> C(g.pointwise() ? xn : cols, K, P);
        detail::MapMat<T> Y(y.data() + n * Co * P, Co, P);
        Y.noalias() = W * C;
        for (std::size_t o = 0; o < Co; ++o) Y.row(o).array() += b.value()[o];
    }

    return make_result<T>(std::move(y), {x, w, b}, [g, N, Co, K, P, in_sz](Node<T>& n) {
        Node<T>* px = grad_target(n, 0);
        Node<T>* pw = grad_target(n, 1);
        Node<T>* pb = grad_target(n, 2);
        const Tensor<T>& xv = n.parents[0]->value;
        const Tensor<T>& wv = n.parents[1]->value;
        detail::CMapMat<T> W(wv.data(), Co, K);
        T* cols = pw && !g.pointwise() ? detail::scratch<T>(0, K * P) : nullptr;
        T* dcols = px && !g.pointwise() ? detail::scratch<T>(1, K * P) : nullptr;
        for (std::size_t s = 0; s < N; ++s) {
            detail::CMapMat<T> dY(n.grad.data() + s * Co * P, Co, P);
            if (pb) {
                auto& gb = pb->grad_buffer();
                const T* dy = n.grad.data() + s * Co * P;
                for (std::size_t o = 0; o < Co; ++o) {
                    double acc = 0;
                    for (std::size_t i = 0; i < P; ++i) acc += dy[o * P + i];
                    gb[o] += static_cast<T>(acc);
                }
            }
            if (pw) {
                const T* xn = xv.data() + s * in_sz;
                if (!g.pointwise()) detail::im2col(xn, g, cols);
                detail::CMapMat<T> C(g.pointwise() ? xn : cols, K, P);
                detail::MapMat<T> dW(pw->grad_buffer().data(), Co, K);
                dW.noalias() += dY * C.transpose();
            }
            if (px) {
                T* dxn = px->grad_buffer().data() + s * in_sz;
                if (g.pointwise()) {
                    detail::MapMat<T> dX(dxn, K, P);
                    dX.noalias() += W.transpose() * dY;
                } else {
                    detail::MapMat<T> dC(dcols, K, P);
                    dC.noalias() = W.transpose() * dY;
                    detail::col2im_add(dcols, g, dxn);
                }
            }
        }
    });
}

/// Per-sample, per-channel normalization over the spatial extent (no affine).
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
    const auto& xv = x.value();
    if (xv.rank() < 3) throw ShapeMismatch("instance_norm needs (N, C, ...) input");
    const std::size_t NC = xv.dim(0) * xv.dim(1), S = xv.spatial();
    Tensor<T> y(xv.shape());
    std::vector<T> inv_std(NC);
    for (std::size_t i = 0; i < NC; ++i) {
        const T* in = xv.data() + i * S;
        T mean = 0;
        for (std::size_t j = 0; j < S; ++j) mean += in[j];
        mean /= T(S);
        T var = 0;
        for (std::size_t j = 0; j < S; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= T(S);
        inv_std[i] = T(1) / std::sqrt(var + eps);
        T* out = y.data() + i * S;
        for (std::size_t j = 0; j < S; ++j) out[j] = (in[j] - mean) * inv_std[i];
    }
    return make_result<T>(std::move(y), {x}, [inv_std = std::move(inv_std), NC, S](Node<T>& n) {
        Node<T>* p = grad_target(n, 0);
        if (!p) return;
        auto& gx = p->grad_buffer();
        for (std::size_t i = 0; i < NC; ++i) {
            const T* gy = n.grad.data() + i * S;
            const T* yv = n.value.data() + i * S;
            T mg = 0, mgy = 0;
            for (std::size_t j = 0; j < S; ++j) {
                mg += gy[j];
                mgy += gy[j] * yv[j];
            }
            mg /= T(S);
            mgy /= T(S);
            T* dx = gx.data() + i * S;
            for (std::size_t j = 0; j < S; ++j) dx[j] += inv_std[i] * (gy[j] - mg - yv[j] * mgy);
        }
    });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2)) {
    return detail::unary(
        x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T in, T) { return in > T(0) ? T(1) : slope; });
}

template <class T>
T sigmoid_scalar(T v) {
    return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    return detail::unary(x, [](T v) { return sigmoid_scalar(v); }, [](T, T out) { return out * (T(1) - out); });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
    return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T out) { return T(1) - out * out; });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::require_same(a.shape(), b.shape(), "add");
    Tensor<T> y = a.value();
    y += b.value();
    return make_result<T>(std::move(y), {a, b}, [](Node<T>& n) {
        detail::accumulate(grad_target(n, 0), n.grad);
        detail::accumulate(grad_target(n, 1), n.grad);
    });
}

/// Element-wise maximum; ties route the gradient to `a`.
template <class T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
    detail::require_same(a.shape(), b.shape(), "maximum");
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] >= bv[i] ? av[i] : bv[i];
    return make_result<T>(std::move(y), {a, b}, [](Node<T>& n) {
        Node<T>* pa = grad_target(n, 0);
        Node<T>* pb = grad_target(n, 1);
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            if (av[i] >= bv[i]) {
                if (pa) pa->grad_buffer()[i] += n.grad[i];
            } else if (pb) {
                pb->grad_buffer()[i] += n.grad[i];
            }
        }
    });
}

/// x: (N, C, ...), gate: (N, C). Scales every channel map by its gate.
template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate) {
    const auto& xv = x.value();
    const auto& gv = gate.value();
    if (gv.rank() != 2 || gv.dim(0) != xv.dim(0) || gv.dim(1) != xv.dim(1))
        throw ShapeMismatch("scale_channels gate " + shape_str(gv.shape()) + " for input " + shape_str(xv.shape()));
    const std::size_t NC = gv.numel(), S = xv.spatial();
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < NC; ++i)
        for (std::size_t j = 0; j < S; ++j) y[i * S + j] = xv[i * S + j] * gv[i];
    return make_result<T>(std::move(y), {x, gate}, [NC, S](Node<T>& n) {
        Node<T>* px = grad_target(n, 0);
        Node<T>* pg = grad_target(n, 1);
        const auto& xv = n.parents[0]->value;
        const auto& gv = n.parents[1]->value;
        for (std::size_t i = 0; i < NC; ++i) {
            T acc = 0;
            for (std::size_t j = 0; j < S; ++j) {
                const T gy = n.grad[i * S + j];
                if (px) px->grad_buffer()[i * S + j] += gy * gv[i];
                acc += gy * xv[i * S + j];
            }
            if (pg) pg->grad_buffer()[i] += acc;
        }
    });
}

/// x: (N, C, D, H, W), gate: (N, 1, D, H, W). Scales every voxel across channels.
template <class T>
Var<T> scale_voxels(const Var<T>& x, const Var<T>& gate) {
    const auto& xv = x.value();
    const auto& gv = gate.value();
    if (gv.rank() != xv.rank() || gv.dim(0) != xv.dim(0) || gv.dim(1) != 1 || gv.spatial() != xv.spatial())
        throw ShapeMismatch("scale_voxels gate " + shape_str(gv.shape()) + " for input " + shape_str(xv.shape()));
    const std::size_t N = xv.dim(0), C = xv.dim(1), S = xv.spatial();
    Tensor<T> y(xv.shape());
    for (std::size_t s = 0; s < N; ++s)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t j = 0; j < S; ++j) y[(s * C + c) * S + j] = xv[(s * C + c) * S + j] * gv[s * S + j];
    return make_result<T>(std::move(y), {x, gate}, [N, C, S](Node<T>& n) {
        Node<T>* px = grad_target(n, 0);
        Node<T>* pg = grad_target(n, 1);
        const auto& xv = n.parents[0]->value;
        const auto& gv = n.parents[1]->value;
        for (std::size_t s = 0; s < N; ++s)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t j = 0; j < S; ++j) {
                    const std::size_t i = (s * C + c) * S + j;
                    if (px) px->grad_buffer()[i] += n.grad[i] * gv[s * S + j];
                    if (pg) pg->grad_buffer()[s * S + j] += n.grad[i] * xv[i];
                }
    });
}

/// Concatenates along axis 0 (batch) or 1 (channel).
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
    if (xs.empty()) throw ValidationError("concat of nothing");
    if (axis > 1) throw ValidationError("concat supports axis 0 or 1");
    Shape out = xs[0].shape();
    std::size_t total = 0;
    for (const auto& x : xs) {
        Shape a = x.shape(), b = out;
        a[axis] = b[axis] = 0;
        if (a != b) throw ShapeMismatch("concat: " + shape_str(x.shape()) + " vs " + shape_str(xs[0].shape()));
        total += x.shape()[axis];
    }
    out[axis] = total;
    const std::size_t outer = axis == 0 ? 1 : out[0];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < out.size(); ++i) inner *= out[i];

    Tensor<T> y(out);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& x : xs) {
        offsets.push_back(off);
        const std::size_t len = x.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.value().data() + o * len, len, y.data() + o * total * inner + off * inner);
        off += x.shape()[axis];
    }
    return make_result<T>(std::move(y), xs, [offsets, outer, inner, total, axis](Node<T>& n) {
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            Node<T>* p = grad_target(n, k);
            if (!p) continue;
            const std::size_t len = p->value.shape()[axis] * inner;
            auto& g = p->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + o * total * inner + offsets[k] * inner;
                T* dst = g.data() + o * len;
                for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
            }
        }
    });
}

/// Rows [begin, end) of the batch axis.
template <class T>
Var<T> slice_batch(const Var<T>& x, std::size_t begin, std::size_t end) {
    const auto& xv = x.value();
    if (begin >= end || end > xv.dim(0)) throw ShapeMismatch("slice_batch range");
    const std::size_t row = xv.numel() / xv.dim(0);
    Shape s = xv.shape();
    s[0] = end - begin;
    Tensor<T> y(s, std::vector<T>(xv.data() + begin * row, xv.data() + end * row));
    return make_result<T>(std::move(y), {x}, [begin, row](Node<T>& n) {
        Node<T>* p = grad_target(n, 0);
        if (!p) return;
        T* g = p->grad_buffer().data() + begin * row;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
    });
}

/// (N, C, ...) -> (N, C): mean over the spatial extent.
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const auto& xv = x.value();
    const std::size_t N = xv.dim(0), C = xv.dim(1), S = xv.spatial();
    Tensor<T> y({N, C});
    for (std::size_t i = 0; i < N * C; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < S; ++j) acc += xv[i * S + j];
        y[i] = acc / T(S);
    }
    return make_result<T>(std::move(y), {x}, [S](Node<T>& n) {
        Node<T>* p = grad_target(n, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const T v = n.grad[i] / T(S);
            for (std::size_t j = 0; j < S; ++j) g[i * S + j] += v;
        }
    });
}

/// x: (N, F), w: (O, F), b: (O) -> (N, O).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    detail::require_rank(xv.shape(), 2, "linear input");
    detail::require_rank(wv.shape(), 2, "linear weight");
    if (wv.dim(1) != xv.dim(1) || b.value().numel() != wv.dim(0)) throw ShapeMismatch("linear weight/bias");
    const std::size_t N = xv.dim(0), F = xv.dim(1), O = wv.dim(0);
    Tensor<T> y({N, O});
    for (std::size_t s = 0; s < N; ++s)
        for (std::size_t o = 0; o < O; ++o) {
            T acc = b.value()[o];
            for (std::size_t f = 0; f < F; ++f) acc += wv[o * F + f] * xv[s * F + f];
            y[s * O + o] = acc;
        }
    return make_result<T>(std::move(y), {x, w, b}, [N, F, O](Node<T>& n) {
        Node<T>* px = grad_target(n, 0);
        Node<T>* pw = grad_target(n, 1);
        Node<T>* pb = grad_target(n, 2);
        const auto& xv = n.parents[0]->value;
        const auto& wv = n.parents[1]->value;
        for (std::size_t s = 0; s < N; ++s)
            for (std::size_t o = 0; o < O; ++o) {
                const T gy = n.grad[s * O + o];
                if (pb) pb->grad_buffer()[o] += gy;
                for (std::size_t f = 0; f < F; ++f) {
                    if (pw) pw->grad_buffer()[o * F + f] += gy * xv[s * F + f];
                    if (px) px->grad_buffer()[s * F + f] += gy * wv[o * F + f];
                }
            }
    });
}

/// 2x2x2 max pooling with stride 2. Extents must be even.
template <class T>
Var<T> max_pool2(const Var<T>& x) {
    const auto& xv = x.value();
    detail::require_rank(xv.shape(), 5, "max_pool2");
    const std::size_t NC = xv.dim(0) * xv.dim(1), D = xv.dim(2), H = xv.dim(3), W = xv.dim(4);
    if (D % 2 || H % 2 || W % 2) throw ShapeMismatch("max_pool2 needs even extents, got " + shape_str(xv.shape()));
    const std::size_t od = D / 2, oh = H / 2, ow = W / 2;
    Tensor<T> y({xv.dim(0), xv.dim(1), od, oh, ow});
    std::vector<std::size_t> arg(y.numel());
    for (std::size_t c = 0; c < NC; ++c) {
        const T* in = xv.data() + c * D * H * W;
        for (std::size_t z = 0; z < od; ++z)
            for (std::size_t yy = 0; yy < oh; ++yy)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    std::size_t best = (2 * z * H + 2 * yy) * W + 2 * xx;
                    for (std::size_t dz = 0; dz < 2; ++dz)
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                const std::size_t i = ((2 * z + dz) * H + 2 * yy + dy) * W + 2 * xx + dx;
                                if (in[i] > in[best]) best = i;
                            }
                    const std::size_t o = ((c * od + z) * oh + yy) * ow + xx;
                    y[o] = in[best];
                    arg[o] = c * D * H * W + best;
                }
    }
    return make_result<T>(std::move(y), {x}, [arg = std::move(arg)](Node<T>& n) {
        Node<T>* p = grad_target(n, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += n.grad[o];
    });
}

namespace detail {

/// Doubles one axis by linear interpolation (half-pixel centers, edge clamp).
template <class T>
Var<T> upsample_axis2(const Var<T>& x, std::size_t axis) {
    const auto& xv = x.value();
    Shape s = xv.shape();
    const std::size_t n = s[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    s[axis] = 2 * n;

    struct Tap {
        std::size_t i0, i1;
        T l0, l1;
    };
    std::vector<Tap> taps(2 * n);
    for (std::size_t o = 0; o < 2 * n; ++o) {
        const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * 0.5 - 0.5);
        const std::size_t i0 = std::min(static_cast<std::size_t>(src), n - 1);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const T l1 = static_cast<T>(src - static_cast<double>(i0));
        taps[o] = {i0, i1, T(1) - l1, l1};
    }

    Tensor<T> y(s);
    for (std::size_t a = 0; a < outer; ++a) {
        const T* in = xv.data() + a * n * inner;
        T* out = y.data() + a * 2 * n * inner;
        for (std::size_t o = 0; o < 2 * n; ++o) {
            const Tap& t = taps[o];
            for (std::size_t j = 0; j < inner; ++j)
                out[o * inner + j] = t.l0 * in[t.i0 * inner + j] + t.l1 * in[t.i1 * inner + j];
        }
    }
    return make_result<T>(std::move(y), {x}, [taps = std::move(taps), outer, inner, n](Node<T>& nd) {
        Node<T>* p = grad_target(nd, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t a = 0; a < outer; ++a) {
            T* gin = g.data() + a * n * inner;
            const T* gout = nd.grad.data() + a * 2 * n * inner;
            for (std::size_t o = 0; o < 2 * n; ++o) {
                const Tap& t = taps[o];
                for (std::size_t j = 0; j < inner; ++j) {
                    gin[t.i0 * inner + j] += t.l0 * gout[o * inner + j];
                    gin[t.i1 * inner + j] += t.l1 * gout[o * inner + j];
                }
            }
        }
    });
}

}  // namespace detail

/// Trilinear x2 upsampling of (N, C, D, H, W).
template <class T>
Var<T> upsample_trilinear2(const Var<T>& x) {
    detail::require_rank(x.shape(), 5, "upsample_trilinear2");
    return detail::upsample_axis2(detail::upsample_axis2(detail::upsample_axis2(x, 4), 3), 2);
}

/// Mean absolute difference, as a scalar.
template <class T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
    detail::require_same(a.shape(), b.shape(), "l1_loss");
    const auto& av = a.value();
    const auto& bv = b.value();
    double acc = 0;
    for (std::size_t i = 0; i < av.numel(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
    const std::size_t N = av.numel();
    return make_result<T>(Tensor<T>({1}, {static_cast<T>(acc / N)}), {a, b}, [N](Node<T>& n) {
        Node<T>* pa = grad_target(n, 0);
        Node<T>* pb = grad_target(n, 1);
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        const T g = n.grad[0] / T(N);
        for (std::size_t i = 0; i < N; ++i) {
            const T sgn = av[i] > bv[i] ? T(1) : (av[i] < bv[i] ? T(-1) : T(0));
            if (pa) pa->grad_buffer()[i] += g * sgn;
            if (pb) pb->grad_buffer()[i] -= g * sgn;
        }
    });
}

/// -mean(log(clamp(p))) when `complement` is false, -mean(log(1 - clamp(p))) otherwise.
/// Clamped entries pass no gradient.
template <class T>
Var<T> neg_mean_log(const Var<T>& p, bool complement, double eps = 1e-7) {
    const auto& pv = p.value();
    const std::size_t N = pv.numel();
    double acc = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const double q = std::clamp(static_cast<double>(pv[i]), eps, 1.0 - eps);
        acc -= std::log(complement ? 1.0 - q : q);
    }
    return make_result<T>(Tensor<T>({1}, {static_cast<T>(acc / N)}), {p}, [N, complement, eps](Node<T>& n) {
        Node<T>* pp = grad_target(n, 0);
        if (!pp) return;
        auto& g = pp->grad_buffer();
        const auto& pv = pp->value;
        const double scale = static_cast<double>(n.grad[0]) / N;
        for (std::size_t i = 0; i < N; ++i) {
            const double q = pv[i];
            if (q < eps || q > 1.0 - eps) continue;
            g[i] += static_cast<T>(complement ? scale / (1.0 - q) : -scale / q);
        }
    });
}

/// Mean over rows of -log softmax(logits)[target]. logits: (N, K).
template <class T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& targets) {
    const auto& lv = logits.value();
    detail::require_rank(lv.shape(), 2, "cross_entropy");
    const std::size_t N = lv.dim(0), K = lv.dim(1);
    if (targets.size() != N) throw ShapeMismatch("cross_entropy: target count");
    Tensor<T> prob({N, K});
    double acc = 0;
    for (std::size_t s = 0; s < N; ++s) {
        if (targets[s] < 0 || static_cast<std::size_t>(targets[s]) >= K) throw ValidationError("cross_entropy: target out of range");
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) m = std::max(m, static_cast<double>(lv[s * K + k]));
        double z = 0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(lv[s * K + k] - m);
        for (std::size_t k = 0; k < K; ++k) prob[s * K + k] = static_cast<T>(std::exp(lv[s * K + k] - m) / z);
        acc += -(lv[s * K + targets[s]] - m - std::log(z));
    }
    return make_result<T>(Tensor<T>({1}, {static_cast<T>(acc / N)}), {logits},
                          [prob = std::move(prob), targets, N, K](Node<T>& n) {
                              Node<T>* p = grad_target(n, 0);
                              if (!p) return;
                              auto& g = p->grad_buffer();
                              const T scale = n.grad[0] / T(N);
                              for (std::size_t s = 0; s < N; ++s)
                                  for (std::size_t k = 0; k < K; ++k)
                                      g[s * K + k] += scale * (prob[s * K + k] - (static_cast<int>(k) == targets[s] ? T(1) : T(0)));
                          });
}

/// Σ w_i · x_i over scalar vars.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<T>& ws) {
    if (xs.size() != ws.size()) throw ValidationError("weighted_sum: size mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].value().numel() != 1) throw ShapeMismatch("weighted_sum expects scalars");
        acc += ws[i] * xs[i].value()[0];
    }
    return make_result<T>(Tensor<T>({1}, {acc}), xs, [ws](Node<T>& n) {
        for (std::size_t i = 0; i < ws.size(); ++i)
            if (Node<T>* p = grad_target(n, i)) p->grad_buffer()[0] += ws[i] * n.grad[0];
    });
}

}  // namespace ucan::ag
