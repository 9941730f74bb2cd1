#include <gtest/gtest.h>

#include "support.hpp"
#include "ucan/autograd/ops.hpp"

using namespace ucan;
using namespace ucan::ag;
using testing_support::grad_check;
using testing_support::project;
using testing_support::random_tensor;
using testing_support::SplitMix;

namespace {

using V = Var<double>;

V leaf(Tensor<double> t) { return V::leaf(std::move(t), true); }

std::vector<double> weights_for(const Tensor<double>& t, SplitMix& r) {
    std::vector<double> w(t.numel());
    for (auto& v : w) v = r.uniform(-1, 1);
    return w;
}

// Scalar-loop convolution: y[n,o,z,y,x] = b[o] + Σ w[o,c,kz,ky,kx] x[n,c,z*s+kz-p, ...].
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, std::size_t s,
                           std::size_t p) {
    const std::size_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const std::size_t O = w.dim(0), k = w.dim(2);
    const std::size_t od = (D + 2 * p - k) / s + 1, oh = (H + 2 * p - k) / s + 1, ow = (W + 2 * p - k) / s + 1;
    Tensor<double> y({N, O, od, oh, ow});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t z = 0; z < od; ++z)
                for (std::size_t yy = 0; yy < oh; ++yy)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        double acc = b[o];
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t kz = 0; kz < k; ++kz)
                                for (std::size_t ky = 0; ky < k; ++ky)
                                    for (std::size_t kx = 0; kx < k; ++kx) {
                                        const long iz = long(z * s + kz) - long(p), iy = long(yy * s + ky) - long(p),
                                                   ix = long(xx * s + kx) - long(p);
                                        if (iz < 0 || iy < 0 || ix < 0 || iz >= long(D) || iy >= long(H) || ix >= long(W)) continue;
                                        acc += w[(((o * C + c) * k + kz) * k + ky) * k + kx] *
                                               x[(((n * C + c) * D + iz) * H + iy) * W + ix];
                                    }
                        y[(((n * O + o) * od + z) * oh + yy) * ow + xx] = acc;
                    }
    return y;
}

}  // namespace

TEST(Conv3d, MatchesScalarLoop) {
    SplitMix r(1);
    struct Case {
        std::size_t n, c, o, d, h, w, k, s, p;
    };
    for (const Case& c : {Case{1, 2, 3, 5, 6, 7, 3, 1, 1}, Case{2, 1, 2, 8, 8, 8, 4, 2, 1}, Case{1, 3, 2, 4, 5, 6, 1, 1, 0},
                          Case{2, 2, 2, 6, 6, 6, 3, 1, 1}, Case{1, 2, 1, 9, 7, 5, 3, 2, 0}}) {
        auto x = random_tensor({c.n, c.c, c.d, c.h, c.w}, r);
        auto w = random_tensor({c.o, c.c, c.k, c.k, c.k}, r);
        auto b = random_tensor({c.o}, r);
        auto y = conv3d(V::leaf(x), V::leaf(w), V::leaf(b), c.s, c.p);
        auto ref = conv_oracle(x, w, b, c.s, c.p);
        ASSERT_EQ(y.shape(), ref.shape());
        for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(y.value()[i], ref[i], 1e-12);
    }
}

TEST(Conv3d, GradientMatchesFiniteDifference) {
    SplitMix r(2);
    for (auto [k, s, p] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 1, 1}, {4, 2, 1}, {1, 1, 0}, {3, 2, 0}}) {
        auto x = leaf(random_tensor({2, 2, 6, 5, 6}, r));
        auto w = leaf(random_tensor({3, 2, k, k, k}, r));
        auto b = leaf(random_tensor({3}, r));
        auto probe = conv3d(x, w, b, s, p);
        auto rw = weights_for(probe.value(), r);
        auto res = grad_check([&] { return project(conv3d(x, w, b, s, p), rw); }, {x, w, b}, 40, r);
        EXPECT_EQ(res.passed, res.checked) << "k=" << k << " worst " << res.worst;
    }
}

TEST(Conv3d, RejectsChannelMismatch) {
    SplitMix r(3);
    auto x = V::leaf(random_tensor({1, 2, 4, 4, 4}, r));
    auto w = V::leaf(random_tensor({1, 3, 3, 3, 3}, r));
    auto b = V::leaf(random_tensor({1}, r));
    EXPECT_THROW(conv3d(x, w, b, 1, 1), ShapeMismatch);
}

TEST(InstanceNorm, ZeroMeanUnitVariancePerChannel) {
    SplitMix r(4);
    auto x = V::leaf(random_tensor({2, 3, 4, 5, 3}, r, -3, 7));
    auto y = instance_norm(x, 0.0);
    const std::size_t S = 60;
    for (std::size_t c = 0; c < 6; ++c) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < S; ++i) m += y.value()[c * S + i];
        m /= S;
        for (std::size_t i = 0; i < S; ++i) v += std::pow(y.value()[c * S + i] - m, 2);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / S, 1.0, 1e-10);
    }
}

TEST(InstanceNorm, Gradient) {
    SplitMix r(5);
    auto x = leaf(random_tensor({2, 2, 3, 4, 3}, r));
    auto rw = weights_for(x.value(), r);
    auto res = grad_check([&] { return project(instance_norm(x), rw); }, {x}, 100, r);
    EXPECT_EQ(res.passed, res.checked) << res.worst;
}

TEST(Elementwise, Gradients) {
    SplitMix r(6);
    auto a = leaf(random_tensor({2, 3, 2, 3, 2}, r));
    auto b = leaf(random_tensor({2, 3, 2, 3, 2}, r));
    auto rw = weights_for(a.value(), r);
    const std::vector<std::pair<const char*, std::function<V()>>> cases{
        {"relu", [&] { return project(relu(a), rw); }},
        {"leaky_relu", [&] { return project(leaky_relu(a), rw); }},
        {"sigmoid", [&] { return project(sigmoid(a), rw); }},
        {"tanh", [&] { return project(ag::tanh(a), rw); }},
        {"add", [&] { return project(add(a, b), rw); }},
        {"maximum", [&] { return project(maximum(a, b), rw); }},
    };
    for (const auto& [name, f] : cases) {
        auto res = grad_check(f, {a, b}, 72, r);
        EXPECT_EQ(res.passed, res.checked) << name << " worst " << res.worst;
    }
}

TEST(Maximum, TiesRouteGradientToFirstArgument) {
    auto a = leaf(Tensor<double>({1, 1, 1, 1, 2}, {1.0, 2.0}));
    auto b = leaf(Tensor<double>({1, 1, 1, 1, 2}, {1.0, 3.0}));
    project(maximum(a, b), {1.0, 1.0}).backward();
    EXPECT_EQ(a.grad()[0], 1.0);
    EXPECT_EQ(b.grad()[0], 0.0);
    EXPECT_EQ(a.grad()[1], 0.0);
    EXPECT_EQ(b.grad()[1], 1.0);
}

TEST(Scaling, ChannelAndVoxelGates) {
    SplitMix r(7);
    auto x = leaf(random_tensor({2, 3, 2, 3, 4}, r));
    auto gc = leaf(random_tensor({2, 3}, r));
    auto gv = leaf(random_tensor({2, 1, 2, 3, 4}, r));
    auto yc = scale_channels(x, gc);
    auto yv = scale_voxels(x, gv);
    const std::size_t S = 24;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t k = (n * 3 + c) * S + i;
                EXPECT_DOUBLE_EQ(yc.value()[k], x.value()[k] * gc.value()[n * 3 + c]);
                EXPECT_DOUBLE_EQ(yv.value()[k], x.value()[k] * gv.value()[n * S + i]);
            }
    auto rw = weights_for(x.value(), r);
    auto res = grad_check([&] { return project(add(scale_channels(x, gc), scale_voxels(x, gv)), rw); }, {x, gc, gv}, 60, r);
    EXPECT_EQ(res.passed, res.checked) << res.worst;
}

TEST(Concat, LayoutAndGradient) {
    SplitMix r(8);
    auto a = leaf(random_tensor({2, 1, 2, 2, 2}, r));
    auto b = leaf(random_tensor({2, 2, 2, 2, 2}, r));
    auto y = concat<double>({a, b}, 1);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 2, 2, 2}));
    EXPECT_EQ(y.value()[0], a.value()[0]);
    EXPECT_EQ(y.value()[8], b.value()[0]);
    EXPECT_EQ(y.value()[24], a.value()[8]);
    auto c = leaf(random_tensor({1, 1, 2, 2, 2}, r));
    auto z = concat<double>({a, c}, 0);
    ASSERT_EQ(z.shape(), (Shape{3, 1, 2, 2, 2}));
    EXPECT_EQ(z.value()[16], c.value()[0]);
    auto rw = weights_for(y.value(), r);
    auto rz = weights_for(z.value(), r);
    auto res = grad_check([&] { return add(project(concat<double>({a, b}, 1), rw), project(concat<double>({a, c}, 0), rz)); },
                          {a, b, c}, 50, r);
    EXPECT_EQ(res.passed, res.checked);
    EXPECT_THROW(concat<double>({a, c}, 1), ShapeMismatch);
}

TEST(SliceBatch, Gradient) {
    SplitMix r(9);
    auto x = leaf(random_tensor({4, 2, 2, 2, 2}, r));
    auto s = slice_batch(x, 1, 3);
    ASSERT_EQ(s.shape(), (Shape{2, 2, 2, 2, 2}));
    EXPECT_EQ(s.value()[0], x.value()[16]);
    auto rw = weights_for(s.value(), r);
    auto res = grad_check([&] { return project(slice_batch(x, 1, 3), rw); }, {x}, 64, r);
    EXPECT_EQ(res.passed, res.checked);
}

TEST(Pooling, GlobalAverageAndLinear) {
    SplitMix r(10);
    auto x = leaf(random_tensor({2, 3, 2, 3, 2}, r));
    auto g = global_avg_pool(x);
    ASSERT_EQ(g.shape(), (Shape{2, 3}));
    double m = 0;
    for (std::size_t i = 0; i < 12; ++i) m += x.value()[12 + i];
    EXPECT_NEAR(g.value()[1], m / 12, 1e-12);
    auto w = leaf(random_tensor({4, 3}, r));
    auto b = leaf(random_tensor({4}, r));
    auto y = linear(g, w, b);
    EXPECT_NEAR(y.value()[4 + 2],
                b.value()[2] + w.value()[6] * g.value()[3] + w.value()[7] * g.value()[4] + w.value()[8] * g.value()[5], 1e-12);
    auto rw = weights_for(y.value(), r);
    auto res = grad_check([&] { return project(linear(global_avg_pool(x), w, b), rw); }, {x, w, b}, 40, r);
    EXPECT_EQ(res.passed, res.checked);
}

TEST(MaxPool, ValuesAndGradient) {
    SplitMix r(11);
    auto x = leaf(random_tensor({1, 2, 4, 4, 6}, r));
    auto y = max_pool2(x);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2, 3}));
    double m = -1e9;
    for (std::size_t dz = 0; dz < 2; ++dz)
        for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, x.value()[(dz * 4 + dy) * 6 + dx]);
    EXPECT_EQ(y.value()[0], m);
    auto rw = weights_for(y.value(), r);
    auto res = grad_check([&] { return project(max_pool2(x), rw); }, {x}, 192, r);
    EXPECT_EQ(res.passed, res.checked);
    EXPECT_THROW(max_pool2(V::leaf(random_tensor({1, 1, 3, 4, 4}, r))), ShapeMismatch);
}

TEST(Upsample, HalfPixelLinearInterpolation) {
    // 1D profile along W: [0, 1, 4] -> taps at source positions -0.25 (clamped 0), 0.25, 0.75, 1.25, 1.75, 2.25 (clamped)
    auto x = V::leaf(Tensor<double>({1, 1, 1, 1, 3}, {0.0, 1.0, 4.0}));
    auto y = upsample_trilinear2(x);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2, 6}));
    const double want[6] = {0.0, 0.25, 0.75, 1.75, 3.25, 4.0};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y.value()[i], want[i], 1e-12);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y.value()[18 + i], want[i], 1e-12);
    SplitMix r(12);
    auto c = V::leaf(Tensor<double>({1, 2, 2, 3, 2}, 0.7));
    auto yc = upsample_trilinear2(c);
    for (double v : yc.value().vec()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Upsample, Gradient) {
    SplitMix r(13);
    auto x = leaf(random_tensor({1, 2, 2, 3, 2}, r));
    auto rw = weights_for(upsample_trilinear2(x).value(), r);
    auto res = grad_check([&] { return project(upsample_trilinear2(x), rw); }, {x}, 24, r);
    EXPECT_EQ(res.passed, res.checked) << res.worst;
}

TEST(Losses, ScalarOpsGradients) {
    SplitMix r(14);
    auto a = leaf(random_tensor({1, 1, 3, 3, 3}, r));
    auto b = leaf(random_tensor({1, 1, 3, 3, 3}, r));
    auto p = leaf(random_tensor({2, 1, 2, 2, 2}, r, 0.05, 0.95));
    auto logits = leaf(random_tensor({3, 3}, r, -2, 2));
    const std::vector<int> targets{0, 2, 1};
    const std::vector<std::pair<const char*, std::function<V()>>> cases{
        {"l1", [&] { return l1_loss(a, b); }},
        {"neg_mean_log", [&] { return neg_mean_log(p, false); }},
        {"neg_mean_log complement", [&] { return neg_mean_log(p, true); }},
        {"cross_entropy", [&] { return cross_entropy(logits, targets); }},
        {"weighted_sum", [&] { return weighted_sum<double>({l1_loss(a, b), cross_entropy(logits, targets)}, {0.3, 1.7}); }},
    };
    for (const auto& [name, f] : cases) {
        auto res = grad_check(f, {a, b, p, logits}, 30, r);
        EXPECT_EQ(res.passed, res.checked) << name << " worst " << res.worst;
    }
}

TEST(Losses, ClampedScoresPassNoGradient) {
    auto p = leaf(Tensor<double>({1, 3}, {0.0, 0.5, 1.0}));
    neg_mean_log(p, false).backward();
    EXPECT_EQ(p.grad()[0], 0.0);
    EXPECT_NEAR(p.grad()[1], -1.0 / (3 * 0.5), 1e-12);
    EXPECT_EQ(p.grad()[2], 0.0);
    EXPECT_TRUE(std::isfinite(neg_mean_log(p, true).value()[0]));
}

TEST(Graph, NoGradRecordsNothingAndSharedInputsAccumulate) {
    SplitMix r(15);
    auto x = leaf(random_tensor({1, 1, 2, 2, 2}, r));
    {
        NoGradGuard ng;
        auto y = relu(x);
        EXPECT_FALSE(y.requires_grad());
    }
    // y = x + x: gradient 2 per element.
    project(add(x, x), std::vector<double>(8, 1.0)).backward();
    for (double g : x.grad().vec()) EXPECT_DOUBLE_EQ(g, 2.0);
}
