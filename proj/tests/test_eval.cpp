#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "support.hpp"
#include "ucan/data/phantom.hpp"
#include "ucan/eval/evaluate.hpp"
#include "ucan/eval/metrics.hpp"
#include "ucan/eval/plot.hpp"
#include "ucan/eval/report.hpp"
#include "ucan/eval/stats.hpp"

using namespace ucan;
using testing_support::SplitMix;
using testing_support::random_volume;
namespace fs = std::filesystem;

namespace {

nlohmann::json reference() {
    std::ifstream in(UCAN_REFERENCE_JSON);
    return nlohmann::json::parse(in);
}

Volume splitmix_volume(SplitMix& r, Shape3 s, double lo, double hi) {
    Volume v(s);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.uniform(lo, hi);
    return v;
}

Shape3 shape_of(const nlohmann::json& j) {
    return {j["shape"][0].get<std::size_t>(), j["shape"][1].get<std::size_t>(), j["shape"][2].get<std::size_t>()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("ucan_test_eval_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

eval::MetricReport sample_report() {
    eval::MetricReport r;
    SplitMix g(99);
    for (const char* m : {eval::kModelMethod, eval::kCopyMethod})
        for (const auto& t : all_tasks())
            for (int s = 0; s < 3; ++s) {
                const std::string id = "phantom_00" + std::to_string(s);
                r.rows.push_back({m, t.name(), id, s, g.uniform(1, 30), g.uniform(0.5, 1)});
                for (const char* roi : {"thalamus", "region_1"})
                    r.bias_rows.push_back({m, t.name(), id, s, roi, g.uniform(-0.2, 0.2)});
            }
    r.rows.push_back({eval::kModelMethod, "A->B", "phantom_009", 1, std::nullopt, std::nullopt});
    r.bias_rows.push_back({eval::kModelMethod, "A->B", "phantom_009", 1, "thalamus", std::nullopt});
    return r;
}

}  // namespace

TEST(Nmse, Examples) {
    SplitMix r(1);
    auto gt = random_volume({4, 5, 6}, r, 0.1, 2.0);
    EXPECT_EQ(eval::nmse(gt, gt), 0.0);
    Volume twice = gt;
    for (double& x : twice.data()) x *= 2;
    EXPECT_NEAR(eval::nmse(twice, gt), 100.0, 1e-10);
    EXPECT_THROW(eval::nmse(gt, Volume({4, 5, 6})), UndefinedMetric);
    EXPECT_THROW(eval::nmse(gt, Volume({4, 5, 7}, {1, 1, 1}, 1.0)), ShapeMismatch);
}

TEST(Nmse, MatchesOracleAndScalesQuadratically) {
    SplitMix r(2);
    for (int t = 0; t < 20; ++t) {
        auto gt = random_volume({3, 4, 5}, r, -1, 3);
        auto err = random_volume({3, 4, 5}, r, -1, 1);
        auto mask = testing_support::random_mask({3, 4, 5}, r);
        double num = 0, den = 0, mnum = 0, mden = 0;
        Volume pred = gt;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            pred[i] = gt[i] + err[i];
            num += err[i] * err[i];
            den += gt[i] * gt[i];
            if (mask[i] > 0) {
                mnum += err[i] * err[i];
                mden += gt[i] * gt[i];
            }
        }
        EXPECT_NEAR(eval::nmse(pred, gt), 100 * num / den, 1e-7);
        EXPECT_NEAR(eval::nmse(pred, gt, &mask), 100 * mnum / mden, 1e-7);

        const double s = r.uniform(0.1, 5);
        Volume scaled = gt;
        for (std::size_t i = 0; i < gt.size(); ++i) scaled[i] = gt[i] + s * err[i];
        EXPECT_NEAR(eval::nmse(scaled, gt) / eval::nmse(pred, gt), s * s, 1e-9 * s * s);
    }
}

TEST(RoiBias, Examples) {
    SplitMix r(3);
    auto gt = random_volume({4, 4, 4}, r, 0.5, 2.0);
    auto mask = testing_support::random_mask({4, 4, 4}, r);
    EXPECT_EQ(eval::roi_bias(gt, gt, mask), 0.0);
    Volume up = gt;
    for (std::size_t i = 0; i < up.size(); ++i)
        if (mask[i] > 0) up[i] *= 1.15;
    EXPECT_NEAR(eval::roi_bias(up, gt, mask), 0.15, 1e-12);
    EXPECT_THROW(eval::roi_bias(gt, gt, Volume({4, 4, 4})), UndefinedMetric);
    EXPECT_THROW(eval::roi_bias(gt, Volume({4, 4, 4}), mask), UndefinedMetric);
}

TEST(RoiBias, MatchesOracleAndIgnoresOutside) {
    SplitMix r(4);
    for (int t = 0; t < 30; ++t) {
        auto gt = random_volume({3, 5, 4}, r, 0.1, 3);
        auto pred = random_volume({3, 5, 4}, r, 0.1, 3);
        auto mask = testing_support::random_mask({3, 5, 4}, r, 0.3);
        double sp = 0, sg = 0;
        for (std::size_t i = 0; i < gt.size(); ++i)
            if (mask[i] > 0) {
                sp += pred[i];
                sg += gt[i];
            }
        const double b = eval::roi_bias(pred, gt, mask);
        EXPECT_NEAR(b, (sp - sg) / sg, 1e-9);

        Volume p2 = pred, g2 = gt;
        for (std::size_t i = 0; i < gt.size(); ++i)
            if (mask[i] == 0) {
                p2[i] = r.uniform(-10, 10);
                g2[i] = r.uniform(-10, 10);
            }
        EXPECT_EQ(eval::roi_bias(p2, g2, mask), b);
    }
}

TEST(Filter, GaussianBlurMatchesScipy) {
    for (const auto& c : reference()["blur"]) {
        SplitMix r(c["seed"].get<std::uint64_t>());
        const Shape3 s = shape_of(c);
        auto v = splitmix_volume(r, s, 0, 1);
        auto b = gaussian_blur(v, c["sigma"].get<double>());
        double sum = 0;
        for (double x : b.data()) sum += x;
        EXPECT_NEAR(b.at(0, 0, 0), c["probe"][0].get<double>(), 1e-12);
        EXPECT_NEAR(b.at(s.d / 2, 1, s.w - 1), c["probe"][1].get<double>(), 1e-12);
        EXPECT_NEAR(sum, c["probe"][2].get<double>(), 1e-9);
    }
}

TEST(Ssim, MatchesScikitImage) {
    for (const auto& c : reference()["ssim"]) {
        SplitMix r(c["seed"].get<std::uint64_t>());
        const Shape3 s = shape_of(c);
        const double mix = c["mix"].get<double>();
        Volume gt = splitmix_volume(r, s, 0, 4);
        const Volume noise = splitmix_volume(r, s, 0, 4);
        gt = gaussian_blur(gt, 1.0);
        Volume pred = gt;
        for (std::size_t i = 0; i < gt.size(); ++i) pred[i] = (1 - mix) * gt[i] + mix * noise[i];
        EXPECT_NEAR(eval::ssim(pred, gt), c["ssim"].get<double>(), 1e-4) << "seed " << c["seed"];
    }
}

TEST(Ssim, IdentityAndSymmetry) {
    SplitMix r(5);
    for (int t = 0; t < 10; ++t) {
        auto gt = gaussian_blur(random_volume({14, 14, 14}, r, 0, 2), 1.0);
        auto pred = gaussian_blur(random_volume({14, 14, 14}, r, 0, 2), 1.0);
        EXPECT_NEAR(eval::ssim(gt, gt), 1.0, 1e-12);
        const double v = eval::ssim(pred, gt);
        EXPECT_LT(v, 1.0 - 1e-6);
        EXPECT_GE(v, -1.0);
        // The default dynamic range follows the ground truth, so symmetry is a
        // property of the metric at a shared range.
        eval::SsimOptions shared;
        shared.data_range = 2.0;
        EXPECT_NEAR(eval::ssim(pred, gt, nullptr, shared), eval::ssim(gt, pred, nullptr, shared), 1e-12);

        Volume nudged = gt;
        nudged[r.index(nudged.size())] += 0.5;
        EXPECT_LT(eval::ssim(nudged, gt, nullptr, shared), 1.0);
    }
}

TEST(Ssim, AnticorrelatedFieldIsNegative) {
    // Checkerboard with a smooth positive envelope: zero local mean under the
    // Gaussian window, so negating it flips the structure term only.
    SplitMix r(6);
    auto env = gaussian_blur(random_volume({16, 16, 16}, r, 0.5, 1.5), 2.0);
    Volume f = env, neg = env;
    for (std::size_t z = 0; z < 16; ++z)
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) {
                const double s = (z + y + x) % 2 ? -1.0 : 1.0;
                f.at(z, y, x) = s * env.at(z, y, x);
                neg.at(z, y, x) = -f.at(z, y, x);
            }
    EXPECT_LT(eval::ssim(neg, f), -0.9);
}

TEST(Ssim, ConstantGroundTruthFallsBackToUnitRange) {
    Volume c({12, 12, 12}, {1, 1, 1}, 0.3);
    EXPECT_NEAR(eval::ssim(c, c), 1.0, 1e-12);
    Volume d = c;
    d[100] = 0.5;
    eval::SsimOptions unit;
    unit.data_range = 1.0;
    EXPECT_DOUBLE_EQ(eval::ssim(d, c), eval::ssim(d, c, nullptr, unit));
}

TEST(Ssim, MaskedMeanIsMeanOfMap) {
    SplitMix r(7);
    auto gt = random_volume({8, 8, 8}, r, 0, 1);
    auto pred = random_volume({8, 8, 8}, r, 0, 1);
    auto mask = testing_support::random_mask({8, 8, 8}, r, 0.4);
    auto map = eval::ssim_map(pred, gt);
    double acc = 0, n = 0;
    for (std::size_t i = 0; i < map.size(); ++i)
        if (mask[i] > 0) {
            acc += map[i];
            n += 1;
        }
    EXPECT_NEAR(eval::ssim(pred, gt, &mask), acc / n, 1e-12);
    EXPECT_THROW(eval::ssim(pred, gt, &static_cast<const Volume&>(Volume({8, 8, 8}))), UndefinedMetric);
}

TEST(SlidingWindow, OriginsCoverExtent) {
    EXPECT_EQ(eval::window_origins(32, 32, 8), (std::vector<std::size_t>{0}));
    EXPECT_EQ(eval::window_origins(40, 16, 4), (std::vector<std::size_t>{0, 12, 24}));
    EXPECT_EQ(eval::window_origins(50, 16, 4), (std::vector<std::size_t>{0, 12, 24, 34}));
    EXPECT_THROW(eval::window_origins(8, 16, 4), ShapeMismatch);
    EXPECT_THROW(eval::window_origins(32, 16, 16), ValidationError);
}

TEST(SlidingWindow, WeightsSumToOne) {
    for (Shape3 grid : {Shape3{16, 16, 16}, Shape3{40, 24, 50}, Shape3{33, 17, 16}}) {
        auto w = eval::blend_weight_sum(grid, {{16, 16, 16}, 4});
        for (double x : w.data()) ASSERT_NEAR(x, 1.0, 1e-12);
    }
}

TEST(SlidingWindow, BlendOfConsistentWindowsReproducesField) {
    SplitMix r(8);
    const Shape3 grid{20, 28, 36};
    auto field = random_volume(grid, r, -1, 1);
    const eval::SlidingWindow sw{{16, 16, 16}, 6};
    auto [acc, wsum] = eval::detail::blend(grid, {1, 1, 1}, sw, [&](Shape3 o) { return crop(field, o, sw.patch); });
    for (std::size_t i = 0; i < acc.size(); ++i) ASSERT_NEAR(acc[i] / wsum[i], field[i], 1e-12);
}

TEST(Inference, SinglePatchEqualsDirectForward) {
    std::mt19937_64 rng(3);
    nets::GeneratorSpec spec;
    spec.depth = 2;
    spec.base_width = 2;
    spec.se_reduction = 2;
    nets::Generator<double> g(spec, rng);
    SplitMix r(9);
    auto pet = random_volume({16, 16, 16}, r, -1, 1);
    auto mr = random_volume({16, 16, 16}, r, -1, 1);
    auto direct = eval::forward_volume(g, pet, mr, TracerId::C);
    auto windowed = eval::infer_normalized(g, pet, mr, TracerId::C, {{16, 16, 16}, 4});
    for (std::size_t i = 0; i < direct.size(); ++i) ASSERT_NEAR(windowed[i], direct[i], 1e-6);
}

TEST(Inference, OutputShapeMatchesInput) {
    std::mt19937_64 rng(4);
    nets::GeneratorSpec spec;
    spec.depth = 2;
    spec.base_width = 2;
    spec.se_reduction = 2;
    nets::Generator<float> g(spec, rng);
    SplitMix r(10);
    for (Shape3 s : {Shape3{20, 18, 26}, Shape3{12, 16, 10}}) {
        auto pet = random_volume(s, r, 0, 5, {1.2, 1.055, 1.055});
        auto mr = random_volume(s, r, 0, 5, {1.2, 1.055, 1.055});
        auto out = eval::infer_whole_volume(g, pet, mr, TracerId::A, {{16, 16, 16}, 4}, NormRecord{3.0});
        EXPECT_EQ(out.shape(), s);
        EXPECT_EQ(out.voxel_size(), pet.voxel_size());
        EXPECT_GE(out.min(), 0.0);
        EXPECT_LE(out.max(), 3.0);
        auto norm = eval::infer_whole_volume(g, pet, mr, TracerId::A, {{16, 16, 16}, 4}, std::nullopt);
        EXPECT_GE(norm.min(), -1.0);
        EXPECT_LE(norm.max(), 1.0);
    }
    auto v = random_volume({16, 16, 16}, r);
    EXPECT_THROW(eval::infer_normalized(g, v, v, TracerId::A, {{14, 14, 14}, 2}), ValidationError);
}

TEST(Stats, SummaryAndPairedTTest) {
    auto s = eval::summarize({1, 2, 3, 4});
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(s->mean, 2.5);
    EXPECT_NEAR(s->std, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_FALSE(eval::summarize({}));
    EXPECT_EQ(eval::summarize({7})->std, 0.0);

    for (const auto& c : reference()["ttest"]) {
        SplitMix r(c["seed"].get<std::uint64_t>());
        const int n = c["n"].get<int>();
        std::vector<double> a, b;
        for (int i = 0; i < n; ++i) a.push_back(r.uniform(0, 10));
        for (int i = 0; i < n; ++i) b.push_back(a[static_cast<std::size_t>(i)] + r.uniform(-1, 2));
        auto p = eval::paired_t_test(a, b);
        ASSERT_TRUE(p);
        EXPECT_NEAR(*p, c["p"].get<double>(), 1e-9);
    }
    EXPECT_FALSE(eval::paired_t_test({1.0}, {2.0}));
    EXPECT_FALSE(eval::paired_t_test({1, 2, 3}, {2, 3, 4}));
}

TEST(Report, CsvAndJsonRoundTrip) {
    auto dir = fresh_dir("roundtrip");
    const auto r = sample_report();
    eval::emit_report(r, dir);
    EXPECT_EQ(eval::read_metrics_csv(dir / "metrics.csv"), r.rows);
    EXPECT_EQ(eval::read_bias_csv(dir / "roi_bias.csv"), r.bias_rows);
    const auto back = eval::load_report(dir / "report.json");
    EXPECT_EQ(back.rows, r.rows);
    EXPECT_EQ(back.bias_rows, r.bias_rows);
    fs::remove_all(dir);
}

TEST(Report, TableHasSixOrderedTaskColumns) {
    auto dir = fresh_dir("table");
    eval::emit_report(sample_report(), dir);
    std::ifstream in(dir / "table.csv");
    std::string header, model, copy, pvals;
    std::getline(in, header);
    std::getline(in, model);
    std::getline(in, copy);
    std::getline(in, pvals);
    EXPECT_EQ(header, "method,A->B,A->C,B->A,B->C,C->A,C->B");
    EXPECT_EQ(model.rfind("ucan,", 0), 0u);
    EXPECT_EQ(copy.rfind("copy_input,", 0), 0u);
    EXPECT_EQ(pvals.rfind("p_nmse", 0), 0u);
    fs::remove_all(dir);
}

TEST(Report, AggregatesSkipMissingCells) {
    const auto r = sample_report();
    auto s = r.nmse(eval::kModelMethod, "A->B");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->n, 3u);
    std::vector<double> xs;
    for (const auto& row : r.rows)
        if (row.method == eval::kModelMethod && row.task == "A->B" && row.nmse_percent) xs.push_back(*row.nmse_percent);
    EXPECT_DOUBLE_EQ(s->mean, (xs[0] + xs[1] + xs[2]) / 3);

    eval::MetricReport empty;
    empty.rows.push_back({eval::kModelMethod, "A->C", "x", 0, std::nullopt, std::nullopt});
    EXPECT_FALSE(empty.nmse(eval::kModelMethod, "A->C"));
    auto dir = fresh_dir("na");
    eval::emit_report(empty, dir);
    const std::string table = slurp(dir / "table.csv");
    EXPECT_NE(table.find("ucan,n/a,n/a,n/a,n/a,n/a,n/a"), std::string::npos);
    EXPECT_NE(slurp(dir / "metrics.csv").find("n/a,n/a"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Plot, DeterministicAndNonEmpty) {
    auto a = fresh_dir("plot_a"), b = fresh_dir("plot_b");
    const auto r = sample_report();
    eval::emit_plots(r, a);
    eval::emit_plots(eval::load_report([&] {
        eval::emit_report(r, b);
        return b / "report.json";
    }()), b);
    const std::string sa = slurp(a / "roi_bias.svg"), sb = slurp(b / "roi_bias.svg");
    EXPECT_GT(sa.size(), 200u);
    EXPECT_EQ(sa, sb);
    EXPECT_NE(sa.find("thalamus"), std::string::npos);
    EXPECT_NE(sa.find("region_1"), std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Evaluate, CopyBaselineAndMissingPrediction) {
    auto s = generate_cohort_member(1, 0, {24, 24, 24});
    eval::MetricReport rep;
    const TranslationTask ab{TracerId::A, TracerId::B};
    eval::append_metrics(rep, eval::kCopyMethod, ab, s, 0, eval::copy_baseline(s, ab), false);
    eval::append_metrics(rep, eval::kModelMethod, ab, s, 0, std::nullopt, false);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_TRUE(rep.rows[0].nmse_percent);
    EXPECT_GT(*rep.rows[0].nmse_percent, 0.0);
    EXPECT_FALSE(rep.rows[1].nmse_percent);
    EXPECT_FALSE(rep.rows[1].ssim);
    EXPECT_EQ(rep.bias_rows.size(), 2 * s.roi_masks.size());
    for (std::size_t i = s.roi_masks.size(); i < rep.bias_rows.size(); ++i) EXPECT_FALSE(rep.bias_rows[i].bias);

    auto gt_copy = s.tracer(TracerId::B);
    eval::MetricReport perfect;
    eval::append_metrics(perfect, "oracle", ab, s, 0, gt_copy, false);
    EXPECT_EQ(*perfect.rows[0].nmse_percent, 0.0);
    EXPECT_NEAR(*perfect.rows[0].ssim, 1.0, 1e-12);
    for (const auto& b : perfect.bias_rows) EXPECT_EQ(*b.bias, 0.0);
}
