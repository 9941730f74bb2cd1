#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "support.hpp"
#include "ucan/core/config.hpp"
#include "ucan/core/filter.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/core/volume.hpp"

using namespace ucan;

TEST(Tracer, OrdinalsAreFixed) {
    EXPECT_EQ(ordinal(TracerId::A), 0);
    EXPECT_EQ(ordinal(TracerId::B), 1);
    EXPECT_EQ(ordinal(TracerId::C), 2);
    for (TracerId t : kAllTracers) EXPECT_EQ(tracer_from_ordinal(ordinal(t)), t);
    EXPECT_THROW(tracer_from_ordinal(3), ValidationError);
    EXPECT_THROW(tracer_from_ordinal(-1), ValidationError);
}

TEST(Tracer, ParseAndTasks) {
    EXPECT_EQ(parse_tracer("b"), TracerId::B);
    EXPECT_EQ(parse_tracer("C"), TracerId::C);
    EXPECT_THROW(parse_tracer("D"), ValidationError);
    EXPECT_THROW(parse_tracer("AB"), ValidationError);

    auto tasks = all_tasks();
    std::set<std::string> names;
    for (int i = 0; i < 6; ++i) {
        EXPECT_NE(tasks[i].source, tasks[i].target);
        EXPECT_EQ(task_index(tasks[i]), i);
        names.insert(tasks[i].name());
    }
    EXPECT_EQ(names.size(), 6u);
    EXPECT_EQ(tasks[0].name(), "A->B");
    EXPECT_THROW(task_index({TracerId::A, TracerId::A}), ValidationError);
}

TEST(Volume, RejectsBadGeometryAndValues) {
    EXPECT_THROW(Volume({0, 4, 4}), ValidationError);
    EXPECT_THROW(Volume({4, 4, 4}, {1.0, 0.0, 1.0}), ValidationError);
    EXPECT_THROW(Volume({2, 2, 2}, {1, 1, 1}, std::vector<double>(7, 0.0)), ShapeMismatch);
    std::vector<double> bad(8, 1.0);
    bad[3] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(Volume({2, 2, 2}, {1, 1, 1}, bad), ValidationError);
    bad[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(Volume({2, 2, 2}, {1, 1, 1}, bad), ValidationError);
}

TEST(Volume, IndexingIsWidthFastest) {
    Volume v({2, 3, 4});
    v.at(1, 2, 3) = 5.0;
    EXPECT_EQ(v[23], 5.0);
    v.at(0, 1, 0) = 2.0;
    EXPECT_EQ(v[4], 2.0);

    Volume c = crop(v, {1, 1, 2}, {1, 2, 2});
    EXPECT_EQ(c.shape(), (Shape3{1, 2, 2}));
    EXPECT_EQ(c.at(0, 1, 1), 5.0);
    EXPECT_THROW(crop(v, {1, 2, 2}, {1, 2, 2}), ShapeMismatch);
}

TEST(Filter, GaussianKernelMatchesFormula) {
    auto k = gaussian_kernel(1.5);
    ASSERT_EQ(k.size(), 13u);  // radius = int(4 * 1.5 + 0.5)
    double sum = 0.0;
    for (double x : k) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(k[6] / k[7], std::exp(0.5 / 2.25), 1e-12);
}

TEST(Filter, BlurPreservesConstantsAndMean) {
    Volume c({6, 7, 8}, {1, 1, 1}, 3.5);
    auto b = gaussian_blur(c, 1.5);
    for (double x : b.data()) EXPECT_NEAR(x, 3.5, 1e-12);

    // Reflect padding keeps a delta's mass only away from borders.
    Volume d({15, 15, 15});
    d.at(7, 7, 7) = 1.0;
    auto bd = gaussian_blur(d, 1.0);
    double s = 0.0;
    for (double x : bd.data()) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_NEAR(bd.at(7, 7, 8), bd.at(7, 8, 7), 1e-15);
}

TEST(Config, DefaultsMatchPaperWeights) {
    TrainConfig c;
    EXPECT_EQ(c.alpha_clsf, 0.1);
    EXPECT_EQ(c.alpha_adv, 0.1);
    EXPECT_EQ(c.alpha_rec, 0.5);
    EXPECT_TRUE(c.validate().empty());
    EXPECT_TRUE(TrainConfig::desk().validate().empty());
}

TEST(Config, SerializeRoundTrip) {
    TrainConfig c;
    EXPECT_EQ(TrainConfig::parse(c.serialize()), c);

    TrainConfig d = TrainConfig::desk();
    d.lr_g = 1.2345678901234567e-4;
    d.alpha_rec = 0.3;
    d.seed = 18446744073709551615ull;
    d.se_fusion = SeFusion::add;
    d.adv_mode = AdvMode::saturating;
    d.d_sees_mr = true;
    d.full_fov = true;
    d.patch = {16, 32, 48};
    d.data_dir = "/tmp/some data";
    d.run_dir = "runs/x";
    auto back = TrainConfig::parse(d.serialize());
    EXPECT_EQ(back, d);
    EXPECT_EQ(back.hash(), d.hash());
    EXPECT_NE(d.hash(), c.hash());
}

TEST(Config, ParseOverridesBase) {
    TrainConfig base = TrainConfig::desk();
    auto c = TrainConfig::parse("# comment\n\nepochs = 3\n  lr_g=1e-3  \n", base);
    EXPECT_EQ(c.epochs, 3);
    EXPECT_EQ(c.lr_g, 1e-3);
    EXPECT_EQ(c.patch, base.patch);
    EXPECT_EQ(c.g_base_width, base.g_base_width);
}

TEST(Config, ParseRejectsMalformedLines) {
    EXPECT_THROW(TrainConfig::parse("nonsense"), ValidationError);
    EXPECT_THROW(TrainConfig::parse("no_such_key = 1"), ValidationError);
    EXPECT_THROW(TrainConfig::parse("epochs = many"), ValidationError);
    EXPECT_THROW(TrainConfig::parse("se_fusion = mean"), ValidationError);
    EXPECT_THROW(TrainConfig::parse("d_sees_mr = maybe"), ValidationError);
    EXPECT_THROW(TrainConfig::parse("patch_shape = 32,32"), ValidationError);
}

TEST(Config, ValidateNamesEachOffendingField) {
    auto has = [](const std::vector<std::string>& errs, const std::string& key) {
        for (const auto& e : errs)
            if (e.rfind(key + ":", 0) == 0) return true;
        return false;
    };
    auto check = [&](auto mutate, const std::string& key) {
        TrainConfig c = TrainConfig::desk();
        mutate(c);
        auto errs = c.validate();
        EXPECT_TRUE(has(errs, key)) << key;
        EXPECT_THROW(c.validate_or_throw(), ValidationError);
    };
    check([](TrainConfig& c) { c.alpha_rec = -0.1; }, "alpha_rec");
    check([](TrainConfig& c) { c.lr_g = 0.0; }, "lr_g");
    check([](TrainConfig& c) { c.beta1 = 1.0; }, "beta1");
    check([](TrainConfig& c) { c.batch_size = 0; }, "batch_size");
    check([](TrainConfig& c) { c.epochs = -1; }, "epochs");
    check([](TrainConfig& c) { c.num_folds = 1; }, "num_folds");
    check([](TrainConfig& c) { c.fold = 5; }, "fold");
    check([](TrainConfig& c) { c.g_depth = 7; }, "g_depth");
    check([](TrainConfig& c) { c.patch = {20, 32, 32}; }, "patch_shape");
    check([](TrainConfig& c) { c.g_depth = 2; c.patch = {8, 8, 8}; c.inference_overlap = 2; }, "patch_shape");
    check([](TrainConfig& c) { c.inference_overlap = 17; }, "inference_overlap");

    TrainConfig two = TrainConfig::desk();
    two.lr_d = -1;
    two.d_base_width = 0;
    EXPECT_EQ(two.validate().size(), 2u);
}

TEST(Config, SaveLoad) {
    auto dir = std::filesystem::temp_directory_path() / "ucan_test_core_cfg";
    std::filesystem::create_directories(dir);
    TrainConfig c = TrainConfig::desk();
    c.epochs = 7;
    c.save((dir / "c.cfg").string());
    EXPECT_EQ(TrainConfig::load((dir / "c.cfg").string()), c);
    EXPECT_THROW(TrainConfig::load((dir / "missing.cfg").string()), IoError);
    std::filesystem::remove_all(dir);
}
