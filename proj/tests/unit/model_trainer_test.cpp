#include "siamdecon/io.hpp"
#include "siamdecon/model.hpp"
#include "siamdecon/psf.hpp"
#include "siamdecon/trainer.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace siamdecon;

namespace {

UNetConfig small_config(int dims, int base = 4) {
    auto cfg = UNetConfig::defaults(dims);
    cfg.base_features = base;
    return cfg;
}

TrainConfig small_train(int dims = 2) {
    auto cfg = TrainConfig::defaults(dims);
    cfg.model = small_config(dims);
    cfg.patch_size = dims == 2 ? 32 : 16;
    cfg.batch_size = 2;
    cfg.total_steps = 10;
    cfg.log_every = 1;
    cfg.seed = 3;
    return cfg;
}

// Smooth synthetic image: a few low-frequency sinusoids in [0, 1].
Image smooth_image(int64_t h, int64_t w) {
    auto y = torch::arange(h, torch::kFloat64).view({h, 1});
    auto x = torch::arange(w, torch::kFloat64).view({1, w});
    auto v = 0.5 + 0.2 * torch::sin(x / 7.0) * torch::cos(y / 5.0) + 0.15 * torch::sin((x + y) / 11.0);
    return Image(v.to(torch::kFloat32));
}

Image noisy_image(int64_t h, int64_t w, uint64_t seed) {
    auto clean = smooth_image(h, w).tensor();
    auto noise = (testutil::uniform_tensor({h, w}, seed) - 0.5) * 0.2;
    return Image((clean + noise).clamp(0, 1));
}

}  // namespace

// ---------------------------------------------------------------- model

TEST(UNet, Default2DShapeContract) {
    auto net = build_unet(UNetConfig::defaults(2));
    net->eval();
    torch::NoGradGuard g;
    auto y = net->forward(torch::randn({1, 1, 128, 128}));
    EXPECT_EQ(y.sizes(), (c10::IntArrayRef{1, 1, 128, 128}));
}

TEST(UNet, Default3DShapeContract) {
    auto net = build_unet(UNetConfig::defaults(3));
    net->eval();
    torch::NoGradGuard g;
    auto y = net->forward(torch::randn({1, 1, 64, 64, 64}));
    EXPECT_EQ(y.sizes(), (c10::IntArrayRef{1, 1, 64, 64, 64}));
}

TEST(UNet, Default2DParameterCountNearReference) {
    auto net = build_unet(UNetConfig::defaults(2));
    const double n = static_cast<double>(net->parameter_count());
    EXPECT_GE(n, 5.75e6 * 0.85);
    EXPECT_LE(n, 5.75e6 * 1.15);
}

TEST(UNet, FeatureWidthsDoublePerLevel) {
    auto net = build_unet(UNetConfig::defaults(2));
    std::vector<int64_t> widths;
    for (const auto& p : net->named_parameters()) {
        if (p.key().rfind("enc", 0) == 0 && p.key().find(".0.conv.weight") != std::string::npos) {
            widths.push_back(p.value().size(0));
        }
    }
    EXPECT_EQ(widths, (std::vector<int64_t>{96, 192, 384}));
}

TEST(UNet, ShapePreservationAcrossValidSizes) {
    for (int dims : {2, 3}) {
        auto net = build_unet(small_config(dims));
        net->eval();
        torch::NoGradGuard g;
        for (int64_t s : {4, 8, 12, 20}) {
            Shape shape{2, 1};
            for (int a = 0; a < dims; ++a) shape.push_back(s + (a == 0 ? 4 : 0));
            auto y = net->forward(torch::randn(shape));
            EXPECT_EQ(Shape(y.sizes().begin(), y.sizes().end()), shape);
        }
    }
}

TEST(UNet, RejectsIndivisibleOrMisshapenInput) {
    auto net = build_unet(small_config(2));
    try {
        net->forward(torch::randn({1, 1, 30, 32}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("divisible"), std::string::npos);
    }
    EXPECT_THROW(net->forward(torch::randn({1, 2, 32, 32})), Error);
    EXPECT_THROW(net->forward(torch::randn({1, 32, 32})), Error);
}

TEST(UNet, EvalModeIsDeterministicAndFinite) {
    auto net = build_unet(small_config(2, 8));
    net->eval();
    torch::NoGradGuard g;
    auto x = torch::rand({2, 1, 32, 32}) * 6 - 3;
    auto a = net->forward(x), b = net->forward(x);
    EXPECT_TRUE(torch::equal(a, b));
    EXPECT_TRUE(torch::isfinite(a).all().item<bool>());
}

TEST(UNet, SameSeedSameWeights) {
    auto a = build_unet(small_config(3), 5), b = build_unet(small_config(3), 5);
    auto pa = a->parameters(), pb = b->parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(UNet, AddSkipsProjectToEncoderWidth) {
    auto cfg = small_config(2);
    cfg.skip_mode = SkipMode::Add;
    auto net = build_unet(cfg);
    net->eval();
    torch::NoGradGuard g;
    EXPECT_EQ(net->forward(torch::randn({1, 1, 16, 16})).sizes(), (c10::IntArrayRef{1, 1, 16, 16}));
}

TEST(UNet, WeightGradientMatchesFiniteDifferences) {
    auto net = build_unet(small_config(2, 2), 7);
    net->to(torch::kFloat64);
    net->eval();
    auto x = (testutil::uniform_tensor({1, 1, 16, 16}, 8).to(torch::kFloat64) - 0.5) * 4;
    auto params = net->named_parameters();
    auto weight = params["enc0.0.conv.weight"];
    net->zero_grad();
    net->forward(x).sum().backward();
    auto analytic = weight.grad().clone().flatten();

    torch::NoGradGuard g;
    auto flat = weight.view(-1);
    std::vector<double> num, ana;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double keep = flat[i].item<double>(), h = 1e-5;
        flat[i] = keep + h;
        double up = net->forward(x).sum().item<double>();
        flat[i] = keep - h;
        double down = net->forward(x).sum().item<double>();
        flat[i] = keep;
        num.push_back((up - down) / (2 * h));
        ana.push_back(analytic[i].item<double>());
    }
    EXPECT_LE(testutil::relative_error(torch::tensor(ana), torch::tensor(num)), 1e-2);
}

TEST(UNet, TranslationCovariantInInterior) {
    auto net = build_unet(small_config(2, 4), 9);
    net->eval();
    torch::NoGradGuard g;
    const int64_t n = 128, shift = 8, margin = 40;
    auto x = torch::rand({1, 1, n, n});
    auto y = net->forward(x);
    auto ys = net->forward(torch::roll(x, {shift, shift}, {2, 3}));
    using torch::indexing::Slice;
    auto a = ys.index({0, 0, Slice(margin + shift, n - margin), Slice(margin + shift, n - margin)});
    auto b = y.index({0, 0, Slice(margin, n - margin - shift), Slice(margin, n - margin - shift)});
    EXPECT_LE(testutil::max_abs_diff(a, b), 1e-4);
}

TEST(UNetConfigTest, DefaultsAndValidation) {
    auto c2 = UNetConfig::defaults(2), c3 = UNetConfig::defaults(3);
    EXPECT_EQ(c2.depth, 3);
    EXPECT_EQ(c2.base_features, 96);
    EXPECT_EQ(c2.skip_mode, SkipMode::Concat);
    EXPECT_EQ(c3.base_features, 48);
    EXPECT_EQ(c3.skip_mode, SkipMode::Add);
    UNetConfig bad = c2;
    bad.depth = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = c2;
    bad.base_features = 0;
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_EQ(parse_skip_mode("add"), SkipMode::Add);
    EXPECT_THROW(parse_skip_mode("mul"), Error);
}

// ---------------------------------------------------------------- checkpoints

TEST(CheckpointIo, RoundTripPreservesOutputs) {
    testutil::TempDir dir;
    Checkpoint ckpt;
    ckpt.config = small_config(2);
    ckpt.model = build_unet(ckpt.config, 11);
    ckpt.stats = {0.3, 0.2};
    ckpt.step = 42;
    ckpt.optimizer_state = std::string("\x00\x01\x02opt", 6);
    save_checkpoint(dir / "c.pt", ckpt);
    auto back = load_checkpoint(dir / "c.pt");
    EXPECT_EQ(back.step, 42);
    EXPECT_EQ(back.stats.mean, 0.3);
    EXPECT_EQ(back.stats.std, 0.2);
    EXPECT_EQ(back.optimizer_state, ckpt.optimizer_state);
    EXPECT_EQ(back.config.base_features, 4);
    ckpt.model->eval();
    back.model->eval();
    torch::NoGradGuard g;
    auto x = torch::randn({1, 1, 16, 16});
    EXPECT_TRUE(torch::equal(ckpt.model->forward(x), back.model->forward(x)));
}

TEST(CheckpointIo, RejectsForeignFiles) {
    testutil::TempDir dir;
    io::write_text(dir / "junk.pt", "definitely not an archive");
    EXPECT_THROW(load_checkpoint(dir / "junk.pt"), Error);
    EXPECT_THROW(load_checkpoint(dir / "missing.pt"), Error);
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string("something-else")));
    archive.save_to((dir / "other.pt").string());
    EXPECT_THROW(load_checkpoint(dir / "other.pt"), Error);
}

// ---------------------------------------------------------------- trainer

TEST(LrSchedule, StepValues) {
    auto cfg = TrainConfig::defaults(2);
    EXPECT_DOUBLE_EQ(lr_at(0, cfg), 4e-4);
    EXPECT_DOUBLE_EQ(lr_at(499, cfg), 4e-4);
    EXPECT_DOUBLE_EQ(lr_at(500, cfg), 2e-4);
    EXPECT_DOUBLE_EQ(lr_at(2999, cfg), 1.25e-5);
    auto c3 = TrainConfig::defaults(3);
    EXPECT_DOUBLE_EQ(lr_at(2000, c3), 2e-4);
    double prev = lr_at(0, cfg);
    for (int s = 1; s < 5000; s += 7) {
        double v = lr_at(s, cfg);
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(TrainConfigTest, DefaultsAndValidation) {
    auto c2 = TrainConfig::defaults(2);
    EXPECT_EQ(c2.patch_size, 128);
    EXPECT_EQ(c2.batch_size, 16);
    EXPECT_EQ(c2.total_steps, 3000);
    EXPECT_EQ(c2.mask_fraction, 0.005);
    EXPECT_EQ(c2.mask_sigma, 0.2);
    auto c3 = TrainConfig::defaults(3);
    EXPECT_EQ(c3.patch_size, 64);
    EXPECT_EQ(c3.batch_size, 4);
    EXPECT_EQ(c3.total_steps, 15000);
    EXPECT_EQ(c3.lr_decay_every, 2000);
    auto bad = c2;
    bad.patch_size = 126;
    EXPECT_THROW(bad.validate(), Error);
    bad = c2;
    bad.total_steps = 0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(SamplePatch, WholeImageCropVariesOnlyByAugmentation) {
    auto img = testutil::uniform_tensor({32, 32}, 12);
    SeededRng rng(13);
    for (int i = 0; i < 20; ++i) {
        auto p = sample_patch(img, 32, rng);
        EXPECT_EQ(p.origin, (Shape{0, 0}));
        EXPECT_TRUE(torch::equal(p.data, apply_augmentation(img, p.permutation, p.flips)));
    }
}

TEST(SamplePatch, FlipTwiceIsIdentity) {
    auto img = testutil::uniform_tensor({8, 9, 10}, 14);
    for (int a = 0; a < 3; ++a) {
        std::vector<bool> flips(3, false);
        flips[a] = true;
        auto once = apply_augmentation(img, {0, 1, 2}, flips);
        EXPECT_FALSE(torch::equal(once, img));
        EXPECT_TRUE(torch::equal(apply_augmentation(once, {0, 1, 2}, flips), img));
    }
}

TEST(SamplePatch, AugmentationGroupHasExpectedSize) {
    auto img = testutil::uniform_tensor({6, 6}, 15);
    SeededRng rng(16);
    std::set<std::vector<float>> seen;
    for (int i = 0; i < 400; ++i) {
        auto p = sample_patch(img, 6, rng).data.contiguous();
        seen.insert(std::vector<float>(p.data_ptr<float>(), p.data_ptr<float>() + p.numel()));
    }
    EXPECT_EQ(seen.size(), 8u);

    auto vol = testutil::uniform_tensor({4, 4, 4}, 17);
    std::set<std::vector<float>> seen3;
    for (int i = 0; i < 4000; ++i) {
        auto p = sample_patch(vol, 4, rng).data.contiguous();
        seen3.insert(std::vector<float>(p.data_ptr<float>(), p.data_ptr<float>() + p.numel()));
    }
    EXPECT_EQ(seen3.size(), 48u);
}

TEST(SamplePatch, OriginsAreUniform) {
    auto img = torch::zeros({256, 256});
    SeededRng rng(18);
    const int n = 10000, values = 256 - 128 + 1;
    std::vector<std::vector<int>> hist(2, std::vector<int>(values, 0));
    for (int i = 0; i < n; ++i) {
        auto p = sample_patch(img, 128, rng);
        for (int a = 0; a < 2; ++a) ++hist[a][p.origin[a]];
    }
    const double expect = static_cast<double>(n) / values;
    const double sd = std::sqrt(n * (1.0 / values) * (1 - 1.0 / values));
    for (const auto& h : hist)
        for (int c : h) EXPECT_NEAR(c, expect, 4 * sd);
}

TEST(SamplePatch, SmallImageIsPaddedWithWarning) {
    testutil::WarningCapture warnings;
    SeededRng rng(19);
    auto p = sample_patch(testutil::uniform_tensor({20, 40}, 19), 32, rng);
    EXPECT_EQ(p.data.sizes(), (c10::IntArrayRef{32, 32}));
    EXPECT_EQ(warnings.seen().size(), 1u);
}

TEST(Trainer, Noise2SelfRunsOneForwardPerStep) {
    auto cfg = small_train();
    cfg.loss = LossConfig::noise2self();
    Trainer trainer(noisy_image(64, 64, 1), gaussian_psf(2, 5, 1.0), cfg);
    for (int i = 0; i < 3; ++i) trainer.step();
    EXPECT_EQ(trainer.forward_count(), 3u);
    EXPECT_EQ(trainer.psf_convolutions(), 3u);
}

TEST(Trainer, Noise2SameRunsTwoForwardsPerStep) {
    for (const char* name : {"noise2same", "noise2same_d"}) {
        auto cfg = small_train();
        cfg.loss = LossConfig::preset(name);
        Trainer trainer(noisy_image(64, 64, 2), gaussian_psf(2, 5, 1.0), cfg);
        for (int i = 0; i < 3; ++i) trainer.step();
        EXPECT_EQ(trainer.forward_count(), 6u) << name;
    }
}

TEST(Trainer, StandardizationStatsComeFromWholeImage) {
    auto img = noisy_image(64, 64, 3);
    Trainer trainer(img, gaussian_psf(2, 5, 1.0), small_train());
    auto t = img.tensor().to(torch::kFloat64);
    EXPECT_NEAR(trainer.stats().mean, t.mean().item<double>(), 1e-9);
    EXPECT_NEAR(trainer.stats().std, t.std(false).item<double>(), 1e-9);
}

TEST(Trainer, RejectsMismatchedInputs) {
    auto cfg = small_train();
    EXPECT_THROW(Trainer(noisy_image(64, 64, 4), gaussian_psf(3, 5, 1.0), cfg), Error);
    EXPECT_THROW(Trainer(Image(torch::rand({16, 16, 16})), gaussian_psf(2, 5, 1.0), cfg), Error);
    EXPECT_THROW(Trainer(noisy_image(64, 64, 4), gaussian_psf(2, 33, 3.0), cfg), Error);
}

TEST(Trainer, LossDecreasesOverFirst200Steps) {
    auto cfg = small_train();
    cfg.total_steps = 200;
    cfg.loss = LossConfig::noise2same_d();
    Trainer trainer(noisy_image(96, 96, 5), gaussian_psf(2, 5, 1.0), cfg);
    std::vector<double> totals;
    for (int i = 0; i < 200; ++i) totals.push_back(trainer.step().total);
    double lead = 0, trail = 0;
    for (int i = 0; i < 50; ++i) {
        lead += totals[i];
        trail += totals[150 + i];
    }
    EXPECT_LT(trail, lead);
}

TEST(Train, SameSeedReproducesFinalLoss) {
    auto cfg = small_train();
    auto img = noisy_image(64, 64, 6);
    auto psf = gaussian_psf(2, 5, 1.0);
    auto a = train(img, psf, cfg), b = train(img, psf, cfg);
    double la = a.log.back().loss.total, lb = b.log.back().loss.total;
    EXPECT_NEAR(la, lb, 1e-4 * std::abs(la));
    cfg.seed = 4;
    auto c = train(img, psf, cfg);
    EXPECT_NE(c.log.back().loss.total, la);
}

TEST(Train, WritesLogAndLoadableCheckpoint) {
    testutil::TempDir dir;
    auto cfg = small_train();
    cfg.total_steps = 30;
    cfg.log_every = 10;
    auto result = train(noisy_image(64, 64, 7), gaussian_psf(2, 5, 1.0), cfg, TrainOutputs{dir.path()});
    EXPECT_EQ(result.log.size(), 3u);
    auto text = io::read_text(dir / "train_log.csv");
    EXPECT_EQ(text.rfind(log_csv_header(), 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
    auto ckpt = load_checkpoint(dir / "checkpoint.pt");
    EXPECT_EQ(ckpt.step, 30);
    EXPECT_EQ(std::string(Checkpoint::kFormatTag), "siamdecon-checkpoint-v1");
    EXPECT_GT(result.train_seconds, 0);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    testutil::TempDir dir;
    auto cfg = small_train();
    auto img = noisy_image(64, 64, 8);
    auto psf = gaussian_psf(2, 5, 1.0);
    cfg.total_steps = 8;
    auto straight = train(img, psf, cfg);

    cfg.total_steps = 4;
    train(img, psf, cfg, TrainOutputs{dir.path()});
    cfg.total_steps = 8;
    auto resumed = train(img, psf, cfg, TrainOutputs{dir.path(), /*resume=*/true});
    EXPECT_EQ(resumed.checkpoint.step, 8);
    auto pa = straight.checkpoint.model->parameters();
    auto pb = resumed.checkpoint.model->parameters();
    for (size_t i = 0; i < pa.size(); ++i) EXPECT_LE(testutil::max_abs_diff(pa[i], pb[i]), 1e-6);
}

TEST(LogCsv, RowHasOneFieldPerHeaderColumn) {
    LogRow row{5, 1e-4, LossBreakdown{1, 2, 3, 4, 5, 6, 21}, 12.5};
    auto line = log_csv_row(row);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
    auto header = log_csv_header();
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 9);
    EXPECT_EQ(line.rfind("5,", 0), 0u);
}
