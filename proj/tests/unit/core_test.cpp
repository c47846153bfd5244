#include "siamdecon/core.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace siamdecon;

TEST(Image, RejectsBadRankAndNonFinite) {
    EXPECT_THROW(Image(torch::zeros({4})), Error);
    EXPECT_THROW(Image(torch::zeros({2, 2, 2, 2})), Error);
    auto t = torch::zeros({3, 3});
    t[1][1] = std::nan("");
    EXPECT_THROW(Image{t}, Error);
    t[1][1] = INFINITY;
    EXPECT_THROW(Image{t}, Error);
    EXPECT_THROW(Image(torch::zeros({3, 3}), ValueRange{1, 1}), Error);
}

TEST(Image, StoresFloat32Contiguous) {
    Image img(torch::ones({4, 5}, torch::kFloat64).t());
    EXPECT_EQ(img.tensor().scalar_type(), torch::kFloat32);
    EXPECT_TRUE(img.tensor().is_contiguous());
    EXPECT_EQ(img.shape(), (Shape{5, 4}));
}

TEST(Image, FromVectorRoundTrip) {
    std::vector<float> v{1, 2, 3, 4, 5, 6};
    auto img = Image::from_vector(v, {2, 3});
    EXPECT_EQ(img.to_vector(), v);
    EXPECT_FLOAT_EQ(img.at({1, 2}), 6.0f);
    EXPECT_THROW(Image::from_vector(v, {4, 2}), Error);
}

TEST(PSFKernelType, EnforcesInvariants) {
    EXPECT_THROW(PSFKernel(torch::full({2, 2}, 0.25)), Error);
    auto neg = torch::zeros({3, 3});
    neg[0][0] = -0.5;
    neg[1][1] = 1.5;
    EXPECT_THROW(PSFKernel{neg}, Error);
    EXPECT_THROW(PSFKernel(torch::full({3, 3}, 0.2)), Error);
    PSFKernel ok(torch::full({3, 3}, 1.0 / 9));
    PSFKernel other(torch::full({3, 3}, 1.0 / 9));
    EXPECT_NE(ok.id(), other.id());
}

TEST(PSFKernelType, FlippedReversesEveryAxis) {
    auto t = torch::arange(27, torch::kFloat64).reshape({3, 3, 3});
    PSFKernel k(t / t.sum());
    auto f = k.flipped().tensor();
    EXPECT_DOUBLE_EQ(f[0][0][0].item<double>(), k.tensor()[2][2][2].item<double>());
    EXPECT_DOUBLE_EQ(f[2][1][0].item<double>(), k.tensor()[0][1][2].item<double>());
}

TEST(Standardize, BinaryImageGivesZeroMeanUnitStd) {
    auto t = torch::zeros({4, 4});
    t.index_put_({torch::indexing::Slice(0, 2)}, 1.0);
    auto [std_img, stats] = standardize(Image(t));
    EXPECT_NEAR(stats.mean, 0.5, 1e-12);
    EXPECT_NEAR(stats.std, 0.5, 1e-12);
    auto v = std_img.tensor().to(torch::kFloat64);
    EXPECT_NEAR(v.mean().item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(v.std(/*unbiased=*/false).item<double>(), 1.0, 1e-6);
    auto vals = std::get<0>(torch::_unique(v));
    EXPECT_NEAR(vals[0].item<double>(), -1.0, 1e-6);
    EXPECT_NEAR(vals[1].item<double>(), 1.0, 1e-6);
}

TEST(Standardize, MatchesTwoPassOracle) {
    auto t = testutil::uniform_tensor({8, 8}, 11);
    auto [out, stats] = standardize(Image(t));
    const float* p = t.data_ptr<float>();
    double mean = 0;
    for (int i = 0; i < 64; ++i) mean += p[i];
    mean /= 64;
    double var = 0;
    for (int i = 0; i < 64; ++i) var += (p[i] - mean) * (p[i] - mean);
    double sd = std::sqrt(var / 64);
    EXPECT_NEAR(stats.mean, mean, 1e-9);
    EXPECT_NEAR(stats.std, sd, 1e-9);
    for (int i = 0; i < 64; ++i) {
        EXPECT_NEAR(out.tensor().data_ptr<float>()[i], (p[i] - mean) / sd, 1e-5);
    }
}

TEST(Standardize, ConstantImageIsDegenerate) {
    try {
        standardize(Image(torch::full({5, 5}, 0.3)));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate standardization"), std::string::npos);
    }
}

TEST(Standardize, RoundTripWithinTolerance) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto t = testutil::uniform_tensor({6, 7, 5}, seed) * 3.0 - 1.0;
        Image img(t, ValueRange{-1, 2});
        auto [s, stats] = standardize(img);
        auto back = destandardize(s, stats);
        EXPECT_LE(testutil::max_abs_diff(back.tensor(), t), 1e-5 * 3.0);
    }
}

TEST(Destandardize, ZerosGiveMean) {
    auto out = destandardize(Image(torch::zeros({3, 4})), NormStats{0.5, 0.1});
    EXPECT_LE(testutil::max_abs_diff(out.tensor(), torch::full({3, 4}, 0.5)), 1e-7);
}

TEST(Destandardize, MatchesElementwiseOracle) {
    SeededRng rng(5);
    auto t = testutil::uniform_tensor({9, 9}, 7) * 4 - 2;
    NormStats stats{rng.normal(), 0.1 + rng.uniform()};
    auto out = destandardize(Image(t), stats);
    for (int64_t i = 0; i < t.numel(); ++i) {
        double expect = t.data_ptr<float>()[i] * stats.std + stats.mean;
        EXPECT_NEAR(out.tensor().data_ptr<float>()[i], expect, 1e-5);
    }
    EXPECT_THROW(destandardize(Image(t), NormStats{0, 0}), Error);
}

TEST(SeededRngTest, EqualSeedsGiveIdenticalStreams) {
    SeededRng a(42), b(42);
    for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
    SeededRng c(42), d(42);
    for (int i = 0; i < 10000; ++i) {
        ASSERT_EQ(c.normal(), d.normal());
        ASSERT_EQ(c.uniform(), d.uniform());
        ASSERT_EQ(c.poisson(3.5), d.poisson(3.5));
    }
}

TEST(SeededRngTest, DerivedStreamsAreStableAndDistinct) {
    SeededRng root(7);
    EXPECT_EQ(root.derive("train").seed(), SeededRng(7).derive("train").seed());
    EXPECT_NE(root.derive("train").seed(), root.derive("degrade").seed());
    EXPECT_NE(root.derive(1, 2).seed(), root.derive(2, 1).seed());
    EXPECT_EQ(root.derive(1, 2, 3).seed(), root.derive(1, 2, 3).seed());
    EXPECT_NE(SeededRng(8).derive("train").seed(), root.derive("train").seed());
}

TEST(SeededRngTest, UniformIntCoversInclusiveRange) {
    SeededRng rng(1);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) {
        auto v = rng.uniform_int(-2, 2);
        ASSERT_GE(v, -2);
        ASSERT_LE(v, 2);
        ++hits[v + 2];
    }
    for (int h : hits) EXPECT_GT(h, 800);
    EXPECT_EQ(rng.poisson(0.0), 0);
}

TEST(Warnings, SinkCapturesMessages) {
    testutil::WarningCapture capture;
    warn("hello");
    ASSERT_EQ(capture.seen().size(), 1u);
    EXPECT_EQ(capture.seen()[0], "hello");
}
