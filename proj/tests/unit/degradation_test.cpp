#include "siamdecon/degradation.hpp"
#include "siamdecon/io.hpp"
#include "siamdecon/metrics.hpp"
#include "siamdecon/phantom.hpp"
#include "siamdecon/psf.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace siamdecon;

namespace {

PSFKernel delta2d() {
    auto t = torch::zeros({5, 5});
    t[2][2] = 1.0;
    return PSFKernel(t);
}

double sample_mean(const torch::Tensor& t) { return t.to(torch::kFloat64).mean().item<double>(); }
double sample_var(const torch::Tensor& t) { return t.to(torch::kFloat64).var(/*unbiased=*/true).item<double>(); }

}  // namespace

TEST(Blur, DeltaKernelIsIdentity) {
    auto img = Image(testutil::uniform_tensor({30, 31}, 1));
    EXPECT_LE(testutil::max_abs_diff(blur(img, delta2d()).tensor(), img.tensor()), 1e-5);
}

TEST(Blur, PreservesConstants) {
    auto img = Image(torch::full({20, 20, 20}, 0.37));
    auto out = blur(img, gaussian_psf(3, 7, 1.5));
    EXPECT_LE(testutil::max_abs_diff(out.tensor(), img.tensor()), 1e-6);
}

TEST(Blur, MatchesSlidingWindowOracleWithReflectPadding) {
    auto x = testutil::uniform_tensor({32, 32}, 2);
    auto kraw = testutil::uniform_tensor({5, 5}, 3).to(torch::kFloat64);
    PSFKernel k((kraw / kraw.sum()).to(torch::kFloat32));
    auto oracle = testutil::loop_convolve(x, k.tensor(), /*reflect=*/true);
    EXPECT_LE(testutil::max_abs_diff(blur(Image(x), k).tensor(), oracle), 1e-5);
}

TEST(Blur, PreservesMean) {
    auto img = Image(testutil::uniform_tensor({64, 64}, 4));
    auto out = blur(img, gaussian_psf(2, 9, 2.0));
    double m0 = sample_mean(img.tensor()), m1 = sample_mean(out.tensor());
    EXPECT_LE(std::abs(m1 - m0) / m0, 1e-2);
}

TEST(AddPoisson, ZeroAlphaIsIdentity) {
    SeededRng rng(1);
    auto img = Image(testutil::uniform_tensor({16, 16}, 5));
    EXPECT_TRUE(torch::equal(add_poisson(img, 0.0, rng).tensor(), img.tensor()));
}

TEST(AddPoisson, ZeroImageStaysZero) {
    SeededRng rng(2);
    auto out = add_poisson(Image(torch::zeros({32, 32})), 0.001, rng);
    EXPECT_EQ(out.tensor().abs().max().item<float>(), 0.0f);
}

TEST(AddPoisson, MomentsMatchScaledCountModel) {
    SeededRng rng(3);
    const double alpha = 0.001, v = 0.5, n = 1e4;
    auto out = add_poisson(Image(torch::full({100, 100}, v)), alpha, rng).tensor();
    EXPECT_NEAR(sample_mean(out), v, 3 * std::sqrt(v * alpha / n));
    // Sample variance of n draws has sd ~ var * sqrt(2 / n).
    const double var = alpha * v;
    EXPECT_NEAR(sample_var(out), var, 5 * var * std::sqrt(2 / n));
}

TEST(AddPoisson, ClipsOutOfRangeInputWithWarning) {
    SeededRng rng(4);
    testutil::WarningCapture warnings;
    auto out = add_poisson(Image(torch::full({4, 4}, 1.5)), 0.01, rng);
    EXPECT_EQ(warnings.seen().size(), 1u);
    EXPECT_THROW(add_poisson(Image(torch::zeros({4, 4})), -1.0, rng), Error);
}

TEST(AddGaussian, ZeroSigmaIsIdentity) {
    SeededRng rng(5);
    auto img = Image(testutil::uniform_tensor({16, 16}, 6));
    EXPECT_TRUE(torch::equal(add_gaussian(img, 0.0, rng).tensor(), img.tensor()));
}

TEST(AddGaussian, SampleStdWithinChiSquareBound) {
    SeededRng rng(6);
    auto out = add_gaussian(Image(torch::zeros({100, 100})), 0.1, rng).tensor();
    double sd = std::sqrt(sample_var(out));
    EXPECT_GE(sd, 0.097);
    EXPECT_LE(sd, 0.103);
}

TEST(AddGaussian, FixedSeedIsDeterministic) {
    auto img = Image(testutil::uniform_tensor({16, 16}, 7));
    SeededRng a(9), b(9);
    EXPECT_TRUE(torch::equal(add_gaussian(img, 0.1, a).tensor(), add_gaussian(img, 0.1, b).tensor()));
}

TEST(AddSaltPepper, ZeroProbabilityIsIdentity) {
    SeededRng rng(8);
    auto img = Image(testutil::uniform_tensor({16, 16}, 8));
    EXPECT_TRUE(torch::equal(add_salt_pepper(img, 0.0, rng).tensor(), img.tensor()));
}

TEST(AddSaltPepper, FullProbabilityGivesBinaryImage) {
    SeededRng rng(9);
    auto out = add_salt_pepper(Image(torch::full({32, 32}, 0.5)), 1.0, rng).tensor();
    EXPECT_TRUE(((out == 0) | (out == 1)).all().item<bool>());
}

TEST(AddSaltPepper, CorruptedFractionWithinBinomialInterval) {
    SeededRng rng(10);
    auto out = add_salt_pepper(Image(torch::full({512, 512}, 0.5)), 0.01, rng).tensor();
    double frac = (out != 0.5).to(torch::kFloat64).mean().item<double>();
    EXPECT_GE(frac, 0.007);
    EXPECT_LE(frac, 0.013);
}

TEST(AddSaltPepper, RejectsVolumes) {
    SeededRng rng(11);
    EXPECT_THROW(add_salt_pepper(Image(torch::zeros({4, 4, 4})), 0.01, rng), Error);
}

TEST(Quantize, OneBitIsBinary) {
    auto out = quantize(Image(testutil::uniform_tensor({32, 32}, 12)), 1).tensor();
    EXPECT_TRUE(((out == 0) | (out == 1)).all().item<bool>());
}

TEST(Quantize, HalfAtTenBits) {
    auto out = quantize(Image(torch::full({1, 1}, 0.5)), 10);
    EXPECT_NEAR(out.tensor()[0][0].item<double>(), 512.0 / 1023.0, 1e-7);
}

TEST(Quantize, IdempotentWithBoundedLevelsAndLipschitz) {
    auto x = Image(testutil::uniform_tensor({128, 128}, 13) * 1.2 - 0.1);
    auto q = quantize(x, 10);
    EXPECT_TRUE(torch::equal(quantize(q, 10).tensor(), q.tensor()));
    EXPECT_LE(std::get<0>(torch::_unique(q.tensor())).numel(), 1024);
    auto y = Image(x.tensor() + 0.003);
    auto clipped_diff = testutil::max_abs_diff(x.tensor().clamp(0, 1), y.tensor().clamp(0, 1));
    EXPECT_LE(testutil::max_abs_diff(quantize(x, 10).tensor(), quantize(y, 10).tensor()),
              clipped_diff + 1.0 / 1023 + 1e-7);
    EXPECT_THROW(quantize(x, 0), Error);
}

TEST(Degrade, NoiselessDeltaSixteenBitsIsNearIdentity) {
    auto img = Image(testutil::uniform_tensor({32, 32}, 14));
    DegradeConfig cfg{0.0, 0.0, 0.0, 16, 1};
    auto out = degrade(img, delta2d(), cfg);
    EXPECT_LE(testutil::max_abs_diff(out.tensor(), img.tensor()), 1.0 / 65535);
}

TEST(Degrade, SameConfigIsBitwiseIdentical) {
    SeededRng prng(15);
    auto img = texture_phantom_2d({96, 96}, prng);
    auto cfg = DegradeConfig::defaults(2);
    cfg.seed = 77;
    auto psf = gaussian_psf(2, 17, 2.0);
    EXPECT_TRUE(torch::equal(degrade(img, psf, cfg).tensor(), degrade(img, psf, cfg).tensor()));
    cfg.seed = 78;
    EXPECT_FALSE(torch::equal(degrade(img, psf, cfg).tensor(), degrade(Image(img.tensor()), psf, DegradeConfig{}).tensor()));
}

TEST(Degrade, RejectsSaltPepperOnVolumes) {
    auto cfg = DegradeConfig::defaults(3);
    EXPECT_EQ(cfg.sp_prob, 0.0);
    cfg.sp_prob = 0.01;
    EXPECT_THROW(degrade(Image(torch::zeros({8, 8, 8})), gaussian_psf(3, 3, 1.0), cfg), Error);
}

TEST(Degrade, DefaultSettingsPsnrMatchesGoldenFile) {
    SeededRng prng(2024);
    auto clean = texture_phantom_2d({256, 256}, prng);
    auto cfg = DegradeConfig::defaults(2);
    cfg.seed = 2024;
    auto out = degrade(clean, gaussian_psf(2, 17, 2.0), cfg);
    double value = psnr(out, clean);
    EXPECT_GT(value, 15.0);
    EXPECT_LT(value, 25.0);
    std::ifstream golden(std::string(SIAMDECON_GOLDEN_DIR) + "/degrade_psnr_2d.txt");
    ASSERT_TRUE(golden) << "missing golden file; measured " << value;
    double expected = 0;
    golden >> expected;
    EXPECT_NEAR(value, expected, 1e-3);
}
