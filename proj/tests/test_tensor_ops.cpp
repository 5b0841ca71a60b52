#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lcs/conv.hpp"
#include "lcs/ops.hpp"
#include "oracles.hpp"

using namespace lcs;
using lcs::testing::random_conv;
using lcs::testing::random_tensor;
using lcs::testing::reference_conv;

TEST(Tensor, ShapeAndIndexing)
{
    Tensor<float> t(Shape{2, 3, 4, 5}, 1.5f);
    EXPECT_EQ(t.size(), 120u);
    t(1, 2, 3, 4) = 7.0f;
    EXPECT_EQ(t.data().back(), 7.0f);
    EXPECT_EQ(t.plane(1, 2)[19], 7.0f);
    EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Conv2d, MatchesDirectSummationBitwise)
{
    std::mt19937 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        std::uniform_int_distribution<int> groups_d(1, 3), ch_d(1, 5), k_d(0, 2), s_d(1, 2), hw_d(3, 90);
        const std::int64_t groups = groups_d(rng);
        const std::int64_t k = 1 + 2 * k_d(rng);
        ConvGeometry g{groups * ch_d(rng), groups * ch_d(rng), k, k, s_d(rng), std::uniform_int_distribution<int>(0, static_cast<int>(k))(rng), groups};
        const Shape s{1 + trial % 2, g.in_channels, hw_d(rng) + k, hw_d(rng) + k};
        const auto x = random_tensor<float>(s, 100 + static_cast<std::uint64_t>(trial));
        const auto w = random_conv<float>(g, 200 + static_cast<std::uint64_t>(trial));
        EXPECT_EQ(conv2d(x, w), reference_conv(x, w)) << "trial " << trial;
    }
}

TEST(Conv2d, DoubleAndRectangularKernels)
{
    ConvGeometry g{5, 4, 3, 5, 1, 2, 1};
    const auto x = random_tensor<double>(Shape{1, 4, 37, 81}, 1);
    const auto w = random_conv<double>(g, 2);
    EXPECT_EQ(conv2d(x, w), reference_conv(x, w));
}

TEST(Conv2d, DiracKernelIsIdentity)
{
    for (std::int64_t k : {1, 3, 5}) {
        ConvGeometry g{6, 6, k, k, 1, (k - 1) / 2, 1};
        auto w = ConvWeights<float>::zeros(g);
        for (std::int64_t c = 0; c < 6; ++c)
            w.at(c, c, k / 2, k / 2) = 1.0f;
        const auto x = random_tensor<float>(Shape{2, 6, 29, 70}, 3);
        EXPECT_EQ(conv2d(x, w), x);
    }
}

TEST(Conv2d, LinearWithoutBias)
{
    ConvGeometry g{8, 5, 3, 3, 1, 1, 1};
    auto w = random_conv<float>(g, 4);
    std::fill(w.bias.begin(), w.bias.end(), 0.0f);
    const auto x = random_tensor<float>(Shape{1, 5, 20, 40}, 5, -10, 10);
    const auto y = random_tensor<float>(Shape{1, 5, 20, 40}, 6, -10, 10);
    const float a = 0.75f, b = -1.25f;
    Tensor<float> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.data()[i] = a * x.data()[i] + b * y.data()[i];
    const auto lhs = conv2d(mix, w);
    const auto cx = conv2d(x, w), cy = conv2d(y, w);
    // relative to the output magnitude; single outputs can cancel to ~0
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double rhs = a * cx.data()[i] + b * cy.data()[i];
        worst = std::max(worst, std::abs(lhs.data()[i] - rhs));
        scale = std::max(scale, std::abs(rhs));
    }
    EXPECT_LE(worst, 1e-5 * scale);
}

TEST(Conv2d, DeterministicAcrossThreadCounts)
{
    ConvGeometry g{16, 12, 3, 3, 1, 1, 1};
    const auto x = random_tensor<float>(Shape{2, 12, 50, 97}, 8);
    const auto w = random_conv<float>(g, 9);
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto one = conv2d(x, w);
    omp_set_num_threads(4);
    const auto four = conv2d(x, w);
    omp_set_num_threads(saved);
    EXPECT_EQ(one, four);
#endif
    EXPECT_EQ(conv2d(x, w), conv2d(x, w));
}

TEST(Conv2d, Errors)
{
    ConvGeometry g{4, 3, 3, 3, 1, 0, 1};
    const auto w = random_conv<float>(g, 1);
    EXPECT_THROW(conv2d(Tensor<float>(Shape{1, 2, 8, 8}), w), ShapeError);
    EXPECT_THROW(conv2d(Tensor<float>(Shape{1, 3, 2, 8}), w), ShapeError);
    EXPECT_THROW((ConvGeometry{4, 3, 3, 3, 1, 0, 2}.validate()), ShapeError);
    EXPECT_THROW((ConvGeometry{4, 4, 3, 3, 0, 0, 1}.validate()), ShapeError);
}

TEST(Conv2d, BiasPaddedBorder)
{
    ConvGeometry g{3, 2, 3, 3, 1, 1, 1};
    const auto w = random_conv<float>(g, 11);
    const auto x = random_tensor<float>(Shape{1, 2, 9, 11}, 12);
    const std::vector<float> pad = {0.5f, -2.0f};
    // Oracle: explicit constant pad, then a valid convolution.
    Tensor<float> padded(Shape{1, 2, 11, 13});
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 0; y < 11; ++y)
            for (std::int64_t xx = 0; xx < 13; ++xx) {
                const bool inside = y >= 1 && y <= 9 && xx >= 1 && xx <= 11;
                padded(0, c, y, xx) = inside ? x(0, c, y - 1, xx - 1) : pad[static_cast<std::size_t>(c)];
            }
    ConvWeights<float> valid = w;
    valid.geom.padding = 0;
    EXPECT_EQ(conv2d_bias_padded(x, w, std::span<const float>(pad)), reference_conv(padded, valid));
}

TEST(PixelShuffle, ChannelOrderAndRoundTrip)
{
    Tensor<float> x(Shape{1, 8, 2, 3});
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data()[i] = static_cast<float>(i);
    const auto y = pixel_shuffle(x, 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 4, 6}));
    for (std::int64_t o = 0; o < 2; ++o)
        for (std::int64_t i = 0; i < 2; ++i)
            for (std::int64_t j = 0; j < 2; ++j)
                EXPECT_EQ(y(0, o, 2 + i, 4 + j), x(0, o * 4 + i * 2 + j, 1, 2));
    EXPECT_EQ(pixel_unshuffle(y, 2), x);

    auto a = x.storage(), b = y.storage();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_THROW(pixel_shuffle(Tensor<float>(Shape{1, 3, 2, 2}), 2), ShapeError);
    EXPECT_THROW(pixel_unshuffle(Tensor<float>(Shape{1, 3, 3, 2}), 2), ShapeError);
}

TEST(MaxPool, WindowMaximum)
{
    const auto x = random_tensor<float>(Shape{1, 2, 23, 31}, 13);
    const auto y = max_pool2d(x, 7, 3);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 9}));
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t oy = 0; oy < 6; ++oy)
            for (std::int64_t ox = 0; ox < 9; ++ox) {
                float m = x(0, c, oy * 3, ox * 3);
                for (std::int64_t dy = 0; dy < 7; ++dy)
                    for (std::int64_t dx = 0; dx < 7; ++dx)
                        m = std::max(m, x(0, c, oy * 3 + dy, ox * 3 + dx));
                EXPECT_EQ(y(0, c, oy, ox), m);
            }
    EXPECT_THROW(max_pool2d(Tensor<float>(Shape{1, 1, 6, 20}), 7, 3), ShapeError);
}

TEST(Bilinear, IdentityConstantAndHalfPixel)
{
    const auto x = random_tensor<float>(Shape{1, 2, 7, 9}, 14);
    EXPECT_EQ(interpolate_bilinear(x, 7, 9), x);

    Tensor<float> c(Shape{1, 1, 3, 4}, 0.3f);
    const auto up = interpolate_bilinear(c, 17, 11);
    for (float v : up.data())
        EXPECT_EQ(v, 0.3f);

    // 1-D ramp 0, 1 upsampled x2: centers at -0.25, 0.25, 0.75, 1.25 (clamped).
    Tensor<double> r(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
    const auto u = interpolate_bilinear(r, 1, 4);
    EXPECT_DOUBLE_EQ(u(0, 0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(u(0, 0, 0, 1), 0.25);
    EXPECT_DOUBLE_EQ(u(0, 0, 0, 2), 0.75);
    EXPECT_DOUBLE_EQ(u(0, 0, 0, 3), 1.0);
}

TEST(Activations, ReluSigmoidClamp)
{
    Tensor<float> t(Shape{1, 1, 1, 5}, std::vector<float>{-2.0f, -0.0f, 0.0f, 3.0f, -1000.0f});
    const auto r = apply_activation(t, Activation::relu);
    EXPECT_EQ(r.storage(), (std::vector<float>{0.0f, 0.0f, 0.0f, 3.0f, 0.0f}));
    const auto s = apply_activation(t, Activation::sigmoid);
    EXPECT_FLOAT_EQ(s.data()[2], 0.5f);
    EXPECT_NEAR(s.data()[0], 1.0 / (1.0 + std::exp(2.0)), 1e-7);
    EXPECT_EQ(s.data()[4], 0.0f);
    Tensor<float> big(Shape{1, 1, 1, 1}, 1000.0f);
    EXPECT_EQ(apply_activation(big, Activation::sigmoid).data()[0], 1.0f);

    clamp_inplace(t, 0.0f, 1.0f);
    EXPECT_EQ(t.storage(), (std::vector<float>{0.0f, -0.0f, 0.0f, 1.0f, 0.0f}));
}

TEST(Elementwise, AddMulAndShapeCheck)
{
    Tensor<float> a(Shape{1, 1, 1, 3}, std::vector<float>{1, 2, 3});
    Tensor<float> b(Shape{1, 1, 1, 3}, std::vector<float>{4, 5, 6});
    EXPECT_EQ(elementwise(a, b, Elementwise::add).storage(), (std::vector<float>{5, 7, 9}));
    EXPECT_EQ(elementwise(a, b, Elementwise::mul).storage(), (std::vector<float>{4, 10, 18}));
    EXPECT_THROW(elementwise(a, Tensor<float>(Shape{1, 1, 3, 1}), Elementwise::add), ShapeError);
}
