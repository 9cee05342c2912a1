#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "hv/autograd.hpp"
#include "hv/errors.hpp"
#include "test_util.hpp"

using namespace hv;
using hv::test::max_diff;
using hv::test::randn;

namespace {

Tensor run_matmul(const Tensor& a, const Tensor& b) {
    ag::Tapef tape(false);
    return ag::matmul(tape.constant(a), tape.constant(b)).value();
}

Tensor run_softmax(const Tensor& x, int axis) {
    ag::Tapef tape(false);
    return ag::softmax(tape.constant(x), axis).value();
}

Tensor run_conv(const Tensor& x, const Tensor& w, int stride, int pad) {
    ag::Tapef tape(false);
    return ag::conv2d(tape.constant(x), tape.constant(w), stride, pad).value();
}

Tensor run_group_norm(const Tensor& x, int groups, const Tensor& g, const Tensor& b) {
    ag::Tapef tape(false);
    return ag::group_norm(tape.constant(x), groups, tape.constant(g), tape.constant(b), 1e-5).value();
}

} // namespace

TEST(Tensor, SizeMatchesDims) {
    const Tensor t({2, 3, 4}, 1.5f);
    EXPECT_EQ(t.size(), 24);
    EXPECT_EQ(numel(t.dims()), t.size());
    EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, SerializationRoundTrip) {
    const Tensor t = randn(3, {2, 5, 3});
    std::stringstream ss;
    write_tensor(ss, t);
    const Tensor back = read_tensor(ss);
    EXPECT_EQ(back.dims(), t.dims());
    EXPECT_TRUE(bitwise_equal(back, t));
}

TEST(Tensor, SerializationLayout) {
    std::stringstream ss;
    write_tensor(ss, Tensor({1, 2}, std::vector<float>{1.0f, -2.0f}));
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 4u + 4u + 2 * 4u + 2 * 4u);
    EXPECT_EQ(bytes.substr(0, 4), "HVT1");
    uint32_t rank = 0;
    std::memcpy(&rank, bytes.data() + 4, 4);
    EXPECT_EQ(rank, 2u);
    float v = 0;
    std::memcpy(&v, bytes.data() + 16, 4);
    EXPECT_EQ(v, 1.0f);
}

TEST(Tensor, RejectsBadMagic) {
    std::stringstream ss("HVX1\x01\x00\x00\x00");
    EXPECT_THROW(read_tensor(ss), InputError);
}

TEST(Rng, EqualSeedsGiveIdenticalDraws) {
    Rng a(42), b(42);
    const Tensor ta = a.normal_tensor({64, 3}), tb = b.normal_tensor({64, 3});
    EXPECT_EQ(std::memcmp(ta.data(), tb.data(), sizeof(float) * 192), 0);
    Rng c(43);
    EXPECT_FALSE(bitwise_equal(ta, c.normal_tensor({64, 3})));
}

TEST(Rng, NormalMoments) {
    Rng rng(11);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, UniformIntRange) {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        const int64_t v = rng.uniform_int(3, 9);
        ASSERT_GE(v, 3);
        ASSERT_LT(v, 9);
    }
}

TEST(Rng, ForksAreIndependentAndStable) {
    const Rng root(9);
    Rng f1 = root.fork(1), f1b = root.fork(1), f2 = root.fork(2);
    const uint64_t a = f1.next_u64();
    EXPECT_EQ(a, f1b.next_u64());
    EXPECT_NE(a, f2.next_u64());
}

TEST(Matmul, Identity) {
    const Tensor id({2, 2}, std::vector<float>{1, 0, 0, 1});
    const Tensor b({2, 2}, std::vector<float>{3, 4, 5, 6});
    EXPECT_TRUE(bitwise_equal(run_matmul(id, b), b));
}

TEST(Matmul, HandComputed) {
    const Tensor r = run_matmul(Tensor({1, 2}, std::vector<float>{1, 2}), Tensor({2, 1}, std::vector<float>{3, 4}));
    ASSERT_EQ(r.size(), 1);
    EXPECT_EQ(r[0], 11.0f);
}

TEST(Matmul, MatchesTripleLoop) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor a = randn(seed, {4, 5}), b = randn(seed + 100, {5, 3});
        const Tensor c = run_matmul(a, b);
        const auto ref = hv::test::matmul_oracle(a, b);
        for (int64_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[static_cast<size_t>(i)], 1e-6);
    }
}

TEST(Matmul, BroadcastsRank2OverBatch) {
    const Tensor a = randn(1, {3, 4, 5}), w = randn(2, {5, 2});
    const Tensor c = run_matmul(a, w);
    ASSERT_EQ(c.dims(), (Shape{3, 4, 2}));
    for (int64_t b = 0; b < 3; ++b) {
        Tensor ab({4, 5});
        std::copy(a.data() + b * 20, a.data() + (b + 1) * 20, ab.data());
        const auto ref = hv::test::matmul_oracle(ab, w);
        for (int64_t i = 0; i < 8; ++i) EXPECT_NEAR(c[b * 8 + i], ref[static_cast<size_t>(i)], 1e-6);
    }
}

TEST(Matmul, ShapeErrorCarriesBothDims) {
    try {
        run_matmul(Tensor({2, 3}), Tensor({4, 2}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
    }
}

TEST(Matmul, AssociativityProperty) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const int64_t m = rng.uniform_int(1, 7), k = rng.uniform_int(1, 7), n = rng.uniform_int(1, 7),
                      p = rng.uniform_int(1, 7);
        const Tensor a = rng.normal_tensor({m, k}), b = rng.normal_tensor({k, n}), c = rng.normal_tensor({n, p});
        const Tensor left = run_matmul(run_matmul(a, b), c);
        const Tensor right = run_matmul(a, run_matmul(b, c));
        double scale = 1e-3;
        for (int64_t i = 0; i < left.size(); ++i) scale = std::max(scale, double(std::abs(left[i])));
        EXPECT_LE(max_diff(left, right) / scale, 1e-4) << "seed " << seed;
    }
}

TEST(Softmax, UniformOnEqualLogits) {
    const Tensor s = run_softmax(Tensor({3}, 0.0f), 0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 1.0 / 3.0, 1e-7);
}

TEST(Softmax, StableOnLargeLogits) {
    const Tensor s = run_softmax(Tensor({2}, std::vector<float>{1000.0f, 0.0f}), 0);
    EXPECT_TRUE(s.all_finite());
    EXPECT_EQ(s[0], 1.0f);
    EXPECT_NEAR(s[1], 0.0, 1e-30);
}

TEST(Softmax, MatchesDirectFormula) {
    const Tensor s = run_softmax(Tensor({3}, std::vector<float>{1, 2, 3}), 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], std::exp(i + 1.0) / z, 1e-7);
}

TEST(Softmax, RowsSumToOneOnAnyAxis) {
    const Tensor x = randn(4, {3, 4, 5}, 3.0);
    for (int axis = 0; axis < 3; ++axis) {
        const Tensor s = run_softmax(x, axis);
        const Shape& d = x.dims();
        const int64_t inner = axis == 2 ? 1 : (axis == 1 ? d[2] : d[1] * d[2]);
        const int64_t len = d[static_cast<size_t>(axis)];
        const int64_t outer = s.size() / (inner * len);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                double total = 0;
                for (int64_t k = 0; k < len; ++k) {
                    const float v = s[(o * len + k) * inner + i];
                    EXPECT_GT(v, 0.0f);
                    total += v;
                }
                EXPECT_NEAR(total, 1.0, 1e-6);
            }
    }
    EXPECT_THROW(run_softmax(x, 3), ShapeError);
}

TEST(Conv2d, AllOnesKernelSums) {
    const Tensor x = randn(2, {1, 1, 4, 4});
    const Tensor r = run_conv(x, Tensor({1, 1, 4, 4}, 1.0f), 2, 0);
    ASSERT_EQ(r.dims(), (Shape{1, 1, 1, 1}));
    double s = 0;
    for (int64_t i = 0; i < 16; ++i) s += x[i];
    EXPECT_NEAR(r[0], s, 1e-6);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    const Tensor x = randn(3, {2, 1, 5, 6});
    Tensor k({1, 1, 3, 3});
    k[4] = 1.0f;
    EXPECT_TRUE(bitwise_equal(run_conv(x, k, 1, 1), x));
}

TEST(Conv2d, MatchesSixLoopOracle) {
    struct Case { int64_t b, c, h, w, o, k; int s, p; };
    for (const Case& cs : {Case{2, 3, 7, 6, 4, 3, 1, 1}, Case{1, 2, 8, 8, 3, 4, 2, 1}, Case{2, 5, 6, 5, 2, 1, 1, 0}}) {
        const Tensor x = randn(cs.h, {cs.b, cs.c, cs.h, cs.w});
        const Tensor w = randn(cs.k + 50, {cs.o, cs.c, cs.k, cs.k});
        const Tensor r = run_conv(x, w, cs.s, cs.p);
        EXPECT_EQ(r.dim(2), (cs.h + 2 * cs.p - cs.k) / cs.s + 1);
        EXPECT_EQ(r.dim(3), (cs.w + 2 * cs.p - cs.k) / cs.s + 1);
        const auto ref = hv::test::conv_oracle(x, w, cs.s, cs.p);
        ASSERT_EQ(static_cast<size_t>(r.size()), ref.size());
        for (int64_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], ref[static_cast<size_t>(i)], 1e-5);
    }
}

TEST(Conv2d, ZeroSizeOutputIsShapeError) {
    EXPECT_THROW(run_conv(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), ShapeError);
    EXPECT_THROW(run_conv(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), 1, 1), ShapeError);
}

TEST(GroupNorm, ConstantInputGivesZeros) {
    const Tensor r = run_group_norm(Tensor({2, 4, 3, 3}, 2.5f), 2, Tensor({4}, 1.0f), Tensor({4}, 0.0f));
    for (int64_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], 0.0f);
}

TEST(GroupNorm, ZeroGammaGivesBeta) {
    const Tensor beta({4}, std::vector<float>{0.5f, -1.0f, 2.0f, 3.0f});
    const Tensor r = run_group_norm(randn(6, {2, 4, 3, 3}), 2, Tensor({4}, 0.0f), beta);
    for (int64_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], beta[(i / 9) % 4]);
}

TEST(GroupNorm, MomentsPerGroup) {
    const Tensor x = randn(7, {2, 8, 4, 5}, 3.0);
    const Tensor r = run_group_norm(x, 4, Tensor({8}, 1.0f), Tensor({8}, 0.0f));
    const int64_t group = 2 * 20;
    for (int64_t g = 0; g < 2 * 4; ++g) {
        double s = 0, s2 = 0;
        for (int64_t i = 0; i < group; ++i) s += r[g * group + i];
        const double mean = s / group;
        for (int64_t i = 0; i < group; ++i) s2 += (r[g * group + i] - mean) * (r[g * group + i] - mean);
        EXPECT_LE(std::abs(mean), 1e-5);
        EXPECT_NEAR(s2 / group, 1.0, 1e-3);
    }
}

TEST(GroupNorm, RejectsIndivisibleGroups) {
    EXPECT_THROW(run_group_norm(Tensor({1, 6, 2, 2}), 4, Tensor({6}, 1.0f), Tensor({6}, 0.0f)), ShapeError);
}

TEST(Finiteness, NanInputSurfacesAsNumericError) {
    Tensor x({3}, 1.0f);
    x[1] = std::numeric_limits<float>::quiet_NaN();
    ag::Tapef tape;
    const auto v = tape.constant(Tensor({3}, 1.0f));
    EXPECT_THROW(ag::add(v, tape.constant(x)), NumericError);
    Tensor big({1}, 3e38f);
    EXPECT_THROW(ag::scale(tape.constant(big), 10.0), NumericError);
}
