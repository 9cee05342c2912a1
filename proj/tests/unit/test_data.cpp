#include <gtest/gtest.h>

#include <cmath>

#include "hv/data.hpp"
#include "hv/errors.hpp"
#include "test_util.hpp"

using namespace hv;
using hv::test::max_diff;

namespace {

bool near_color(const Tensor& img, int64_t y, int64_t x, const std::array<float, 3>& rgb, float tol = 1e-6f) {
    const int64_t H = img.dim(1), W = img.dim(2);
    for (int c = 0; c < 3; ++c)
        if (std::abs(img[(c * H + y) * W + x] - rgb[static_cast<size_t>(c)]) > tol) return false;
    return true;
}

} // namespace

TEST(Synth, GoldenHash) {
    const auto ds = synth_dataset(1, Rng(42), SynthConfig{});
    EXPECT_EQ(hex64(sample_hash(ds[0])), "1ecaed20a4831c26");
}

TEST(Synth, ShapesPromptAndPose) {
    for (int garments : {1, 2}) {
        SynthConfig cfg;
        cfg.garments = garments;
        const auto ds = synth_dataset(20, Rng(3), cfg);
        for (const Sample& s : ds) {
            EXPECT_EQ(s.person.dims(), (Shape{3, 64, 48}));
            ASSERT_EQ(static_cast<int>(s.garments.size()), garments);
            for (const Tensor& g : s.garments) EXPECT_EQ(g.dims(), (Shape{3, 64, 48}));
            EXPECT_NE(s.upper_color, s.lower_color);
            EXPECT_EQ(s.prompt[0], s.upper_color);
            EXPECT_EQ(s.prompt[1], s.lower_color);
            EXPECT_EQ(s.prompt[2], kMotifBase + static_cast<int64_t>(s.motif));
            EXPECT_EQ(s.prompt[3], kCategoryBase + (garments - 1));
            EXPECT_LT(s.keypoints.get("l_shoulder").y, s.keypoints.get("l_hip").y);
            EXPECT_LT(s.keypoints.get("r_shoulder").y, s.keypoints.get("r_hip").y);
            EXPECT_NO_THROW(s.keypoints.validate(64, 48));
            EXPECT_NO_THROW(build_agnostic_mask(s.keypoints, 64, 48));
        }
    }
}

TEST(Synth, PersonWearsTheUpperGarmentInTheTorso) {
    const auto ds = synth_dataset(20, Rng(5), SynthConfig{});
    for (const Sample& s : ds) {
        const BBox tb = torso_box(s.keypoints);
        const auto base = palette_color(s.upper_color);
        const std::array<float, 3> accent{0.5f * base[0], 0.5f * base[1], 0.5f * base[2]};
        int64_t hit = 0, total = 0;
        for (int64_t y = tb.top; y < tb.bottom; ++y)
            for (int64_t x = tb.left; x < tb.right; ++x) {
                ++total;
                hit += near_color(s.person, y, x, base) || near_color(s.person, y, x, accent);
            }
        EXPECT_GT(static_cast<double>(hit) / static_cast<double>(total), 0.5);
    }
}

TEST(Synth, PrefixStable) {
    const auto a = synth_dataset(3, Rng(9), SynthConfig{});
    const auto b = synth_dataset(7, Rng(9), SynthConfig{});
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(sample_hash(a[i]), sample_hash(b[i]));
    EXPECT_NE(sample_hash(a[0]), sample_hash(a[1]));
}

TEST(Synth, BadConfigIsInputError) {
    SynthConfig cfg;
    cfg.garments = 3;
    EXPECT_THROW(synth_dataset(1, Rng(1), cfg), InputError);
    EXPECT_THROW(synth_dataset(0, Rng(1), SynthConfig{}), InputError);
    EXPECT_THROW(palette_color(8), InputError);
}

TEST(Augment, FlipTwiceIsIdentity) {
    const auto ds = synth_dataset(5, Rng(11), SynthConfig{2});
    AugmentDraw d;
    d.flip = true;
    for (const Sample& s : ds) {
        const Sample back = apply_augment(apply_augment(s, d), d);
        EXPECT_TRUE(bitwise_equal(back.person, s.person));
        for (size_t i = 0; i < s.garments.size(); ++i) EXPECT_TRUE(bitwise_equal(back.garments[i], s.garments[i]));
        // W - (W - x) can differ from x in the last bit
        for (const auto& [name, j] : s.keypoints.joints) {
            EXPECT_NEAR(back.keypoints.get(name).x, j.x, 1e-12) << name;
            EXPECT_EQ(back.keypoints.get(name).y, j.y) << name;
        }
    }
}

TEST(Augment, FlipMirrorsPixelsAndKeypoints) {
    const Sample s = synth_dataset(1, Rng(12), SynthConfig{})[0];
    AugmentDraw d;
    d.flip = true;
    const Sample f = apply_augment(s, d);
    const int64_t H = 64, W = 48;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                ASSERT_EQ(f.person[(c * H + y) * W + x], s.person[(c * H + y) * W + (W - 1 - x)]);
    EXPECT_DOUBLE_EQ(f.keypoints.get("l_hip").x, W - s.keypoints.get("r_hip").x);
    EXPECT_DOUBLE_EQ(f.keypoints.get("l_hip").y, s.keypoints.get("r_hip").y);
}

TEST(Augment, AllProbabilitiesZeroIsIdentity) {
    AugmentPolicy p;
    p.flip_p = p.pad_p = p.hue_p = p.contrast_p = 0.0;
    Rng rng(13);
    const auto ds = synth_dataset(5, Rng(14), SynthConfig{2});
    for (const Sample& s : ds) EXPECT_EQ(sample_hash(augment(s, p, rng).sample), sample_hash(s));
}

TEST(Augment, DrawStatisticsOverTenThousand) {
    Rng rng(2025);
    const AugmentPolicy p;
    int flips = 0, pads = 0, hues = 0, contrasts = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const AugmentDraw d = draw_augment(rng, p);
        flips += d.flip;
        pads += d.pad;
        hues += d.hue;
        contrasts += d.contrast;
        EXPECT_GE(d.hue_deg, -5.0);
        EXPECT_LE(d.hue_deg, 5.0);
        EXPECT_GE(d.pad_scale, 0.9);
        EXPECT_LE(d.pad_scale, 1.0);
        EXPECT_GE(d.contrast_factor, 0.8);
        EXPECT_LE(d.contrast_factor, 1.2);
        if (!d.hue) { EXPECT_EQ(d.hue_deg, 0.0); }
    }
    for (int k : {flips, pads, hues, contrasts}) EXPECT_NEAR(k / double(n), 0.5, 0.02);
}

TEST(Augment, PreservesDimsAndKeypointBounds) {
    Rng rng(15);
    const auto ds = synth_dataset(30, Rng(16), SynthConfig{2});
    for (const Sample& s : ds) {
        const Augmented a = augment(s, AugmentPolicy{}, rng);
        EXPECT_EQ(a.sample.person.dims(), s.person.dims());
        for (const Tensor& g : a.sample.garments) EXPECT_EQ(g.dims(), s.person.dims());
        EXPECT_NO_THROW(a.sample.keypoints.validate(64, 48));
        for (int64_t i = 0; i < a.sample.person.size(); ++i) {
            ASSERT_GE(a.sample.person[i], 0.0f);
            ASSERT_LE(a.sample.person[i], 1.0f);
        }
    }
}

TEST(Augment, HueRotationOracles) {
    Rng rng(17);
    const Tensor img = rng.uniform_tensor({3, 4, 5}, 0.0, 1.0);
    EXPECT_LE(max_diff(hue_rotate(img, 0.0), img), 1e-6);
    // a third of a turn about the grey axis cycles the channels R -> G -> B
    const Tensor r = hue_rotate(img, 120.0);
    const int64_t HW = 20;
    for (int64_t i = 0; i < HW; ++i) {
        EXPECT_NEAR(r[1 * HW + i], img[0 * HW + i], 1e-5);
        EXPECT_NEAR(r[2 * HW + i], img[1 * HW + i], 1e-5);
        EXPECT_NEAR(r[0 * HW + i], img[2 * HW + i], 1e-5);
    }
    Tensor grey({3, 2, 2}, 0.4f);
    EXPECT_LE(max_diff(hue_rotate(grey, 4.0), grey), 1e-6);
}

TEST(Augment, ContrastAndPadOracles) {
    Rng rng(18);
    const Tensor img = rng.uniform_tensor({3, 6, 6}, 0.2, 0.8);
    EXPECT_LE(max_diff(adjust_contrast(img, 1.0), img), 1e-6);
    const Tensor flat = adjust_contrast(img, 0.0);
    for (int64_t i = 1; i < flat.size(); ++i) EXPECT_EQ(flat[i], flat[0]);
    EXPECT_TRUE(bitwise_equal(pad_resize(img, 1.0, 0.0f), img));
    const Tensor small = pad_resize(img, 0.5, 9.0f);
    EXPECT_EQ(small[0], 9.0f);
    EXPECT_NE(small[(0 * 6 + 3) * 6 + 3], 9.0f);
}
