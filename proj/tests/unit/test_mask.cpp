#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hv/errors.hpp"
#include "hv/image_io.hpp"
#include "hv/mask.hpp"
#include "test_util.hpp"

using namespace hv;

namespace {

constexpr int64_t kH = 64, kW = 48;

// Symmetric T-pose about x = W/2.
PoseKeypoints t_pose() {
    PoseKeypoints kp;
    kp.set("neck", 24, 12);
    kp.set("l_shoulder", 15, 14);
    kp.set("r_shoulder", 33, 14);
    kp.set("l_elbow", 7, 15);
    kp.set("r_elbow", 41, 15);
    kp.set("l_wrist", 2, 16);
    kp.set("r_wrist", 46, 16);
    kp.set("l_hip", 17, 36);
    kp.set("r_hip", 31, 36);
    return kp;
}

PoseKeypoints random_pose(Rng& rng) {
    PoseKeypoints kp;
    const double cx = rng.uniform(18, 30), sw = rng.uniform(12, 20), top = rng.uniform(8, 16), torso = rng.uniform(16, 26);
    kp.set("l_shoulder", cx - sw / 2, top);
    kp.set("r_shoulder", cx + sw / 2, top + rng.uniform(-1, 1));
    kp.set("l_hip", cx - sw / 3, top + torso);
    kp.set("r_hip", cx + sw / 3, top + torso);
    kp.set("l_elbow", cx - sw / 2 - rng.uniform(0, 5), top + rng.uniform(5, 12));
    kp.set("r_elbow", cx + sw / 2 + rng.uniform(0, 5), top + rng.uniform(5, 12));
    kp.set("l_wrist", cx - sw / 2 - rng.uniform(0, 6), top + rng.uniform(12, 22));
    kp.set("r_wrist", cx + sw / 2 + rng.uniform(0, 6), top + rng.uniform(12, 22));
    return kp;
}

bool binary(const Tensor& m) {
    for (int64_t i = 0; i < m.size(); ++i)
        if (m[i] != 0.0f && m[i] != 1.0f) return false;
    return true;
}

bool contains(const Tensor& outer, const Tensor& inner) {
    for (int64_t i = 0; i < inner.size(); ++i)
        if (inner[i] == 1.0f && outer[i] != 1.0f) return false;
    return true;
}

// Box of height h and width w with its top-left at (top, left).
AgnosticMask box_mask(int64_t top, int64_t left, int64_t h, int64_t w, int64_t H = 300, int64_t W = 200) {
    Tensor m({1, H, W});
    for (int64_t y = top; y < top + h; ++y)
        for (int64_t x = left; x < left + w; ++x) m[y * W + x] = 1.0f;
    return make_mask(std::move(m));
}

} // namespace

TEST(AgnosticMask, SymmetricPoseGivesMirrorSymmetricMask) {
    const AgnosticMask m = build_agnostic_mask(t_pose(), kH, kW);
    EXPECT_FALSE(m.empty());
    int64_t mismatches = 0;
    for (int64_t y = 0; y < kH; ++y)
        for (int64_t x = 0; x < kW; ++x) mismatches += m.mask[y * kW + x] != m.mask[y * kW + (kW - 1 - x)];
    EXPECT_EQ(mismatches, 0);
    EXPECT_EQ(m.bbox.left, kW - m.bbox.right);
}

TEST(AgnosticMask, CoversTorsoAndArms) {
    const PoseKeypoints kp = t_pose();
    const AgnosticMask m = build_agnostic_mask(kp, kH, kW);
    for (const auto& name : {"l_shoulder", "r_shoulder", "l_elbow", "r_wrist", "l_hip"}) {
        const Joint& j = kp.get(name);
        EXPECT_EQ(m.mask[static_cast<int64_t>(j.y) * kW + static_cast<int64_t>(j.x)], 1.0f) << name;
    }
    EXPECT_EQ(m.mask[25 * kW + 24], 1.0f);
    EXPECT_EQ(m.mask[60 * kW + 24], 0.0f);
    EXPECT_EQ(m.mask[2 * kW + 24], 0.0f);
}

TEST(AgnosticMask, BboxIsTight) {
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        const AgnosticMask m = build_agnostic_mask(random_pose(rng), kH, kW);
        EXPECT_EQ(mask_bbox(m.mask), m.bbox);
        auto row_has = [&](int64_t y) {
            for (int64_t x = 0; x < kW; ++x)
                if (m.mask[y * kW + x] == 1.0f) return true;
            return false;
        };
        EXPECT_TRUE(row_has(m.bbox.top));
        EXPECT_TRUE(row_has(m.bbox.bottom - 1));
        if (m.bbox.top > 0) { EXPECT_FALSE(row_has(m.bbox.top - 1)); }
        if (m.bbox.bottom < kH) { EXPECT_FALSE(row_has(m.bbox.bottom)); }
    }
}

TEST(AgnosticMask, ParsingFreeAcrossPersonImages) {
    // The builder sees keypoints only; masking any image touches exactly the
    // mask pixels.
    const PoseKeypoints kp = t_pose();
    const AgnosticMask ref = build_agnostic_mask(kp, kH, kW);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Tensor img = rng.uniform_tensor({3, kH, kW}, 0.0, 1.0);
        const AgnosticMask m = build_agnostic_mask(kp, kH, kW);
        EXPECT_TRUE(bitwise_equal(m.mask, ref.mask));
        const Tensor out = apply_mask(img, m);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < kH * kW; ++i)
                EXPECT_EQ(out[c * kH * kW + i], m.mask[i] == 1.0f ? 0.5f : img[c * kH * kW + i]);
    }
}

TEST(AgnosticMask, MissingJointsAreInsufficientPose) {
    PoseKeypoints kp = t_pose();
    kp.set("l_hip", 0, 0, 0.0);
    try {
        build_agnostic_mask(kp, kH, kW);
        FAIL();
    } catch (const InsufficientPoseError& e) {
        EXPECT_NE(std::string(e.what()).find("insufficient pose"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("l_hip"), std::string::npos);
    }
    PoseKeypoints no_arms = t_pose();
    no_arms.joints.erase("l_elbow");
    no_arms.joints.erase("l_wrist");
    EXPECT_NO_THROW(build_agnostic_mask(no_arms, kH, kW));
}

TEST(AgnosticMask, OutOfBoundsJointIsInputError) {
    PoseKeypoints kp = t_pose();
    kp.set("r_wrist", 60, 16);
    EXPECT_THROW(build_agnostic_mask(kp, kH, kW), InputError);
}

TEST(AgnosticMask, GoldenHash) {
    const AgnosticMask m = build_agnostic_mask(t_pose(), kH, kW);
    EXPECT_EQ(hex64(content_hash(m.mask)), "bbaa9d2603882abe");
    EXPECT_EQ(m.bbox, (BBox{10, 0, 39, 48}));
}

TEST(Keypoints, JsonRoundTripAndErrors) {
    const PoseKeypoints kp = t_pose();
    const PoseKeypoints back = parse_keypoints(keypoints_to_json(kp));
    for (const char* name : kJointNames) {
        EXPECT_EQ(back.get(name).x, kp.get(name).x) << name;
        EXPECT_EQ(back.get(name).y, kp.get(name).y) << name;
        EXPECT_EQ(back.get(name).conf, kp.get(name).conf) << name;
    }
    EXPECT_THROW(parse_keypoints("{"), InputError);
    EXPECT_THROW(parse_keypoints(R"({"joints": {"neck": [1, 2]}})"), InputError);
    EXPECT_THROW(parse_keypoints(R"({"bones": {}})"), InputError);
    const PoseKeypoints parsed = parse_keypoints(R"({"joints": {"l_shoulder": [1.5, 2.5, 0.9]}})");
    EXPECT_EQ(parsed.get("l_shoulder").x, 1.5);
    EXPECT_FALSE(parsed.has("r_shoulder"));
}

TEST(Keypoints, MissingFileIsInsufficientPose) {
    try {
        load_keypoints("/nonexistent/pose.json");
        FAIL();
    } catch (const InsufficientPoseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("insufficient pose"), std::string::npos);
        EXPECT_NE(msg.find("/nonexistent/pose.json"), std::string::npos);
    }
}

TEST(ElongateTrain, ZeroProbabilityIsIdentity) {
    const AgnosticMask m = build_agnostic_mask(t_pose(), kH, kW);
    Rng rng(1);
    ElongationPolicy p;
    p.probability = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Elongation e = elongate_train(m, rng, p);
        EXPECT_FALSE(e.triggered);
        EXPECT_TRUE(bitwise_equal(e.mask.mask, m.mask));
    }
}

TEST(ElongateTrain, FactorOneAndAHalfOnHundredRows) {
    const AgnosticMask m = box_mask(20, 50, 100, 40);
    ElongationPolicy p;
    p.probability = 1.0;
    p.factor_lo = p.factor_hi = 1.5;
    Rng rng(2);
    const Elongation e = elongate_train(m, rng, p);
    EXPECT_TRUE(e.triggered);
    EXPECT_EQ(e.mask.bbox.height(), 150);
    EXPECT_EQ(e.mask.bbox.top, 20);
    EXPECT_EQ(e.mask.bbox.left, 50);
    EXPECT_EQ(e.mask.bbox.width(), 40);
}

TEST(ElongateTrain, ClipsAtImageBottom) {
    const AgnosticMask m = box_mask(180, 50, 100, 40);
    ElongationPolicy p;
    p.probability = 1.0;
    Rng rng(3);
    const Elongation e = elongate_train(m, rng, p);
    EXPECT_EQ(e.mask.bbox.bottom, 300);
}

TEST(ElongateTrain, StatisticsOverTenThousandDraws) {
    const AgnosticMask m = build_agnostic_mask(t_pose(), kH, kW);
    Rng rng(2024);
    int triggered = 0;
    double factor_sum = 0;
    for (int i = 0; i < 10000; ++i) {
        const Elongation e = elongate_train(m, rng);
        if (e.triggered) {
            ++triggered;
            factor_sum += e.factor;
            EXPECT_GE(e.factor, 1.2);
            EXPECT_LE(e.factor, 1.5);
        }
    }
    EXPECT_NEAR(triggered / 10000.0, 0.5, 0.02);
    EXPECT_NEAR(factor_sum / triggered, 1.35, 0.01);
}

TEST(ElongateTrain, SupersetAndBinaryProperty) {
    Rng rng(7);
    for (int k = 0; k < 200; ++k) {
        const AgnosticMask m = build_agnostic_mask(random_pose(rng), kH, kW);
        const Elongation e = elongate_train(m, rng);
        EXPECT_TRUE(contains(e.mask.mask, m.mask));
        EXPECT_TRUE(binary(e.mask.mask));
        EXPECT_EQ(mask_bbox(e.mask.mask), e.mask.bbox);
        const AgnosticMask inf = elongate_infer(m, 10.0, rng.uniform(5.0, 30.0));
        EXPECT_TRUE(contains(inf.mask, m.mask));
        EXPECT_TRUE(binary(inf.mask));
    }
}

TEST(ElongateTrain, EmptyMaskIsAnError) {
    Rng rng(1);
    EXPECT_THROW(elongate_train(make_mask(Tensor({1, 10, 10})), rng), InputError);
}

TEST(ElongateInfer, SquareGarmentLeavesMaskUnchanged) {
    const AgnosticMask m = box_mask(20, 50, 60, 40);
    EXPECT_TRUE(bitwise_equal(elongate_infer(m, 100, 100).mask, m.mask));
}

TEST(ElongateInfer, ThresholdIsStrict) {
    const AgnosticMask m = box_mask(20, 50, 40, 40);
    EXPECT_TRUE(bitwise_equal(elongate_infer(m, 100, 120).mask, m.mask));
    EXPECT_FALSE(bitwise_equal(elongate_infer(m, 100, 121).mask, m.mask));
}

TEST(ElongateInfer, LongGarmentSetsMaskAspect) {
    const AgnosticMask m = box_mask(20, 50, 50, 40);
    const AgnosticMask r = elongate_infer(m, 200, 300);
    EXPECT_LE(std::abs(r.bbox.height() - 1.5 * r.bbox.width()), 1.0);
    EXPECT_EQ(r.bbox.height(), 60);
    EXPECT_EQ(r.bbox.top, m.bbox.top);
}

TEST(ElongateInfer, AspectWithinOnePixelOverRandomCases) {
    Rng rng(11);
    for (int k = 0; k < 200; ++k) {
        const int64_t w = rng.uniform_int(10, 60), h = rng.uniform_int(10, 40);
        const AgnosticMask m = box_mask(rng.uniform_int(0, 30), rng.uniform_int(0, 100), h, w);
        const double gw = rng.uniform(20, 200), gh = rng.uniform(20, 400);
        const double sigma = gh / gw;
        const AgnosticMask r = elongate_infer(m, gw, gh);
        if (sigma <= 1.2) {
            EXPECT_TRUE(bitwise_equal(r.mask, m.mask));
            continue;
        }
        const double target = std::max<double>(double(h), sigma * double(w));
        if (r.bbox.bottom < 300) { EXPECT_LE(std::abs(double(r.bbox.height()) - target), 1.0); }
    }
}

TEST(ElongateInfer, Idempotent) {
    Rng rng(12);
    for (int k = 0; k < 50; ++k) {
        const AgnosticMask m = build_agnostic_mask(random_pose(rng), kH, kW);
        const double gw = rng.uniform(10, 40), gh = rng.uniform(10, 60);
        const AgnosticMask once = elongate_infer(m, gw, gh);
        EXPECT_TRUE(bitwise_equal(elongate_infer(once, gw, gh).mask, once.mask));
    }
}

TEST(ElongateInfer, DegenerateGarmentIsAnError) {
    EXPECT_THROW(elongate_infer(box_mask(1, 1, 5, 5), 0.0, 10.0), InputError);
}

TEST(GarmentBbox, NonWhitePixels) {
    Tensor g({3, 20, 10}, 1.0f);
    for (int64_t y = 3; y < 15; ++y)
        for (int64_t x = 2; x < 6; ++x) g[(1 * 20 + y) * 10 + x] = 0.2f;
    EXPECT_EQ(garment_bbox(g), (BBox{3, 2, 15, 6}));
    EXPECT_THROW(garment_bbox(Tensor({3, 4, 4}, 1.0f)), InputError);
}

TEST(ApplyMask, EmptyFullAndBatched) {
    Rng rng(1);
    const Tensor img = rng.uniform_tensor({3, 8, 6}, 0.0, 1.0);
    EXPECT_TRUE(bitwise_equal(apply_mask(img, make_mask(Tensor({1, 8, 6}))), img));
    const Tensor full = apply_mask(img, make_mask(Tensor({1, 8, 6}, 1.0f)));
    for (int64_t i = 0; i < full.size(); ++i) EXPECT_EQ(full[i], 0.5f);
    const Tensor batch = rng.uniform_tensor({2, 3, 8, 6}, 0.0, 1.0);
    EXPECT_EQ(apply_mask(batch, make_mask(Tensor({1, 8, 6}, 1.0f))).dims(), batch.dims());
    EXPECT_THROW(apply_mask(img, make_mask(Tensor({1, 8, 5}))), ShapeError);
    EXPECT_THROW(make_mask(Tensor({1, 2, 2}, 0.5f)), InputError);
}

TEST(ApplyMask, GoldenHash) {
    Tensor person({3, kH, kW});
    for (int64_t i = 0; i < person.size(); ++i) person[i] = static_cast<float>((i * 37) % 101) / 100.0f;
    const Tensor out = apply_mask(person, build_agnostic_mask(t_pose(), kH, kW));
    EXPECT_EQ(hex64(content_hash(out)), "cd08350160483f2e");
}

TEST(MaskIo, PgmRoundTripIsBinary) {
    const AgnosticMask m = build_agnostic_mask(t_pose(), kH, kW);
    const auto path = std::filesystem::temp_directory_path() / "hv_mask_roundtrip.pgm";
    write_pgm(path, m.mask);
    const Tensor back = read_pgm(path);
    std::filesystem::remove(path);
    EXPECT_TRUE(bitwise_equal(back, m.mask));
}

TEST(PoseRendering, FlipSwapsSidesAndMirrors) {
    const PoseKeypoints kp = t_pose();
    const PoseKeypoints f = flip_keypoints(kp, kW);
    EXPECT_EQ(f.get("l_shoulder").x, kW - kp.get("r_shoulder").x);
    EXPECT_EQ(f.get("r_wrist").y, kp.get("l_wrist").y);
    const Tensor img = render_pose(kp, kH, kW);
    EXPECT_EQ(img.dims(), (Shape{3, kH, kW}));
    EXPECT_FALSE(hv::test::all_zero(img));
}
