#include "hv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "hv/errors.hpp"

namespace hv {

namespace {

constexpr float kBackground = 0.85f;
constexpr float kSkin[3] = {0.87f, 0.70f, 0.58f};

void put(Tensor& img, int64_t y, int64_t x, const float* rgb) {
    const int64_t H = img.dim(1), W = img.dim(2);
    if (y < 0 || y >= H || x < 0 || x >= W) return;
    for (int c = 0; c < 3; ++c) img[(c * H + y) * W + x] = rgb[c];
}

void get(const Tensor& img, int64_t y, int64_t x, float* rgb) {
    const int64_t H = img.dim(1), W = img.dim(2);
    y = std::clamp<int64_t>(y, 0, H - 1);
    x = std::clamp<int64_t>(x, 0, W - 1);
    for (int c = 0; c < 3; ++c) rgb[c] = img[(c * H + y) * W + x];
}

double seg_dist(double px, double py, const Joint& a, const Joint& b) {
    const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(a.x + t * dx - px, a.y + t * dy - py);
}

// Flat garment on white: a body rectangle in `box` with motif; uppers get
// short sleeves.
Tensor render_garment(int64_t H, int64_t W, const BBox& box, int color, Motif motif, bool sleeves) {
    Tensor g(Shape{3, H, W}, 1.0f);
    const auto base = palette_color(color);
    float accent[3];
    for (int c = 0; c < 3; ++c) accent[c] = 0.5f * base[static_cast<size_t>(c)];
    for (int64_t y = box.top; y < box.bottom; ++y)
        for (int64_t x = box.left; x < box.right; ++x) {
            const int64_t ly = y - box.top, lx = x - box.left;
            bool alt = false;
            switch (motif) {
            case Motif::plain: break;
            case Motif::stripes: alt = (ly / 3) % 2 == 1; break;
            case Motif::check: alt = ((ly / 4) + (lx / 4)) % 2 == 1; break;
            case Motif::logo: {
                const double cy = box.top + 0.35 * box.height(), cx = box.left + 0.5 * box.width();
                alt = std::hypot(y + 0.5 - cy, x + 0.5 - cx) < 0.18 * box.width();
                break;
            }
            }
            put(g, y, x, alt ? accent : base.data());
        }
    if (sleeves) {
        const int64_t sh = box.height() / 4, sw = std::max<int64_t>(2, box.width() / 4);
        for (int64_t y = box.top; y < box.top + sh; ++y)
            for (int64_t k = 0; k < sw; ++k) {
                put(g, y, box.left - 1 - k, base.data());
                put(g, y, box.right + k, base.data());
            }
    }
    return g;
}

} // namespace

std::array<float, 3> palette_color(int i) {
    static const std::array<std::array<float, 3>, kColorCount> p = {{{0.85f, 0.15f, 0.15f},
                                                                      {0.15f, 0.55f, 0.20f},
                                                                      {0.15f, 0.25f, 0.80f},
                                                                      {0.90f, 0.75f, 0.10f},
                                                                      {0.55f, 0.20f, 0.65f},
                                                                      {0.10f, 0.65f, 0.70f},
                                                                      {0.95f, 0.50f, 0.10f},
                                                                      {0.20f, 0.20f, 0.20f}}};
    if (i < 0 || i >= kColorCount) throw InputError("palette index out of range: " + std::to_string(i));
    return p[static_cast<size_t>(i)];
}

BBox torso_box(const PoseKeypoints& kp) {
    double top = 1e300, left = 1e300, bottom = -1e300, right = -1e300;
    for (const char* n : {"l_shoulder", "r_shoulder", "l_hip", "r_hip"}) {
        const Joint& j = kp.get(n);
        top = std::min(top, j.y);
        bottom = std::max(bottom, j.y);
        left = std::min(left, j.x);
        right = std::max(right, j.x);
    }
    return BBox{static_cast<int64_t>(std::floor(top)), static_cast<int64_t>(std::floor(left)),
                static_cast<int64_t>(std::ceil(bottom)), static_cast<int64_t>(std::ceil(right))};
}

Sample synth_sample(Rng& rng, const SynthConfig& cfg) {
    if (cfg.garments < 1 || cfg.garments > 2) throw InputError("synthetic data supports 1 or 2 garments");
    const int64_t H = cfg.height, W = cfg.width;
    const double h = static_cast<double>(H), w = static_cast<double>(W);
    Sample s;
    s.upper_color = static_cast<int>(rng.uniform_int(0, kColorCount));
    s.lower_color = static_cast<int>((s.upper_color + rng.uniform_int(1, kColorCount)) % kColorCount);
    s.motif = static_cast<Motif>(rng.uniform_int(0, 4));
    s.prompt = {s.upper_color, s.lower_color, kMotifBase + static_cast<int64_t>(s.motif),
                kCategoryBase + (cfg.garments == 2 ? 1 : 0)};

    // pose: roughly frontal, arms hanging slightly outward
    const double cx = w / 2 + rng.uniform(-0.04, 0.04) * w;
    const double half = rng.uniform(0.17, 0.22) * w;
    const double sy = rng.uniform(0.22, 0.27) * h;
    const double hy = rng.uniform(0.55, 0.60) * h;
    const double hip_half = half * rng.uniform(0.75, 0.9);
    const double arm = rng.uniform(0.04, 0.08) * w;
    PoseKeypoints& kp = s.keypoints;
    kp.set("neck", cx, sy - 0.05 * h);
    kp.set("l_shoulder", cx + half, sy);
    kp.set("r_shoulder", cx - half, sy);
    kp.set("l_hip", cx + hip_half, hy);
    kp.set("r_hip", cx - hip_half, hy);
    kp.set("l_elbow", cx + half + arm, sy + 0.17 * h);
    kp.set("r_elbow", cx - half - arm, sy + 0.17 * h);
    kp.set("l_wrist", cx + half + 1.3 * arm, sy + 0.32 * h);
    kp.set("r_wrist", cx - half - 1.3 * arm, sy + 0.32 * h);

    // flat garments, laid out centred
    const BBox upper_box{static_cast<int64_t>(0.2 * h), static_cast<int64_t>(0.3 * w), static_cast<int64_t>(0.75 * h),
                         static_cast<int64_t>(0.7 * w)};
    s.garments.push_back(render_garment(H, W, upper_box, s.upper_color, s.motif, true));
    const BBox lower_box{static_cast<int64_t>(0.1 * h), static_cast<int64_t>(0.32 * w), static_cast<int64_t>(0.9 * h),
                         static_cast<int64_t>(0.68 * w)};
    const Tensor lower = render_garment(H, W, lower_box, s.lower_color, Motif::plain, false);
    if (cfg.garments == 2) s.garments.push_back(lower);

    Tensor p(Shape{3, H, W}, kBackground);
    const Joint &ls = kp.get("l_shoulder"), &rs = kp.get("r_shoulder"), &lh = kp.get("l_hip"), &rh = kp.get("r_hip");
    // head
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (std::hypot(x + 0.5 - cx, y + 0.5 - (sy - 0.12 * h)) < 0.09 * w) put(p, y, x, kSkin);
    // legs, wearing the lower garment
    for (int64_t y = static_cast<int64_t>(hy); y < static_cast<int64_t>(0.97 * h); ++y)
        for (int64_t x = 0; x < W; ++x) {
            const double xc = x + 0.5;
            const double leg = 0.11 * w;
            const bool left_leg = std::abs(xc - (lh.x - 0.02 * w)) < leg, right_leg = std::abs(xc - (rh.x + 0.02 * w)) < leg;
            if (!left_leg && !right_leg) continue;
            const double v = (y + 0.5 - hy) / (0.97 * h - hy);
            float rgb[3];
            get(lower, lower_box.top + static_cast<int64_t>(v * lower_box.height()),
                lower_box.left + static_cast<int64_t>((xc - (cx - 2 * leg)) / (4 * leg) * lower_box.width()), rgb);
            put(p, y, x, rgb);
        }
    // arms: sleeve to the elbow, skin below
    const auto ub = palette_color(s.upper_color);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const double px = x + 0.5, py = y + 0.5, r = 0.05 * w;
            for (const char* side : {"l_", "r_"}) {
                const std::string sd(side);
                const Joint &sh = kp.get(sd + "shoulder"), &el = kp.get(sd + "elbow"), &wr = kp.get(sd + "wrist");
                if (seg_dist(px, py, sh, el) < r) put(p, y, x, ub.data());
                else if (seg_dist(px, py, el, wr) < r * 0.8) put(p, y, x, kSkin);
            }
        }
    // torso: the upper garment's body warped onto the shoulder/hip box
    const BBox tb = torso_box(kp);
    for (int64_t y = tb.top; y < tb.bottom; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const double v = (y + 0.5 - sy) / (hy - sy);
            if (v < 0 || v > 1) continue;
            const double lx = rs.x + v * (rh.x - rs.x), rx = ls.x + v * (lh.x - ls.x);
            if (x + 0.5 < lx || x + 0.5 > rx) continue;
            const double u = (x + 0.5 - lx) / (rx - lx);
            float rgb[3];
            get(s.garments[0], upper_box.top + static_cast<int64_t>(v * (upper_box.height() - 1)),
                upper_box.left + static_cast<int64_t>(u * (upper_box.width() - 1)), rgb);
            put(p, y, x, rgb);
        }
    s.person = std::move(p);
    return s;
}

std::vector<Sample> synth_dataset(int n, const Rng& rng, const SynthConfig& cfg) {
    if (n < 1) throw InputError("dataset size must be >= 1");
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Rng r = rng.fork(static_cast<uint64_t>(i));
        out.push_back(synth_sample(r, cfg));
    }
    return out;
}

uint64_t sample_hash(const Sample& s) {
    uint64_t h = content_hash(s.person);
    auto mix = [&h](uint64_t v) { h = fnv1a64(std::as_bytes(std::span<const uint64_t>(&v, 1)), h); };
    for (const Tensor& g : s.garments) mix(content_hash(g));
    for (const auto& [name, j] : s.keypoints.joints) {
        mix(fnv1a64(std::as_bytes(std::span<const char>(name.data(), name.size()))));
        for (double v : {j.x, j.y, j.conf}) {
            uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            mix(bits);
        }
    }
    for (int64_t v : s.prompt) mix(static_cast<uint64_t>(v));
    return h;
}

AugmentDraw draw_augment(Rng& rng, const AugmentPolicy& p) {
    AugmentDraw d;
    d.flip = rng.bernoulli(p.flip_p);
    d.pad = rng.bernoulli(p.pad_p);
    d.hue = rng.bernoulli(p.hue_p);
    d.contrast = rng.bernoulli(p.contrast_p);
    const double pad_scale = 1.0 - rng.uniform(0.0, p.max_pad);
    const double hue = rng.uniform(-p.max_hue_deg, p.max_hue_deg);
    const double contrast = rng.uniform(p.contrast_lo, p.contrast_hi);
    if (d.pad) d.pad_scale = pad_scale;
    if (d.hue) d.hue_deg = hue;
    if (d.contrast) d.contrast_factor = contrast;
    return d;
}

Tensor flip_image(const Tensor& img) {
    const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.dims());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
    return out;
}

Tensor pad_resize(const Tensor& img, double scale, float fill) {
    const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.dims(), fill);
    const double cy = H / 2.0, cx = W / 2.0;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const double sy = cy + (y + 0.5 - cy) / scale, sx = cx + (x + 0.5 - cx) / scale;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            const int64_t iy = static_cast<int64_t>(sy), ix = static_cast<int64_t>(sx);
            for (int64_t c = 0; c < C; ++c) out[(c * H + y) * W + x] = img[(c * H + iy) * W + ix];
        }
    return out;
}

Tensor hue_rotate(const Tensor& img, double deg) {
    const double th = deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th), k = 1.0 / 3.0, r = std::sqrt(k);
    // Rodrigues rotation about (1,1,1)/sqrt(3)
    const double m[3][3] = {{c + k * (1 - c), k * (1 - c) - r * s, k * (1 - c) + r * s},
                            {k * (1 - c) + r * s, c + k * (1 - c), k * (1 - c) - r * s},
                            {k * (1 - c) - r * s, k * (1 - c) + r * s, c + k * (1 - c)}};
    const int64_t HW = img.dim(1) * img.dim(2);
    Tensor out(img.dims());
    for (int64_t i = 0; i < HW; ++i)
        for (int a = 0; a < 3; ++a) {
            double v = 0.0;
            for (int b = 0; b < 3; ++b) v += m[a][b] * img[b * HW + i];
            out[a * HW + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return out;
}

Tensor adjust_contrast(const Tensor& img, double factor) {
    double mean = 0.0;
    for (int64_t i = 0; i < img.size(); ++i) mean += img[i];
    mean /= static_cast<double>(img.size());
    Tensor out(img.dims());
    for (int64_t i = 0; i < img.size(); ++i)
        out[i] = static_cast<float>(std::clamp(mean + factor * (img[i] - mean), 0.0, 1.0));
    return out;
}

Sample apply_augment(const Sample& s, const AugmentDraw& d) {
    Sample out = s;
    const int64_t H = s.person.dim(1), W = s.person.dim(2);
    auto each = [&out](auto&& fn, float person_fill, float garment_fill) {
        out.person = fn(out.person, person_fill);
        for (Tensor& g : out.garments) g = fn(g, garment_fill);
    };
    if (d.flip) {
        each([](const Tensor& t, float) { return flip_image(t); }, 0, 0);
        out.keypoints = flip_keypoints(out.keypoints, W);
    }
    if (d.pad) {
        each([&d](const Tensor& t, float fill) { return pad_resize(t, d.pad_scale, fill); }, kBackground, 1.0f);
        const double cy = H / 2.0, cx = W / 2.0;
        for (auto& [name, j] : out.keypoints.joints) {
            if (!j.present()) continue;
            j.x = cx + d.pad_scale * (j.x - cx);
            j.y = cy + d.pad_scale * (j.y - cy);
        }
    }
    if (d.hue) each([&d](const Tensor& t, float) { return hue_rotate(t, d.hue_deg); }, 0, 0);
    if (d.contrast) each([&d](const Tensor& t, float) { return adjust_contrast(t, d.contrast_factor); }, 0, 0);
    return out;
}

Augmented augment(const Sample& s, const AugmentPolicy& policy, Rng& rng) {
    AugmentDraw d = draw_augment(rng, policy);
    return Augmented{apply_augment(s, d), d};
}

} // namespace hv
