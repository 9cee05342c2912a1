#include "hv/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "hv/errors.hpp"

namespace hv {

const std::array<const char*, 9> kJointNames = {"neck",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
                                                "l_wrist", "r_wrist",    "l_hip",      "r_hip"};

const Joint& PoseKeypoints::get(const std::string& name) const {
    static const Joint missing;
    auto it = joints.find(name);
    return it == joints.end() ? missing : it->second;
}

void PoseKeypoints::validate(int64_t height, int64_t width) const {
    for (const auto& [name, j] : joints) {
        if (!(j.conf >= 0.0 && j.conf <= 1.0)) throw InputError("joint " + name + " confidence outside [0,1]");
        if (!j.present()) continue;
        if (!(j.x >= 0 && j.x <= static_cast<double>(width) && j.y >= 0 && j.y <= static_cast<double>(height)))
            throw InputError("joint " + name + " at (" + std::to_string(j.x) + ", " + std::to_string(j.y) +
                             ") lies outside the " + std::to_string(width) + "x" + std::to_string(height) + " image");
    }
}

PoseKeypoints parse_keypoints(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("keypoints: malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("joints") || !doc["joints"].is_object())
        throw InputError("keypoints: expected an object with a \"joints\" object");
    PoseKeypoints kp;
    for (const auto& [name, v] : doc["joints"].items()) {
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
            throw InputError("keypoints: joint " + name + " must be [x, y, conf]");
        kp.set(name, v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
    return kp;
}

std::string keypoints_to_json(const PoseKeypoints& kp) {
    nlohmann::json joints = nlohmann::json::object();
    for (const auto& [name, j] : kp.joints) joints[name] = {j.x, j.y, j.conf};
    return nlohmann::json{{"joints", joints}}.dump(2);
}

PoseKeypoints load_keypoints(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InsufficientPoseError("insufficient pose: keypoint file not found: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return parse_keypoints(ss.str());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void save_keypoints(const std::filesystem::path& path, const PoseKeypoints& kp) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write " + path.string());
    os << keypoints_to_json(kp) << "\n";
}

BBox mask_bbox(const Tensor& mask) {
    const int64_t H = mask.dim(1), W = mask.dim(2);
    BBox b{H, W, 0, 0};
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (mask[y * W + x] != 0.0f) {
                b.top = std::min(b.top, y);
                b.left = std::min(b.left, x);
                b.bottom = std::max(b.bottom, y + 1);
                b.right = std::max(b.right, x + 1);
            }
    if (b.bottom == 0) return BBox{};
    return b;
}

AgnosticMask make_mask(Tensor mask) {
    if (mask.dims().size() != 3 || mask.dim(0) != 1) throw ShapeError("mask must be [1,H,W], got " + to_string(mask.dims()));
    for (int64_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0f && mask[i] != 1.0f) throw InputError("mask is not binary");
    BBox b = mask_bbox(mask);
    return AgnosticMask{std::move(mask), b};
}

namespace {

struct P2 {
    double x, y;
};

double seg_dist(P2 p, P2 a, P2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

// even-odd rule
bool inside(P2 p, const std::vector<P2>& poly) {
    bool in = false;
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const P2 a = poly[i], b = poly[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
    }
    return in;
}

P2 at(const Joint& j) { return P2{j.x, j.y}; }

} // namespace

AgnosticMask build_agnostic_mask(const PoseKeypoints& kp, int64_t H, int64_t W, const MaskGeometry& geom) {
    for (const char* name : {"l_shoulder", "r_shoulder", "l_hip", "r_hip"})
        if (!kp.has(name)) throw InsufficientPoseError(std::string("insufficient pose: missing joint ") + name);
    kp.validate(H, W);
    const P2 ls = at(kp.get("l_shoulder")), rs = at(kp.get("r_shoulder"));
    const P2 lh = at(kp.get("l_hip")), rh = at(kp.get("r_hip"));
    const std::vector<P2> torso{ls, rs, rh, lh};
    const double dilation = geom.torso_dilation * std::hypot(rs.x - ls.x, rs.y - ls.y);
    const double radius = geom.arm_radius * static_cast<double>(W);

    std::vector<std::pair<P2, P2>> bones;
    for (const char* side : {"l_", "r_"}) {
        const std::string s(side);
        if (!kp.has(s + "elbow")) continue;
        bones.emplace_back(at(kp.get(s + "shoulder")), at(kp.get(s + "elbow")));
        if (kp.has(s + "wrist")) bones.emplace_back(at(kp.get(s + "elbow")), at(kp.get(s + "wrist")));
    }

    Tensor m(Shape{1, H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const P2 p{x + 0.5, y + 0.5};
            bool on = inside(p, torso);
            for (size_t i = 0; !on && i < torso.size(); ++i)
                on = seg_dist(p, torso[i], torso[(i + 1) % torso.size()]) <= dilation;
            for (size_t i = 0; !on && i < bones.size(); ++i) on = seg_dist(p, bones[i].first, bones[i].second) <= radius;
            if (on) m[y * W + x] = 1.0f;
        }
    return make_mask(std::move(m));
}

AgnosticMask extend_down(const AgnosticMask& m, int64_t new_height) {
    if (m.empty()) throw InputError("cannot elongate an empty mask");
    const int64_t H = m.height(), W = m.width();
    const int64_t new_bottom = std::min(H, m.bbox.top + new_height);
    if (new_bottom <= m.bbox.bottom) return m;
    Tensor out = m.mask;
    for (int64_t y = m.bbox.bottom; y < new_bottom; ++y)
        for (int64_t x = m.bbox.left; x < m.bbox.right; ++x) out[y * W + x] = 1.0f;
    AgnosticMask r{std::move(out), m.bbox};
    r.bbox.bottom = new_bottom;
    return r;
}

Elongation elongate_train(const AgnosticMask& m, Rng& rng, const ElongationPolicy& policy) {
    if (m.empty()) throw InputError("cannot elongate an empty mask");
    const bool trigger = rng.bernoulli(policy.probability);
    const double f = rng.uniform(policy.factor_lo, policy.factor_hi);
    if (!trigger) return Elongation{m, false, 1.0};
    const int64_t h = std::llround(f * static_cast<double>(m.bbox.height()));
    return Elongation{extend_down(m, h), true, f};
}

AgnosticMask elongate_infer(const AgnosticMask& m, double garment_w, double garment_h, const ElongationPolicy& policy) {
    if (!(garment_w > 0.0 && garment_h > 0.0)) throw InputError("garment bounding box has zero area");
    const double sigma = garment_h / garment_w;
    if (!(sigma > policy.threshold) || m.empty()) return m;
    const int64_t target = std::llround(sigma * static_cast<double>(m.bbox.width()));
    return extend_down(m, target);
}

BBox garment_bbox(const Tensor& g) {
    if (g.dims().size() != 3 || g.dim(0) != 3) throw ShapeError("garment image must be [3,H,W], got " + to_string(g.dims()));
    const int64_t H = g.dim(1), W = g.dim(2);
    Tensor m(Shape{1, H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                if (g[(c * H + y) * W + x] < 0.95f) m[y * W + x] = 1.0f;
    BBox b = mask_bbox(m);
    if (b.empty()) throw InputError("garment image is blank (no non-white pixels)");
    return b;
}

Tensor apply_mask(const Tensor& person, const AgnosticMask& m) {
    const Shape& d = person.dims();
    const int64_t H = m.height(), W = m.width();
    if (d.size() < 3 || d[d.size() - 3] != 3 || d[d.size() - 2] != H || d[d.size() - 1] != W)
        throw ShapeError("apply_mask: image " + to_string(d) + " vs mask " + to_string(m.mask.dims()));
    Tensor out = person;
    const int64_t planes = person.size() / (H * W);
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t i = 0; i < H * W; ++i)
            if (m.mask[i] != 0.0f) out[p * H * W + i] = 0.5f;
    return out;
}

Tensor render_pose(const PoseKeypoints& kp, int64_t H, int64_t W) {
    static const std::array<std::array<const char*, 2>, 8> limbs = {{{"neck", "l_shoulder"},
                                                                     {"neck", "r_shoulder"},
                                                                     {"l_shoulder", "l_elbow"},
                                                                     {"l_elbow", "l_wrist"},
                                                                     {"r_shoulder", "r_elbow"},
                                                                     {"r_elbow", "r_wrist"},
                                                                     {"l_shoulder", "l_hip"},
                                                                     {"r_shoulder", "r_hip"}}};
    Tensor img(Shape{3, H, W});
    const double width = std::max(1.0, 0.03 * static_cast<double>(W));
    for (size_t li = 0; li < limbs.size(); ++li) {
        const Joint &a = kp.get(limbs[li][0]), &b = kp.get(limbs[li][1]);
        if (!a.present() || !b.present()) continue;
        // distinct colour per limb on the RGB cube
        const float col[3] = {static_cast<float>((li & 1) ? 1.0 : 0.3), static_cast<float>((li & 2) ? 1.0 : 0.3),
                              static_cast<float>((li & 4) ? 1.0 : 0.3)};
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                if (seg_dist(P2{x + 0.5, y + 0.5}, at(a), at(b)) <= width)
                    for (int c = 0; c < 3; ++c) img[(c * H + y) * W + x] = col[c];
    }
    return img;
}

PoseKeypoints flip_keypoints(const PoseKeypoints& kp, int64_t width) {
    PoseKeypoints out;
    for (const auto& [name, j] : kp.joints) {
        std::string n = name;
        if (n.rfind("l_", 0) == 0)
            n[0] = 'r';
        else if (n.rfind("r_", 0) == 0)
            n[0] = 'l';
        Joint f = j;
        if (f.present()) f.x = static_cast<double>(width) - j.x;
        out.joints[n] = f;
    }
    return out;
}

} // namespace hv
