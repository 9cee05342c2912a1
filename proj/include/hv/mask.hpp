#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hv/rng.hpp"
#include "hv/tensor.hpp"

namespace hv {

struct Joint {
    double x = 0.0;
    double y = 0.0;
    double conf = 0.0;
    bool present() const { return conf > 0.0; }
};

/// Named body joints in pixel coordinates (x right, y down). Names used:
/// neck, {l,r}_{shoulder,elbow,wrist,hip}. Absent joints have conf 0.
struct PoseKeypoints {
    std::map<std::string, Joint> joints;

    const Joint& get(const std::string& name) const;
    bool has(const std::string& name) const { return get(name).present(); }
    void set(const std::string& name, double x, double y, double conf = 1.0) { joints[name] = Joint{x, y, conf}; }

    /// Throws InputError when a present joint lies outside [0,W]x[0,H] or a
    /// confidence is outside [0,1].
    void validate(int64_t height, int64_t width) const;
};

extern const std::array<const char*, 9> kJointNames;

/// {"joints": {"l_shoulder": [x, y, conf], ...}}
PoseKeypoints parse_keypoints(const std::string& json_text);
std::string keypoints_to_json(const PoseKeypoints& kp);
/// Missing file -> InsufficientPoseError naming the path.
PoseKeypoints load_keypoints(const std::filesystem::path& path);
void save_keypoints(const std::filesystem::path& path, const PoseKeypoints& kp);

/// Half-open box: rows [top, bottom), cols [left, right).
struct BBox {
    int64_t top = 0, left = 0, bottom = 0, right = 0;
    int64_t height() const { return bottom - top; }
    int64_t width() const { return right - left; }
    bool empty() const { return height() <= 0 || width() <= 0; }
    bool operator==(const BBox&) const = default;
};

struct AgnosticMask {
    Tensor mask; ///< [1,H,W], values 0/1
    BBox bbox;   ///< tight around the 1s

    int64_t height() const { return mask.dim(1); }
    int64_t width() const { return mask.dim(2); }
    bool empty() const { return bbox.empty(); }
};

/// Tight bounding box of the nonzero pixels of a [1,H,W] mask.
BBox mask_bbox(const Tensor& mask);
AgnosticMask make_mask(Tensor mask);

struct MaskGeometry {
    double torso_dilation = 0.15; ///< fraction of shoulder width
    double arm_radius = 0.08;     ///< fraction of image width
};

/// Union of the shoulder/hip quadrilateral dilated by 15% of the shoulder
/// width and capsules along shoulder-elbow-wrist. Reads keypoints only.
/// Throws InsufficientPoseError without both shoulders and both hips.
AgnosticMask build_agnostic_mask(const PoseKeypoints& kp, int64_t height, int64_t width,
                                 const MaskGeometry& geom = {});

struct ElongationPolicy {
    double probability = 0.5;
    double factor_lo = 1.2;
    double factor_hi = 1.5;
    double threshold = 1.2;
};

struct Elongation {
    AgnosticMask mask;
    bool triggered = false;
    double factor = 1.0; ///< drawn factor (1 when not triggered)
};

/// Extends the mask downward so its height becomes round(f*h), clipped at
/// the image bottom. New rows span the mask's column range.
AgnosticMask extend_down(const AgnosticMask& m, int64_t new_height);

/// With probability P (one Bernoulli and one Uniform(lo,hi) draw per call)
/// elongates by f. Throws InputError on an empty mask.
Elongation elongate_train(const AgnosticMask& m, Rng& rng, const ElongationPolicy& policy = {});

/// sigma = garment h / w; for sigma > threshold the mask grows downward
/// until height == round(sigma * mask width). Never shrinks.
AgnosticMask elongate_infer(const AgnosticMask& m, double garment_w, double garment_h,
                            const ElongationPolicy& policy = {});

/// Bounding box of the non-white pixels (any channel below 0.95) of a
/// laid-out garment image [3,H,W]. Throws InputError when empty.
BBox garment_bbox(const Tensor& garment);

/// Pixels inside the mask become 0.5; [3,H,W] or [b,3,H,W] with a [1,H,W] mask.
Tensor apply_mask(const Tensor& person, const AgnosticMask& m);

/// Skeleton rendering [3,H,W] used as the pose-guider input.
Tensor render_pose(const PoseKeypoints& kp, int64_t height, int64_t width);

/// Mirror x -> W - x and swap l_/r_ names.
PoseKeypoints flip_keypoints(const PoseKeypoints& kp, int64_t width);

} // namespace hv
