#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hv/mask.hpp"
#include "hv/rng.hpp"
#include "hv/tensor.hpp"
#include "hv/tryon_model.hpp"

namespace hv {

/// Text slots: 0..7 colours, 8..11 motifs, 12..15 categories.
inline constexpr int kColorCount = 8;
inline constexpr int kMotifBase = 8;
inline constexpr int kCategoryBase = 12;

enum class Motif { plain = 0, stripes = 1, logo = 2, check = 3 };

/// RGB of palette colour i in [0,1].
std::array<float, 3> palette_color(int i);

struct SynthConfig {
    int64_t height = 64;
    int64_t width = 48;
    int garments = 1; ///< 1: upper only; 2: upper + lower
};

/// One paired example: flat garments on white, a person wearing them, the
/// matching keypoints and a slot prompt {upper colour, lower colour, 8 +
/// motif, 12 + category}.
struct Sample {
    Tensor person;                ///< [3,H,W]
    std::vector<Tensor> garments; ///< [3,H,W] each
    PoseKeypoints keypoints;
    Prompt prompt{};
    int upper_color = 0;
    int lower_color = 0;
    Motif motif = Motif::plain;
};

Sample synth_sample(Rng& rng, const SynthConfig& cfg);
/// n >= 1 samples; sample i draws from rng.fork(i) so any prefix is stable.
std::vector<Sample> synth_dataset(int n, const Rng& rng, const SynthConfig& cfg);

/// Hash over every tensor and keypoint of a sample.
uint64_t sample_hash(const Sample& s);

/// Box spanned by shoulders and hips.
BBox torso_box(const PoseKeypoints& kp);

struct AugmentPolicy {
    double flip_p = 0.5;
    double pad_p = 0.5;
    double hue_p = 0.5;
    double contrast_p = 0.5;
    double max_pad = 0.10;    ///< content shrinks to [1 - max_pad, 1]
    double max_hue_deg = 5.0; ///< hue shift in [-max, max] degrees
    double contrast_lo = 0.8;
    double contrast_hi = 1.2;
};

struct AugmentDraw {
    bool flip = false;
    bool pad = false;
    bool hue = false;
    bool contrast = false;
    double pad_scale = 1.0;
    double hue_deg = 0.0;
    double contrast_factor = 1.0;
};

/// Four Bernoulli and three uniform draws, always in the same order.
AugmentDraw draw_augment(Rng& rng, const AugmentPolicy& policy);

/// Applies one draw jointly to person, garments and keypoints.
Sample apply_augment(const Sample& s, const AugmentDraw& d);
Tensor flip_image(const Tensor& img);
/// Content shrinks by `scale` about the centre; the border takes `fill`.
Tensor pad_resize(const Tensor& img, double scale, float fill);
/// Rotation of RGB about the grey axis by `deg` degrees.
Tensor hue_rotate(const Tensor& img, double deg);
/// mean + f (x - mean), clamped to [0,1]; mean over the whole image.
Tensor adjust_contrast(const Tensor& img, double factor);

struct Augmented {
    Sample sample;
    AugmentDraw draw;
};
Augmented augment(const Sample& s, const AugmentPolicy& policy, Rng& rng);

} // namespace hv
