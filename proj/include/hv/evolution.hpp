#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hv/tryon_model.hpp"
#include "hv/weight_map.hpp"

namespace hv {

struct MergeCoefficients {
    double alpha = 0.5;
    double beta = 0.5;
    bool operator==(const MergeCoefficients&) const = default;
};

/// Throws InputError unless both coefficients lie in [0,2].
void validate(const MergeCoefficients& c);

/// True for kernels that may carry the 5 extra inpainting input channels.
bool is_conv_in(const std::string& name);

/// W = base + alpha (inp - base) + beta (ds - base), per entry, in double.
/// A conv_in kernel of `inp` with 5 more input channels than `base`
/// contributes its slices [c_base, c_base + 5) scaled by alpha. Entries are
/// emitted in base order. Name/shape mismatches throw InputError/ShapeError
/// naming the entry.
WeightMap merge(const WeightMap& base, const WeightMap& inp, const WeightMap& ds, const MergeCoefficients& c);

// ---------------------------------------------------------------------------
// Coefficient search over the square [0,2]^2

/// Lower is better. Must be deterministic.
using Objective = std::function<double(const MergeCoefficients&)>;

/// Grid of step delta anchored so that (0.5, 0.5) is a node. When 2/delta is
/// an integer multiple of 4, node i has coordinate 2i/n exactly (so 1.1 is
/// the literal 1.1); otherwise 0.5 + k delta.
class CoefficientGrid {
public:
    explicit CoefficientGrid(double delta);

    double delta() const { return delta_; }
    bool aligned() const { return n_ > 0; }
    /// Number of intervals across [0,2] when aligned.
    int64_t intervals() const { return n_; }
    double coord(int64_t k) const; ///< k = offset from the 0.5 node
    bool in_bounds(int64_t k) const;
    /// Offset of the node nearest to x (aligned grids only).
    int64_t offset_of(double x) const;

private:
    double delta_;
    int64_t n_ = 0;
    int64_t start_ = 0; ///< index of the 0.5 node when aligned
};

struct Evaluation {
    MergeCoefficients point;
    double score = 0.0;
};

struct SearchResult {
    MergeCoefficients best;
    double score = 0.0;
    std::vector<Evaluation> trajectory;  ///< visited points, start first
    std::vector<Evaluation> evaluations; ///< every objective call, in order
};

/// Discrete greedy descent from (0.5, 0.5): evaluate the in-bounds
/// 4-neighbourhood (+a, -a, +b, -b), move to the best neighbour on strict
/// improvement, otherwise stop. Points are evaluated at most once. An
/// objective exception is rethrown as hv::Error naming (alpha, beta).
SearchResult greedy_search(const Objective& objective, double delta);

struct GridResult {
    MergeCoefficients best;
    double score = 0.0;
    int64_t evaluations = 0;
};

/// Exhaustive argmin over all ((2/delta)+1)^2 nodes; ties go to the
/// lexicographically smallest (alpha, beta). delta must divide 2.
GridResult grid_oracle(const Objective& objective, double delta);

// ---------------------------------------------------------------------------
// Evaluators

/// wa (alpha - ca)^2 + wb (beta - cb)^2 + 2 wab (alpha - ca)(beta - cb)
struct Quadratic {
    double ca = 1.0, cb = 1.1;
    double wa = 1.0, wb = 1.0, wab = 0.0;
    double operator()(const MergeCoefficients& c) const;
};

inline double plane(const MergeCoefficients& c) { return c.alpha + c.beta; }

/// Image/text agreement stand-in: cosine similarity, under a fixed random
/// projection, between per-image colour statistics (mean RGB of the upper
/// and lower halves) and the palette colours named by the prompt; negated
/// and averaged so lower is better. Requires exactly 20 pairs.
double clip_score_stub(const Tensor& images, const std::vector<Prompt>& prompts);

inline constexpr int kClipPairs = 20;

/// Three related weight maps: a text-to-image base, an inpainting variant
/// whose conv_in has 5 extra input channels, and a domain-tuned variant.
/// Names: "unet.*" and "text.table".
struct ModelFamily {
    WeightMap base, inp, ds;
};
ModelFamily make_family(uint64_t seed, int64_t image_h = 64, int64_t image_w = 48, int c1 = 64, int c2 = 128);

/// Objective that merges the family at (alpha, beta), inpaints the 20 fixed
/// synthetic pairs with a one-step x0 estimate and scores the decoded images
/// with clip_score_stub. The maps are captured by reference. Pairs are 64x48.
Objective clip_evaluator(const WeightMap& base, const WeightMap& inp, const WeightMap& ds, uint64_t seed = 7);

/// Objective looking up a JSON grid {"delta": d, "values": [[...]]} with
/// values[i][j] the score at (alpha_i, beta_j).
Objective file_evaluator(const std::string& json_text);

/// Try-on checkpoint from a merged 9-channel family member: MainNet takes
/// the merged U-Net, HydraNet the same weights with conv_in cut to 4 input
/// channels and attention duplicated per branch; PE tables and the pose
/// guider are fresh (seeded).
WeightMap tryon_from_merged(const WeightMap& merged, int branches, uint64_t seed, int64_t image_h = 64,
                            int64_t image_w = 48);

} // namespace hv
