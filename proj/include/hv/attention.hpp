#pragma once

#include <string>
#include <vector>

#include "hv/autograd.hpp"
#include "hv/rng.hpp"
#include "hv/weight_map.hpp"

namespace hv::attention {

inline constexpr int kHeads = 4;
inline constexpr double kNormEps = 1e-5;

/// Projection matrices of one attention site, applied as x * W.
template <typename T>
struct AttentionWeights {
    ag::Var<T> q, k, v, out;
    int heads = kHeads;
};

/// Binds "<site>.q|k|v|out" from a scope, e.g. site = "attn.branch1".
template <typename T>
AttentionWeights<T> bind_attention(const ParamScope<T>& scope, const std::string& site, int heads = kHeads);

/// Multi-head scaled dot-product attention of q[b,lq,c] over k,v[b,lk,c];
/// logits scaled by 1/sqrt(c/heads). Returns [b,lq,c] before the output
/// projection.
template <typename T>
ag::Var<T> attend(ag::Var<T> q, ag::Var<T> k, ag::Var<T> v, int heads);

/// softmax(xWq (xWk)^T / sqrt(d)) xWv, then Wout. The residual is the caller's.
template <typename T>
ag::Var<T> self_attention(ag::Var<T> x, const AttentionWeights<T>& w);

/// Cross attention of x[b,l,c] against context[b,lc,cc].
template <typename T>
ag::Var<T> cross_attention(ag::Var<T> x, ag::Var<T> context, const AttentionWeights<T>& w);

/// Per-condition key/value features {z_hk^i, z_hv^i}, each [b, l_i, c].
template <typename T>
struct HydraKV {
    std::vector<ag::Var<T>> keys;
    std::vector<ag::Var<T>> values;

    size_t conditions() const { return keys.size(); }
    bool empty() const { return keys.empty(); }
};

/// Throws ShapeError unless every condition shares b and c (l may differ).
template <typename T>
void validate(const HydraKV<T>& kv);

/// z_all = (z^1 + PE^1) (+) ... (+) (z^N + PE^N) along l, for keys and
/// values alike, then prefixed by the main-stream k/v. PE^i is the learned
/// table of condition i read at positions [0, l_i). Returns {z_ck, z_cv}.
template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> fused_key_values(ag::Var<T> main_k, ag::Var<T> main_v, const HydraKV<T>& hydra,
                                                    const std::vector<ag::Var<T>>& pe);

/// Attention of the main queries against the fused keys/values. With no
/// conditions this is plain self-attention of the main stream.
template <typename T>
ag::Var<T> hydra_fuse(ag::Var<T> main_q, ag::Var<T> main_k, ag::Var<T> main_v, const HydraKV<T>& hydra,
                      const std::vector<ag::Var<T>>& pe, int heads = kHeads);

// ---------------------------------------------------------------------------
// Transformer-style blocks. Parameter names, relative to the block scope:
//   norm1.{gamma,beta}  attn.branch{i}.{q,k,v,out}  pe.cond{i}
//   norm2.{gamma,beta}  xattn.{q,k,v,out}            (only with a context)
//   norm3.{gamma,beta}  ff.fc1.{weight,bias}  ff.fc2.{weight,bias}

template <typename T>
struct EncodeOutput {
    std::vector<ag::Var<T>> outputs; ///< per condition, [b,l,c]
    HydraKV<T> kv;                   ///< K/V emitted at the self-attention site
};

/// Hydra Encoding Block: condition i runs through the shared norm / cross
/// attention / feed-forward path but uses attn.branch{i} projections.
template <typename T>
EncodeOutput<T> hydra_encode(const ParamScope<T>& block, const std::vector<ag::Var<T>>& conditions,
                             ag::Var<T> context = {});

/// Single-condition reference encoder (ReferenceNet style) over attn.branch0.
template <typename T>
EncodeOutput<T> reference_encode(const ParamScope<T>& block, ag::Var<T> x, ag::Var<T> context = {});

/// Hydra Fusion Block: the block's self-attention reads the main stream's
/// own k/v concatenated with the hydra features.
template <typename T>
ag::Var<T> fusion_block(const ParamScope<T>& block, ag::Var<T> x, const HydraKV<T>& hydra, ag::Var<T> context = {});

/// Adds freshly initialised block parameters to `w` under `prefix`.
/// Branches start elementwise identical; pe tables (one per condition) have
/// `pe_rows` rows. context_dim == 0 omits cross attention.
struct BlockSpec {
    int channels = 64;
    int branches = 1;
    int pe_conditions = 0;
    int pe_rows = 0;
    int context_dim = 0;
};

template <typename T>
void init_block(BasicWeightMap<T>& w, const std::string& prefix, const BlockSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParameterReport {
    int64_t total = 0;
    int64_t branch_attention = 0; ///< all attn.branch{i} projections
    int64_t positional = 0;       ///< all pe.cond{i} tables
    int64_t shared = 0;
    int branches = 0;
    int pe_conditions = 0;
    int64_t branch_set = 0;    ///< one branch's projections summed over blocks
    int64_t pe_per_condition = 0;
    /// branch_set + pe_per_condition: cost of adding one condition
    int64_t marginal_per_condition() const { return branch_set + pe_per_condition; }
    double marginal_fraction() const;
};

/// Exhaustive traversal of a weight map grouped by name pattern. Throws
/// InvariantError if branches differ in size.
ParameterReport count_parameters(const WeightMap& weights, const std::string& prefix = "");

} // namespace hv::attention
