#include "hv/attention.hpp"

#include <cmath>
#include <map>
#include <regex>

#include "hv/errors.hpp"

namespace hv::attention {

using ag::Var;

namespace {

template <typename T>
Var<T> split_heads(Var<T> x, int heads) {
    const int64_t b = x.dim(0), l = x.dim(1), c = x.dim(2);
    const int64_t d = c / heads;
    Var<T> r = ag::reshape(x, Shape{b, l, heads, d});
    r = ag::permute(r, {0, 2, 1, 3});
    return ag::reshape(r, Shape{b * heads, l, d});
}

template <typename T>
Var<T> merge_heads(Var<T> x, int64_t b, int heads) {
    const int64_t l = x.dim(1), d = x.dim(2);
    Var<T> r = ag::reshape(x, Shape{b, heads, l, d});
    r = ag::permute(r, {0, 2, 1, 3});
    return ag::reshape(r, Shape{b, l, heads * d});
}

template <typename T>
Var<T> feed_forward(const ParamScope<T>& block, Var<T> x) {
    Var<T> h = ag::add_broadcast(ag::matmul(x, block("ff.fc1.weight")), block("ff.fc1.bias"));
    h = ag::silu(h);
    return ag::add_broadcast(ag::matmul(h, block("ff.fc2.weight")), block("ff.fc2.bias"));
}

template <typename T>
Var<T> norm(const ParamScope<T>& block, const char* which, Var<T> x) {
    const std::string n(which);
    return ag::layer_norm(x, block(n + ".gamma"), block(n + ".beta"), kNormEps);
}

/// Cross attention and feed-forward, shared by every block flavour.
template <typename T>
Var<T> block_tail(const ParamScope<T>& block, Var<T> h, Var<T> context) {
    if (context.valid()) {
        AttentionWeights<T> xw = bind_attention(block, "xattn");
        h = ag::add(h, cross_attention(norm(block, "norm2", h), context, xw));
    }
    return ag::add(h, feed_forward(block, norm(block, "norm3", h)));
}


} // namespace

template <typename T>
AttentionWeights<T> bind_attention(const ParamScope<T>& scope, const std::string& site, int heads) {
    return AttentionWeights<T>{scope(site + ".q"), scope(site + ".k"), scope(site + ".v"), scope(site + ".out"),
                               heads};
}

template <typename T>
Var<T> attend(Var<T> q, Var<T> k, Var<T> v, int heads) {
    const Shape& qd = q.dims();
    const Shape& kd = k.dims();
    if (qd.size() != 3 || kd.size() != 3 || k.dims() != v.dims() || qd[0] != kd[0] || qd[2] != kd[2])
        throw ShapeError("attend: q " + to_string(qd) + ", k " + to_string(kd) + ", v " + to_string(v.dims()));
    if (heads < 1 || qd[2] % heads != 0)
        throw ShapeError("attend: " + std::to_string(qd[2]) + " channels not divisible by " + std::to_string(heads) +
                         " heads");
    const int64_t b = qd[0];
    const double scale = 1.0 / std::sqrt(static_cast<double>(qd[2] / heads));
    Var<T> qh = split_heads(q, heads), kh = split_heads(k, heads), vh = split_heads(v, heads);
    Var<T> logits = ag::scale(ag::matmul(qh, ag::transpose_last2(kh)), scale);
    Var<T> weights = ag::softmax(logits, -1);
    return merge_heads(ag::matmul(weights, vh), b, heads);
}

template <typename T>
Var<T> self_attention(Var<T> x, const AttentionWeights<T>& w) {
    Var<T> q = ag::matmul(x, w.q), k = ag::matmul(x, w.k), v = ag::matmul(x, w.v);
    return ag::matmul(attend(q, k, v, w.heads), w.out);
}

template <typename T>
Var<T> cross_attention(Var<T> x, Var<T> context, const AttentionWeights<T>& w) {
    Var<T> q = ag::matmul(x, w.q), k = ag::matmul(context, w.k), v = ag::matmul(context, w.v);
    return ag::matmul(attend(q, k, v, w.heads), w.out);
}

template <typename T>
void validate(const HydraKV<T>& kv) {
    if (kv.keys.size() != kv.values.size())
        throw ShapeError("hydra kv: " + std::to_string(kv.keys.size()) + " keys vs " +
                         std::to_string(kv.values.size()) + " values");
    for (size_t i = 0; i < kv.keys.size(); ++i) {
        const Shape& kd = kv.keys[i].dims();
        if (kd.size() != 3 || kd != kv.values[i].dims())
            throw ShapeError("hydra kv condition " + std::to_string(i) + ": k " + to_string(kd) + " v " +
                             to_string(kv.values[i].dims()));
        const Shape& k0 = kv.keys[0].dims();
        if (kd[0] != k0[0] || kd[2] != k0[2])
            throw ShapeError("hydra kv conditions disagree on batch/channels: " + to_string(k0) + " vs " +
                             to_string(kd));
    }
}

template <typename T>
std::pair<Var<T>, Var<T>> fused_key_values(Var<T> main_k, Var<T> main_v, const HydraKV<T>& hydra,
                                           const std::vector<Var<T>>& pe) {
    validate(hydra);
    if (hydra.empty()) return {main_k, main_v};
    if (pe.size() != hydra.conditions())
        throw ShapeError("hydra fuse: " + std::to_string(hydra.conditions()) + " conditions but " +
                         std::to_string(pe.size()) + " positional tables");
    const Shape& md = main_k.dims();
    const Shape& hd = hydra.keys[0].dims();
    if (hd[2] != md[2]) throw ShapeError("hydra fuse: channel mismatch " + to_string(md) + " vs " + to_string(hd));
    if (hd[0] != md[0]) throw ShapeError("hydra fuse: batch mismatch " + to_string(md) + " vs " + to_string(hd));
    std::vector<Var<T>> ks{main_k}, vs{main_v};
    for (size_t i = 0; i < hydra.conditions(); ++i) {
        const int64_t l = hydra.keys[i].dim(1);
        const Shape& pd = pe[i].dims();
        if (pd.size() != 2 || pd[1] != hd[2])
            throw ShapeError("hydra fuse: positional table " + std::to_string(i) + " dims " + to_string(pd));
        if (l > pd[0])
            throw ShapeError("hydra fuse: condition " + std::to_string(i) + " has length " + std::to_string(l) +
                             " beyond positional table size " + std::to_string(pd[0]));
        Var<T> table = l == pd[0] ? pe[i] : ag::slice(pe[i], 0, 0, l);
        ks.push_back(ag::add_broadcast(hydra.keys[i], table));
        vs.push_back(ag::add_broadcast(hydra.values[i], table));
    }
    return {ag::concat(ks, 1), ag::concat(vs, 1)};
}

template <typename T>
Var<T> hydra_fuse(Var<T> main_q, Var<T> main_k, Var<T> main_v, const HydraKV<T>& hydra, const std::vector<Var<T>>& pe,
                  int heads) {
    auto [k, v] = fused_key_values(main_k, main_v, hydra, pe);
    return attend(main_q, k, v, heads);
}

namespace {

template <typename T>
int branch_count(const ParamScope<T>& block) {
    int n = 0;
    while (block.has("attn.branch" + std::to_string(n) + ".q")) ++n;
    return n;
}

} // namespace

template <typename T>
EncodeOutput<T> hydra_encode(const ParamScope<T>& block, const std::vector<Var<T>>& conditions, Var<T> context) {
    const int branches = branch_count(block);
    if (conditions.empty() || static_cast<int>(conditions.size()) != branches)
        throw ShapeError("hydra_encode: " + std::to_string(conditions.size()) + " conditions for " +
                         std::to_string(branches) + " branches in " + block.prefix());
    EncodeOutput<T> out;
    for (size_t i = 0; i < conditions.size(); ++i) {
        Var<T> x = conditions[i];
        Var<T> n1 = norm(block, "norm1", x);
        AttentionWeights<T> w = bind_attention(block, "attn.branch" + std::to_string(i));
        Var<T> q = ag::matmul(n1, w.q), k = ag::matmul(n1, w.k), v = ag::matmul(n1, w.v);
        Var<T> h = ag::add(x, ag::matmul(attend(q, k, v, w.heads), w.out));
        out.kv.keys.push_back(k);
        out.kv.values.push_back(v);
        out.outputs.push_back(block_tail(block, h, context));
    }
    return out;
}

template <typename T>
EncodeOutput<T> reference_encode(const ParamScope<T>& block, Var<T> x, Var<T> context) {
    EncodeOutput<T> out;
    Var<T> n1 = norm(block, "norm1", x);
    Var<T> wq = block("attn.branch0.q"), wk = block("attn.branch0.k");
    Var<T> wv = block("attn.branch0.v"), wo = block("attn.branch0.out");
    Var<T> q = ag::matmul(n1, wq), k = ag::matmul(n1, wk), v = ag::matmul(n1, wv);
    Var<T> h = ag::add(x, ag::matmul(attend(q, k, v, kHeads), wo));
    out.kv.keys.push_back(k);
    out.kv.values.push_back(v);
    out.outputs.push_back(block_tail(block, h, context));
    return out;
}

template <typename T>
Var<T> fusion_block(const ParamScope<T>& block, Var<T> x, const HydraKV<T>& hydra, Var<T> context) {
    Var<T> n1 = norm(block, "norm1", x);
    AttentionWeights<T> w = bind_attention(block, "attn.branch0");
    Var<T> q = ag::matmul(n1, w.q), k = ag::matmul(n1, w.k), v = ag::matmul(n1, w.v);
    std::vector<Var<T>> pe;
    for (size_t i = 0; i < hydra.conditions(); ++i) {
        const std::string name = "pe.cond" + std::to_string(i);
        if (!block.has(name))
            throw ShapeError("fusion block " + block.prefix() + " has no positional table for condition " +
                             std::to_string(i));
        pe.push_back(block(name));
    }
    Var<T> h = ag::add(x, ag::matmul(hydra_fuse(q, k, v, hydra, pe, w.heads), w.out));
    return block_tail(block, h, context);
}

template <typename T>
void init_block(BasicWeightMap<T>& w, const std::string& prefix, const BlockSpec& spec, Rng& rng) {
    const int64_t c = spec.channels;
    auto normal = [&rng](Shape dims, double std) {
        BasicTensor<T> t(std::move(dims));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * std);
        return t;
    };
    auto add_norm = [&](const std::string& n) {
        w.insert(prefix + n + ".gamma", BasicTensor<T>(Shape{c}, T(1)));
        w.insert(prefix + n + ".beta", BasicTensor<T>(Shape{c}, T(0)));
    };
    const double s = 1.0 / std::sqrt(static_cast<double>(c));
    add_norm("norm1");
    const BasicTensor<T> q = normal({c, c}, s), k = normal({c, c}, s), v = normal({c, c}, s), o = normal({c, c}, s);
    for (int i = 0; i < spec.branches; ++i) {
        const std::string site = prefix + "attn.branch" + std::to_string(i);
        w.insert(site + ".q", q);
        w.insert(site + ".k", k);
        w.insert(site + ".v", v);
        w.insert(site + ".out", o);
    }
    for (int i = 0; i < spec.pe_conditions; ++i)
        w.insert(prefix + "pe.cond" + std::to_string(i), normal({spec.pe_rows, c}, 0.02));
    if (spec.context_dim > 0) {
        const int64_t cc = spec.context_dim;
        add_norm("norm2");
        w.insert(prefix + "xattn.q", normal({c, c}, s));
        w.insert(prefix + "xattn.k", normal({cc, c}, 1.0 / std::sqrt(static_cast<double>(cc))));
        w.insert(prefix + "xattn.v", normal({cc, c}, 1.0 / std::sqrt(static_cast<double>(cc))));
        w.insert(prefix + "xattn.out", normal({c, c}, s));
    }
    add_norm("norm3");
    w.insert(prefix + "ff.fc1.weight", normal({c, 2 * c}, s));
    w.insert(prefix + "ff.fc1.bias", BasicTensor<T>(Shape{2 * c}));
    w.insert(prefix + "ff.fc2.weight", normal({2 * c, c}, 1.0 / std::sqrt(2.0 * static_cast<double>(c))));
    w.insert(prefix + "ff.fc2.bias", BasicTensor<T>(Shape{c}));
}

double ParameterReport::marginal_fraction() const {
    const int64_t one = total - static_cast<int64_t>(std::max(branches - 1, 0)) * branch_set -
                        static_cast<int64_t>(std::max(pe_conditions - 1, 0)) * pe_per_condition;
    return one > 0 ? static_cast<double>(marginal_per_condition()) / static_cast<double>(one) : 0.0;
}

ParameterReport count_parameters(const WeightMap& weights, const std::string& prefix) {
    static const std::regex branch_re(R"(\.attn\.branch(\d+)\.)");
    static const std::regex pe_re(R"(\.pe\.cond(\d+)$)");
    ParameterReport r;
    std::map<int, int64_t> per_branch, per_pe;
    for (const auto& [name, t] : weights.entries()) {
        if (name.compare(0, prefix.size(), prefix) != 0) continue;
        r.total += t.size();
        std::smatch m;
        if (std::regex_search(name, m, branch_re)) {
            r.branch_attention += t.size();
            per_branch[std::stoi(m[1].str())] += t.size();
        } else if (std::regex_search(name, m, pe_re)) {
            r.positional += t.size();
            per_pe[std::stoi(m[1].str())] += t.size();
        } else {
            r.shared += t.size();
        }
    }
    r.branches = static_cast<int>(per_branch.size());
    r.pe_conditions = static_cast<int>(per_pe.size());
    for (const auto& [i, n] : per_branch) {
        if (r.branch_set == 0) r.branch_set = n;
        if (n != r.branch_set) throw InvariantError("branch " + std::to_string(i) + " differs in parameter count");
    }
    for (const auto& [i, n] : per_pe) {
        if (r.pe_per_condition == 0) r.pe_per_condition = n;
        if (n != r.pe_per_condition)
            throw InvariantError("positional table set " + std::to_string(i) + " differs in size");
    }
    return r;
}

#define HV_INSTANTIATE_ATTENTION(T)                                                                           \
    template AttentionWeights<T> bind_attention(const ParamScope<T>&, const std::string&, int);               \
    template Var<T> attend(Var<T>, Var<T>, Var<T>, int);                                                      \
    template Var<T> self_attention(Var<T>, const AttentionWeights<T>&);                                       \
    template Var<T> cross_attention(Var<T>, Var<T>, const AttentionWeights<T>&);                              \
    template void validate(const HydraKV<T>&);                                                                \
    template std::pair<Var<T>, Var<T>> fused_key_values(Var<T>, Var<T>, const HydraKV<T>&,                   \
                                                        const std::vector<Var<T>>&);                          \
    template Var<T> hydra_fuse(Var<T>, Var<T>, Var<T>, const HydraKV<T>&, const std::vector<Var<T>>&, int);   \
    template EncodeOutput<T> hydra_encode(const ParamScope<T>&, const std::vector<Var<T>>&, Var<T>);          \
    template EncodeOutput<T> reference_encode(const ParamScope<T>&, Var<T>, Var<T>);                          \
    template Var<T> fusion_block(const ParamScope<T>&, Var<T>, const HydraKV<T>&, Var<T>);                    \
    template void init_block(BasicWeightMap<T>&, const std::string&, const BlockSpec&, Rng&);

HV_INSTANTIATE_ATTENTION(float)
HV_INSTANTIATE_ATTENTION(double)

} // namespace hv::attention
