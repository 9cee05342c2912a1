// Acceptance run: one PASS/FAIL line per criterion with its measured value,
// pinned tolerance and wall time against the runtime budget.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hv/attention.hpp"
#include "hv/data.hpp"
#include "hv/diffusion.hpp"
#include "hv/evolution.hpp"
#include "hv/grad_check.hpp"
#include "hv/kernels.hpp"
#include "hv/latent_codec.hpp"
#include "hv/mask.hpp"
#include "hv/pipeline.hpp"
#include "hv/train.hpp"
#include "hv/tryon_model.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace hv;
using namespace hv::attention;
using hv::test::max_diff;
using hv::test::randn;
using hv::test::randn_d;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

int run_criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = budget_s <= 0 || secs < budget_s;
    const bool pass = o.pass && in_time;
    char timing[96];
    if (budget_s > 0) std::snprintf(timing, sizeof timing, "[%.2f s / %.0f s]", secs, budget_s);
    else std::snprintf(timing, sizeof timing, "[%.2f s]", secs);
    std::cout << (pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << " " << timing
              << (in_time ? "" : " over budget") << std::endl;
    return pass ? 0 : 1;
}

WeightMap block_weights(int c, int branches, int pe_conditions, int pe_rows, uint64_t seed, int context_dim) {
    WeightMap w;
    Rng rng(seed);
    init_block(w, "blk.", BlockSpec{c, branches, pe_conditions, pe_rows, context_dim}, rng);
    return w;
}

Tensor from_double(const std::vector<double>& v, Shape dims) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(v[static_cast<size_t>(i)]);
    return t;
}

// ---------------------------------------------------------------------------

Outcome hydra_degeneracy() {
    const int c = 64;
    const int64_t l = 48;
    bool exact = true;
    for (uint64_t seed = 0; seed < 5; ++seed)
        for (int context_dim : {0, 64}) {
            const WeightMap w = block_weights(c, 1, 0, 0, seed, context_dim);
            ag::Tapef tape(false);
            const ParamScope<float> scope(tape, w, "blk.");
            auto x = tape.constant(randn(seed + 10, {2, l, c}));
            ag::Varf ctx = context_dim ? tape.constant(randn(seed + 20, {2, 4, context_dim})) : ag::Varf{};
            const auto hy = hydra_encode(scope, {x}, ctx);
            const auto ref = reference_encode(scope, x, ctx);
            exact = exact && bitwise_equal(hy.kv.keys[0].value(), ref.kv.keys[0].value()) &&
                    bitwise_equal(hy.kv.values[0].value(), ref.kv.values[0].value());
        }
    double err = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        ag::Tapef tape(false);
        const Tensor q = randn(seed, {2, l, c}), mk = randn(seed + 1, {2, l, c}), mv = randn(seed + 2, {2, l, c});
        const Tensor hk = randn(seed + 3, {2, l, c}), hv_ = randn(seed + 4, {2, l, c});
        HydraKV<float> kv{{tape.constant(hk)}, {tape.constant(hv_)}};
        const Tensor got =
            hydra_fuse(tape.constant(q), tape.constant(mk), tape.constant(mv), kv, {tape.constant(Tensor({l, c}))}).value();
        Tensor k2({2, 2 * l, c}), v2({2, 2 * l, c});
        for (int64_t b = 0; b < 2; ++b)
            for (int64_t j = 0; j < 2 * l; ++j)
                for (int64_t e = 0; e < c; ++e) {
                    const bool main = j < l;
                    const int64_t src = (b * l + (main ? j : j - l)) * c + e;
                    k2[(b * 2 * l + j) * c + e] = main ? mk[src] : hk[src];
                    v2[(b * 2 * l + j) * c + e] = main ? mv[src] : hv_[src];
                }
        err = std::max(err, max_diff(got, from_double(hv::test::attention_oracle(q, k2, v2, kHeads), {2, l, c})));
    }
    return {exact && err <= 1e-6,
            std::string("N=1 K/V ") + (exact ? "bitwise equal" : "DIFFER") + ", zero-PE two-segment err " + sci(err) +
                " (tol 1e-6)"};
}

Outcome hydra_shape_law() {
    const int64_t c = 64, l = 48;
    bool lengths = true;
    std::string seen;
    for (int n = 1; n <= 3; ++n) {
        ag::Tapef tape(false);
        HydraKV<float> kv;
        std::vector<ag::Varf> pe;
        for (int i = 0; i < n; ++i) {
            kv.keys.push_back(tape.constant(randn(10 + i, {1, l, c})));
            kv.values.push_back(tape.constant(randn(20 + i, {1, l, c})));
            pe.push_back(tape.constant(randn(30 + i, {l, c}, 0.02)));
        }
        auto [k, v] = fused_key_values(tape.constant(randn(1, {1, l, c})), tape.constant(randn(2, {1, l, c})), kv, pe);
        lengths = lengths && k.dim(1) == (n + 1) * l && v.dim(1) == (n + 1) * l;
        seen += (seen.empty() ? "" : "/") + std::to_string(k.dim(1));
    }
    double err = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        ag::Tapef tape(false);
        std::vector<ag::Varf> keys, values, pe;
        for (uint64_t i = 0; i < 3; ++i) {
            keys.push_back(tape.constant(randn(seed * 10 + i, {2, l, c})));
            values.push_back(tape.constant(randn(seed * 10 + i + 100, {2, l, c})));
            pe.push_back(tape.constant(randn(seed * 10 + i + 200, {l, c}, 0.5)));
        }
        auto q = tape.constant(randn(seed + 300, {2, l, c})), mk = tape.constant(randn(seed + 301, {2, l, c})),
             mv = tape.constant(randn(seed + 302, {2, l, c}));
        const Tensor base = hydra_fuse(q, mk, mv, HydraKV<float>{keys, values}, pe).value();
        for (const std::array<size_t, 3>& perm : {std::array<size_t, 3>{2, 0, 1}, std::array<size_t, 3>{1, 2, 0},
                                                  std::array<size_t, 3>{0, 2, 1}}) {
            HydraKV<float> kv;
            std::vector<ag::Varf> pe_p;
            for (size_t i : perm) {
                kv.keys.push_back(keys[i]);
                kv.values.push_back(values[i]);
                pe_p.push_back(pe[i]);
            }
            err = std::max(err, max_diff(base, hydra_fuse(q, mk, mv, kv, pe_p).value()));
        }
    }
    return {lengths && err <= 1e-5, "key lengths " + seen + " for N=1/2/3 at l=48 (want 96/144/192), permutation err " +
                                        sci(err) + " (tol 1e-5)"};
}

// Random family with a 4 -> 9 channel conv_in on the inpainting member.
ModelFamily random_family(uint64_t seed) {
    Rng rng(seed);
    ModelFamily f;
    const int64_t c = rng.uniform_int(2, 9);
    const std::vector<std::pair<std::string, Shape>> shapes = {{"unet.conv_in.weight", {c, 4, 3, 3}},
                                                                {"unet.conv_in.bias", {c}},
                                                                {"unet.block0.attn.branch0.q", {c, c}},
                                                                {"unet.block0.ff.fc1.weight", {c, 2 * c}},
                                                                {"text.table", {16, rng.uniform_int(3, 8)}}};
    for (const auto& [name, dims] : shapes) {
        f.base.insert(name, rng.normal_tensor(dims));
        f.ds.insert(name, rng.normal_tensor(dims));
        Shape idims = dims;
        if (is_conv_in(name)) idims[1] += 5;
        f.inp.insert(name, rng.normal_tensor(idims));
    }
    return f;
}

Outcome merge_arithmetic() {
    double resid_err = 0, lin_err = 0;
    bool collapse = true;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const ModelFamily f = random_family(seed);
        Rng rng(seed + 1000);
        const MergeCoefficients c1{rng.uniform(0, 2), rng.uniform(0, 2)}, c2{rng.uniform(0, 2), rng.uniform(0, 2)};
        const MergeCoefficients mid{(c1.alpha + c2.alpha) / 2, (c1.beta + c2.beta) / 2};
        const WeightMap m1 = merge(f.base, f.inp, f.ds, c1), m2 = merge(f.base, f.inp, f.ds, c2),
                        mm = merge(f.base, f.inp, f.ds, mid);
        for (const auto& [name, b] : f.base.entries()) {
            const Tensor &i = f.inp.at(name), &d = f.ds.at(name);
            const bool conv = is_conv_in(name);
            const int64_t outer = conv ? b.dim(0) : 1, inner_b = b.size() / outer, inner_i = i.size() / outer;
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t k = 0; k < inner_i; ++k) {
                    const int64_t mi = o * inner_i + k;
                    const bool shared = k < inner_b;
                    const double bv = shared ? double(b[o * inner_b + k]) : 0.0;
                    const double dv = shared ? double(d[o * inner_b + k]) : 0.0;
                    // extra channels have no base or domain counterpart: they
                    // carry alpha * inp only
                    const double want = shared ? c1.alpha * (double(i[mi]) - bv) + c1.beta * (dv - bv) : c1.alpha * i[mi];
                    const double v1 = m1.at(name)[mi], v2 = m2.at(name)[mi], vm = mm.at(name)[mi];
                    resid_err = std::max(resid_err, std::abs((v1 - bv) - want) / (1 + std::abs(v1)));
                    lin_err = std::max(lin_err, std::abs(v1 + v2 - 2 * vm) / (1 + std::abs(vm)));
                }
        }
        const WeightMap z = merge(f.base, f.inp, f.ds, {0.0, 0.0}), a1 = merge(f.base, f.inp, f.ds, {1.0, 0.0});
        for (const auto& [name, b] : f.base.entries()) {
            collapse = collapse && bitwise_equal(a1.at(name), f.inp.at(name));
            const Tensor& t = z.at(name);
            if (!is_conv_in(name)) {
                collapse = collapse && bitwise_equal(t, b);
                continue;
            }
            const int64_t outer = b.dim(0), ib = b.size() / outer, it = t.size() / outer;
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t k = 0; k < it; ++k) collapse = collapse && t[o * it + k] == (k < ib ? b[o * ib + k] : 0.0f);
        }
    }
    const bool ok = resid_err <= 1e-6 && lin_err <= 1e-6 && collapse;
    return {ok, "100 families: residual err " + sci(resid_err) + ", linearity err " + sci(lin_err) +
                    " (tol 1e-6, relative to 1+|w|); (0,0) and (1,0) collapse " + (collapse ? "exact" : "NOT exact")};
}

Outcome greedy_search_check() {
    int agree = 0;
    bool bounds = true;
    auto in_bounds = [](const SearchResult& r) {
        for (const auto& e : r.evaluations)
            if (!(e.point.alpha >= 0 && e.point.alpha <= 2 && e.point.beta >= 0 && e.point.beta <= 2)) return false;
        return true;
    };
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(5000 + seed);
        const Quadratic q{rng.uniform(-0.5, 2.5), rng.uniform(-0.5, 2.5), rng.uniform(0.1, 10), rng.uniform(0.1, 10), 0.0};
        const SearchResult r = greedy_search(q, 0.1);
        agree += r.best == grid_oracle(q, 0.1).best;
        bounds = bounds && in_bounds(r);
    }
    const SearchResult s = greedy_search(Quadratic{}, 0.1);
    const bool surrogate = s.best.alpha == 1.0 && s.best.beta == 1.1;
    bounds = bounds && in_bounds(s) && in_bounds(greedy_search(plane, 0.1));
    // informational: coupled quadratics, where coordinate descent can stall
    int rotated = 0;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(7000 + seed);
        const double wa = rng.uniform(0.1, 10), wb = rng.uniform(0.1, 10);
        const double wab = rng.uniform(-0.95, 0.95) * std::sqrt(wa * wb);
        const Quadratic q{rng.uniform(-0.5, 2.5), rng.uniform(-0.5, 2.5), wa, wb, wab};
        rotated += greedy_search(q, 0.1).best == grid_oracle(q, 0.1).best;
    }
    return {agree == 50 && surrogate && bounds,
            "separable convex quadratics " + std::to_string(agree) + "/50 match oracle, surrogate -> (" +
                sci(s.best.alpha) + ", " + sci(s.best.beta) + "), in-bounds " + (bounds ? "yes" : "NO") +
                "; coupled quadratics (info only) " + std::to_string(rotated) + "/50"};
}

AgnosticMask box_mask(int64_t top, int64_t left, int64_t h, int64_t w, int64_t H, int64_t W) {
    Tensor m({1, H, W});
    for (int64_t y = top; y < top + h; ++y)
        for (int64_t x = left; x < left + w; ++x) m[y * W + x] = 1.0f;
    return make_mask(std::move(m));
}

Outcome mask_boost() {
    const Sample s = synth_dataset(1, Rng(1), SynthConfig{})[0];
    const AgnosticMask m = build_agnostic_mask(s.keypoints, 64, 48);
    Rng rng(31337);
    int hits = 0;
    double fsum = 0;
    for (int i = 0; i < 10000; ++i) {
        const Elongation e = elongate_train(m, rng);
        if (e.triggered) {
            ++hits;
            fsum += e.factor;
        }
    }
    const double rate = hits / 10000.0, mean = fsum / hits;
    int untouched = 0, below = 0, matched = 0, above = 0;
    double worst = 0;
    Rng r2(99);
    for (int k = 0; k < 500; ++k) {
        const int64_t w = r2.uniform_int(10, 80), h = r2.uniform_int(10, 80);
        const int64_t top = r2.uniform_int(0, 40);
        const AgnosticMask bm = box_mask(top, r2.uniform_int(0, 100), h, w, 400, 200);
        const double gw = r2.uniform(20, 200), gh = r2.uniform(20, 400), sigma = gh / gw;
        const AgnosticMask out = elongate_infer(bm, gw, gh);
        if (sigma <= 1.2) {
            ++below;
            untouched += bitwise_equal(out.mask, bm.mask);
        } else {
            ++above;
            // the extension stops at the image bottom
            const double target = std::min(double(400 - top), std::max(double(h), sigma * double(w)));
            const double d = std::abs(double(out.bbox.height()) - target);
            worst = std::max(worst, d);
            matched += d <= 1.0;
        }
    }
    const bool ok = std::abs(rate - 0.5) <= 0.02 && std::abs(mean - 1.35) <= 0.01 && untouched == below && matched == above;
    return {ok, "trigger rate " + sci(rate) + " (0.50 +- 0.02), mean factor " + sci(mean) + " (1.35 +- 0.01); sigma<=1.2 untouched " +
                    std::to_string(untouched) + "/" + std::to_string(below) + ", sigma>1.2 within 1 px " +
                    std::to_string(matched) + "/" + std::to_string(above) + " (worst " + sci(worst) + " px)"};
}

Conditioning conditioning(int garments, uint64_t seed) {
    static const LatentCodec codec;
    return prepare(synth_dataset(1, Rng(seed), SynthConfig{64, 48, garments}), codec, MaskOptions{});
}

Outcome cfg_identity() {
    const WeightMap w = init_tryon(TryOnConfig{64, 48, 2}, 17);
    const TryOnModel model(w);
    const DDIMSchedule sched;
    const Tensor x_T = initial_noise(3, {1, 4, 8, 6});
    const TryOnSampler unit(model, conditioning(2, 5), 1.0);
    const Tensor guided = ddim_sample([&unit](const Tensor& z, int t) { return unit.guided_eps(z, t); }, x_T, sched, 30);
    const Tensor cond_only = ddim_sample([&unit](const Tensor& z, int t) { return unit.eps(z, t); }, x_T, sched, 30);
    const bool same_unit = bitwise_equal(guided, cond_only);

    Conditioning zeroed = conditioning(2, 5);
    for (Tensor& g : zeroed.garments) g.fill(0.0f);
    const TryOnSampler null_cond(model, zeroed, 1.0);
    const TryOnSampler full(model, conditioning(2, 5), 1.3);
    const Tensor a = ddim_sample([&null_cond](const Tensor& z, int t) { return null_cond.eps(z, t); }, x_T, sched, 30);
    const Tensor b = ddim_sample([&full](const Tensor& z, int t) { return full.eps(z, t, true); }, x_T, sched, 30);
    const bool same_null = bitwise_equal(a, b);
    return {same_unit && same_null, std::string("s_g=1 vs conditional-only 30-step sample ") +
                                        (same_unit ? "bitwise equal" : "DIFFER") + "; null-garment vs unconditional branch " +
                                        (same_null ? "bitwise equal" : "DIFFER")};
}

using Vd = ag::Var<double>;
using Taped = ag::Tape<double>;

Vd probe(Taped& tape, Vd y, uint64_t seed) { return ag::sum(ag::mul(y, tape.constant(randn_d(seed ^ 0xBEEF, y.dims())))); }

Outcome gradient_integrity() {
    double worst[4] = {0, 0, 0, 0};
    const int c = 16;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        worst[0] = std::max(
            worst[0],
            grad_check<double>(
                [seed](Taped& t, const std::vector<Vd>& v) {
                    AttentionWeights<double> w{v[1], v[2], v[3], v[4], kHeads};
                    return probe(t, self_attention(v[0], w), seed);
                },
                {randn_d(seed, {2, 6, c}), randn_d(seed + 1, {c, c}, 0.25), randn_d(seed + 2, {c, c}, 0.25),
                 randn_d(seed + 3, {c, c}, 0.25), randn_d(seed + 4, {c, c}, 0.25)})
                .max_rel_error);
        // queries, main k/v, two hydra conditions of different length and their PE tables
        worst[1] = std::max(
            worst[1],
            grad_check<double>(
                [seed](Taped& t, const std::vector<Vd>& v) {
                    HydraKV<double> kv{{v[3], v[5]}, {v[4], v[6]}};
                    return probe(t, hydra_fuse(v[0], v[1], v[2], kv, {v[7], v[8]}), seed + 1);
                },
                {randn_d(seed + 10, {1, 4, c}), randn_d(seed + 11, {1, 4, c}), randn_d(seed + 12, {1, 4, c}),
                 randn_d(seed + 13, {1, 3, c}), randn_d(seed + 14, {1, 3, c}), randn_d(seed + 15, {1, 5, c}),
                 randn_d(seed + 16, {1, 5, c}), randn_d(seed + 17, {6, c}, 0.5), randn_d(seed + 18, {6, c}, 0.5)})
                .max_rel_error);
        worst[2] = std::max(worst[2], grad_check<double>(
                                          [seed](Taped& t, const std::vector<Vd>& v) {
                                              return probe(t, ag::conv2d(v[0], v[1], 1 + int(seed % 2), 1), seed + 2);
                                          },
                                          {randn_d(seed + 20, {2, 3, 6, 5}), randn_d(seed + 21, {4, 3, 3, 3})})
                                          .max_rel_error);
        worst[3] = std::max(worst[3], grad_check<double>(
                                          [seed](Taped& t, const std::vector<Vd>& v) {
                                              return probe(t, ag::group_norm(v[0], 2, v[1], v[2], 1e-5), seed + 3);
                                          },
                                          {randn_d(seed + 30, {2, 4, 3, 3}), randn_d(seed + 31, {4}), randn_d(seed + 32, {4})})
                                          .max_rel_error);
    }
    const double m = std::max(std::max(worst[0], worst[1]), std::max(worst[2], worst[3]));
    return {m <= 1e-2, "20 seeds each, max rel err attention " + sci(worst[0]) + ", fusion+PE " + sci(worst[1]) +
                           ", conv " + sci(worst[2]) + ", group norm " + sci(worst[3]) + " (tol 1e-2)"};
}

Outcome toy_overfit() {
    const auto data = synth_dataset(2, Rng(21).fork(0xDA7A), SynthConfig{64, 48, 2});
    TrainConfig tc;
    tc.steps = 500;
    tc.batch_size = 2;
    tc.seed = 21;
    tc.single_batch = tc.fixed_draw = true;
    WeightMap w = init_tryon(TryOnConfig{64, 48, 2}, 21);
    WeightMap w_again = w;
    const TrainLog log = train_toy(w, data, tc);
    TrainConfig shortc = tc;
    shortc.steps = 10;
    const TrainLog rerun = train_toy(w_again, data, shortc);
    const bool deterministic = std::equal(rerun.losses.begin(), rerun.losses.end(), log.losses.begin());
    const double ratio = log.losses.back() / log.losses.front();
    return {ratio < 0.25 && deterministic, "N=2, batch 2, 500 steps: loss " + sci(log.losses.front()) + " -> " +
                                               sci(log.losses.back()) + ", ratio " + sci(ratio) +
                                               " (want < 0.25); rerun prefix " + (deterministic ? "identical" : "DIFFERS")};
}

Outcome single_hydra_pass() {
    std::string detail;
    bool ok = true;
    for (int n : {1, 2}) {
        const WeightMap w = init_tryon(TryOnConfig{64, 48, n}, 17);
        const TryOnModel model(w);
        TryOnOptions opts;
        opts.steps = 30;
        opts.seed = 4;
        const TryOnResult r = run_tryon(model, synth_dataset(1, Rng(8), SynthConfig{64, 48, n}), opts);
        ok = ok && r.hydra_calls == 1;
        detail += (detail.empty() ? "" : ", ") + std::string("N=") + std::to_string(n) + ": " + std::to_string(r.hydra_calls);
    }
    return {ok, "HydraNet forwards per 30-step guided sample " + detail + " (want 1)"};
}

std::string run_cli(const std::string& args, const std::string& env, int& code) {
    const std::string cmd = env + " " + std::string(HV_CLI_PATH) + " " + args + " 2>&1";
    std::string out;
    std::FILE* p = popen(cmd.c_str(), "r");
    if (!p) {
        code = -1;
        return out;
    }
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int status = pclose(p);
    code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
}

// Latent hash of the pinned run below, recorded on x86-64 Linux.
constexpr const char* kPinnedLatentHash = "971349c29068239a";

Outcome end_to_end_determinism() {
    const fs::path dir = fs::temp_directory_path() / "hv_acceptance_e2e";
    fs::remove_all(dir);
    const std::string d = dir.string();
    int code = 0;
    run_cli("synth --n 1 --garments 2 --seed 3 --out-dir " + d + "/data", "", code);
    if (code != 0) return {false, "synth failed"};
    run_cli("init --kind tryon --branches 2 --seed 1 --out-dir " + d + "/init", "", code);
    if (code != 0) return {false, "init failed"};
    auto tryon = [&](const std::string& out, const std::string& env) {
        int rc = 0;
        std::string h = run_cli("tryon --checkpoint " + d + "/init/checkpoint.hvw --person " + d +
                                    "/data/sample0_person.ppm --garment " + d + "/data/sample0_garment0.ppm --garment " + d +
                                    "/data/sample0_garment1.ppm --keypoints " + d + "/data/sample0_keypoints.json --seed 7 --out-dir " +
                                    d + "/" + out,
                                env, rc);
        return rc == 0 ? h : "error(" + h + ")";
    };
    const std::string a = tryon("run1", ""), b = tryon("run2", "");
    const std::string sc = tryon("scalar", "HV_KERNELS=scalar"), vx = tryon("avx2", "HV_KERNELS=avx2");
    fs::remove_all(dir);
    const bool repeat = a == b, kernels = sc == vx || vx.rfind("error", 0) == 0, pinned = a == kPinnedLatentHash;
    return {repeat && sc == a && kernels && pinned,
            "latent hash run1 " + a + ", run2 " + b + ", scalar " + sc + ", avx2 " + vx + ", pinned " + kPinnedLatentHash};
}

} // namespace

int main() {
    std::cout << "kernels: " << kernels::active().name << std::endl;
    int failed = 0;
    failed += run_criterion(1, "hydra degeneracy", 5, hydra_degeneracy);
    failed += run_criterion(2, "hydra shape law", 5, hydra_shape_law);
    failed += run_criterion(3, "merge arithmetic", 10, merge_arithmetic);
    failed += run_criterion(4, "greedy search", 30, greedy_search_check);
    failed += run_criterion(5, "mask boost statistics", 10, mask_boost);
    failed += run_criterion(6, "guidance identity", 60, cfg_identity);
    failed += run_criterion(7, "gradient integrity", 120, gradient_integrity);
    failed += run_criterion(8, "toy training viability", 600, toy_overfit);
    failed += run_criterion(9, "single hydra pass", 60, single_hydra_pass);
    failed += run_criterion(10, "end-to-end determinism", 0, end_to_end_determinism);
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
