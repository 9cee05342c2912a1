#include "hv/evolution.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <map>
#include <sstream>

#include "hv/data.hpp"
#include "hv/diffusion.hpp"
#include "hv/errors.hpp"
#include "hv/image_io.hpp"
#include "hv/kernels.hpp"
#include "hv/latent_codec.hpp"
#include "hv/mask.hpp"
#include "hv/unet.hpp"
#include "json.hpp"

namespace hv {

namespace {

constexpr int kExtraChannels = 5;

// Shortest text that reads back to the same double.
std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string point_str(const MergeCoefficients& c) { return "(" + fmt(c.alpha) + ", " + fmt(c.beta) + ")"; }

} // namespace

void validate(const MergeCoefficients& c) {
    if (!(c.alpha >= 0.0 && c.alpha <= 2.0 && c.beta >= 0.0 && c.beta <= 2.0))
        throw InputError("merge coefficients " + point_str(c) + " outside [0,2]^2");
}

bool is_conv_in(const std::string& name) {
    const std::string suffix = "conv_in.weight";
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

WeightMap merge(const WeightMap& base, const WeightMap& inp, const WeightMap& ds, const MergeCoefficients& c) {
    validate(c);
    for (const WeightMap* other : {&inp, &ds})
        for (const auto& [name, t] : other->entries())
            if (!base.contains(name))
                throw InputError("merge: entry '" + name + "' of the " + (other == &inp ? "inpainting" : "domain") +
                                 " weights is missing from the base weights");
    const auto& ks = kernels::active();
    WeightMap out(Provenance::merged);
    for (const auto& [name, b] : base.entries()) {
        if (!inp.contains(name)) throw InputError("merge: entry '" + name + "' missing from the inpainting weights");
        if (!ds.contains(name)) throw InputError("merge: entry '" + name + "' missing from the domain weights");
        const Tensor& i = inp.at(name);
        const Tensor& d = ds.at(name);
        if (d.dims() != b.dims())
            throw ShapeError("merge: entry '" + name + "' has dims " + to_string(d.dims()) + " in ds vs " +
                             to_string(b.dims()) + " in base");
        if (i.dims() == b.dims()) {
            Tensor w(b.dims());
            ks.merge_residuals(b.data(), i.data(), d.data(), c.alpha, c.beta, w.data(), static_cast<size_t>(b.size()));
            out.insert(name, std::move(w));
            continue;
        }
        // conv_in with extra input channels: [cout, cin + 5, kh, kw]
        const Shape& bd = b.dims();
        const Shape& id = i.dims();
        const bool extra = is_conv_in(name) && bd.size() == 4 && id.size() == 4 && id[0] == bd[0] &&
                           id[1] == bd[1] + kExtraChannels && id[2] == bd[2] && id[3] == bd[3];
        if (!extra)
            throw ShapeError("merge: entry '" + name + "' has dims " + to_string(id) + " in inp vs " +
                             to_string(bd) + " in base");
        const int64_t cout = bd[0], cb = bd[1], ci = id[1], k2 = bd[2] * bd[3];
        Tensor w(id);
        std::vector<float> islice(static_cast<size_t>(cb * k2));
        for (int64_t o = 0; o < cout; ++o) {
            const float* irow = i.data() + o * ci * k2;
            std::copy(irow, irow + cb * k2, islice.begin());
            ks.merge_residuals(b.data() + o * cb * k2, islice.data(), d.data() + o * cb * k2, c.alpha, c.beta,
                               w.data() + o * ci * k2, static_cast<size_t>(cb * k2));
            for (int64_t e = cb * k2; e < ci * k2; ++e)
                w[o * ci * k2 + e] = static_cast<float>(c.alpha * static_cast<double>(irow[e]));
        }
        out.insert(name, std::move(w));
    }
    return out;
}

// ---------------------------------------------------------------------------

CoefficientGrid::CoefficientGrid(double delta) : delta_(delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw InputError("search step delta must be positive");
    const double n = 2.0 / delta;
    const double r = std::round(n);
    if (std::abs(n - r) < 1e-9 && static_cast<int64_t>(r) % 4 == 0) {
        n_ = static_cast<int64_t>(r);
        start_ = n_ / 4;
    }
}

double CoefficientGrid::coord(int64_t k) const {
    if (aligned()) return 2.0 * static_cast<double>(start_ + k) / static_cast<double>(n_);
    return 0.5 + static_cast<double>(k) * delta_;
}

bool CoefficientGrid::in_bounds(int64_t k) const {
    if (aligned()) return start_ + k >= 0 && start_ + k <= n_;
    const double x = coord(k);
    return x >= -1e-12 && x <= 2.0 + 1e-12;
}

int64_t CoefficientGrid::offset_of(double x) const {
    if (!aligned()) return std::llround((x - 0.5) / delta_);
    return std::llround(x * static_cast<double>(n_) / 2.0) - start_;
}

SearchResult greedy_search(const Objective& objective, double delta) {
    const CoefficientGrid grid(delta);
    SearchResult res;
    std::map<std::pair<int64_t, int64_t>, double> seen;
    auto eval = [&](int64_t i, int64_t j) {
        auto key = std::make_pair(i, j);
        if (auto it = seen.find(key); it != seen.end()) return it->second;
        const MergeCoefficients c{grid.coord(i), grid.coord(j)};
        double v;
        try {
            v = objective(c);
        } catch (const std::exception& e) {
            throw Error("evaluator failed at (alpha, beta) = " + point_str(c) + ": " + e.what());
        }
        if (std::isnan(v)) throw Error("evaluator returned NaN at (alpha, beta) = " + point_str(c));
        seen.emplace(key, v);
        res.evaluations.push_back({c, v});
        return v;
    };

    int64_t i = 0, j = 0;
    double cur = eval(i, j);
    res.trajectory.push_back({{grid.coord(i), grid.coord(j)}, cur});
    static const int moves[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (;;) {
        bool have = false;
        double best = 0.0;
        int64_t bi = i, bj = j;
        for (const auto& m : moves) {
            const int64_t ni = i + m[0], nj = j + m[1];
            if (!grid.in_bounds(ni) || !grid.in_bounds(nj)) continue;
            const double v = eval(ni, nj);
            if (!have || v < best) {
                have = true;
                best = v;
                bi = ni;
                bj = nj;
            }
        }
        if (!have || !(best < cur)) break;
        i = bi;
        j = bj;
        cur = best;
        res.trajectory.push_back({{grid.coord(i), grid.coord(j)}, cur});
    }
    res.best = {grid.coord(i), grid.coord(j)};
    res.score = cur;
    return res;
}

GridResult grid_oracle(const Objective& objective, double delta) {
    if (!(delta > 0.0)) throw InputError("grid step delta must be positive");
    const double nf = 2.0 / delta;
    const int64_t n = std::llround(nf);
    if (std::abs(nf - static_cast<double>(n)) > 1e-9) throw InputError("grid step " + fmt(delta) + " does not divide 2");
    GridResult r;
    bool have = false;
    for (int64_t a = 0; a <= n; ++a)
        for (int64_t b = 0; b <= n; ++b) {
            const MergeCoefficients c{2.0 * static_cast<double>(a) / static_cast<double>(n),
                                      2.0 * static_cast<double>(b) / static_cast<double>(n)};
            const double v = objective(c);
            ++r.evaluations;
            if (!have || v < r.score) {
                have = true;
                r.score = v;
                r.best = c;
            }
        }
    return r;
}

// ---------------------------------------------------------------------------

double Quadratic::operator()(const MergeCoefficients& c) const {
    const double da = c.alpha - ca, db = c.beta - cb;
    return wa * da * da + wb * db * db + 2.0 * wab * da * db;
}

double clip_score_stub(const Tensor& images, const std::vector<Prompt>& prompts) {
    if (static_cast<int>(prompts.size()) != kClipPairs)
        throw InputError("clip score needs exactly " + std::to_string(kClipPairs) + " pairs, got " +
                         std::to_string(prompts.size()));
    const Shape& d = images.dims();
    if (d.size() != 4 || d[0] != kClipPairs || d[1] != 3)
        throw ShapeError("clip score expects [20,3,H,W] images, got " + to_string(d));
    const int64_t H = d[2], W = d[3];

    static const std::vector<double> proj = [] {
        Rng r(0xC11F);
        std::vector<double> p(16 * 6);
        for (double& v : p) v = r.normal();
        return p;
    }();
    auto embed = [](const double* f) {
        std::vector<double> e(16, 0.0);
        for (int r = 0; r < 16; ++r)
            for (int k = 0; k < 6; ++k) e[static_cast<size_t>(r)] += proj[static_cast<size_t>(r * 6 + k)] * f[k];
        return e;
    };
    double total = 0.0;
    for (int64_t n = 0; n < kClipPairs; ++n) {
        double img[6] = {0, 0, 0, 0, 0, 0};
        for (int c = 0; c < 3; ++c)
            for (int64_t y = 0; y < H; ++y) {
                double row = 0.0;
                for (int64_t x = 0; x < W; ++x) row += images[((n * 3 + c) * H + y) * W + x];
                img[(y < H / 2 ? 0 : 3) + c] += row;
            }
        for (int k = 0; k < 6; ++k) img[k] = img[k] / (static_cast<double>(W) * (H / 2)) - 0.5;
        const Prompt& p = prompts[static_cast<size_t>(n)];
        const auto up = palette_color(static_cast<int>(p[0])), lo = palette_color(static_cast<int>(p[1]));
        const double txt[6] = {up[0] - 0.5, up[1] - 0.5, up[2] - 0.5, lo[0] - 0.5, lo[1] - 0.5, lo[2] - 0.5};
        const auto a = embed(img), b = embed(txt);
        double ab = 0, aa = 0, bb = 0;
        for (int k = 0; k < 16; ++k) {
            ab += a[static_cast<size_t>(k)] * b[static_cast<size_t>(k)];
            aa += a[static_cast<size_t>(k)] * a[static_cast<size_t>(k)];
            bb += b[static_cast<size_t>(k)] * b[static_cast<size_t>(k)];
        }
        total += aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 0.0;
    }
    return -total / kClipPairs;
}

ModelFamily make_family(uint64_t seed, int64_t image_h, int64_t image_w, int c1, int c2) {
    UNetConfig cfg;
    cfg.c1 = c1;
    cfg.c2 = c2;
    cfg.latent_h = image_h / 8;
    cfg.latent_w = image_w / 8;
    Rng root(seed);
    ModelFamily f;
    f.base.set_provenance(Provenance::base);
    Rng r0 = root.fork(0);
    init_unet(f.base, "unet.", cfg, r0);
    f.base.insert("text.table", r0.normal_tensor({16, cfg.context_dim}));

    // specialists: base plus a seeded residual of roughly 10% of each tensor's spread
    auto perturbed = [&f](Rng& r, double rel) {
        WeightMap w;
        for (const auto& [name, t] : f.base.entries()) {
            double ss = 0.0;
            for (int64_t i = 0; i < t.size(); ++i) ss += static_cast<double>(t[i]) * t[i];
            const double sd = std::max(1e-2, std::sqrt(ss / static_cast<double>(t.size())));
            Tensor p = t;
            for (int64_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(p[i] + rel * sd * r.normal());
            w.insert(name, std::move(p));
        }
        return w;
    };
    Rng r1 = root.fork(1), r2 = root.fork(2);
    f.ds = perturbed(r1, 0.1);
    f.ds.set_provenance(Provenance::ds);
    WeightMap inp = perturbed(r2, 0.1);
    WeightMap inp9(Provenance::inp);
    for (const auto& [name, t] : inp.entries()) {
        if (!is_conv_in(name)) {
            inp9.insert(name, t);
            continue;
        }
        const int64_t cout = t.dim(0), cin = t.dim(1), k2 = t.dim(2) * t.dim(3);
        Tensor w(Shape{cout, cin + kExtraChannels, t.dim(2), t.dim(3)});
        const double sd = 1.0 / std::sqrt(static_cast<double>((cin + kExtraChannels) * k2));
        for (int64_t o = 0; o < cout; ++o) {
            for (int64_t e = 0; e < cin * k2; ++e) w[o * (cin + kExtraChannels) * k2 + e] = t[o * cin * k2 + e];
            for (int64_t e = cin * k2; e < (cin + kExtraChannels) * k2; ++e)
                w[o * (cin + kExtraChannels) * k2 + e] = static_cast<float>(sd * r2.normal());
        }
        inp9.insert(name, std::move(w));
    }
    f.inp = std::move(inp9);
    return f;
}

Objective clip_evaluator(const WeightMap& base, const WeightMap& inp, const WeightMap& ds, uint64_t seed) {
    struct Fixed {
        std::vector<Prompt> prompts;
        Tensor z_t, agnostic, mask, detail;
        std::vector<double> t;
        double alpha_bar = 0.0;
    };
    auto fx = std::make_shared<Fixed>();
    const int64_t H = 64, W = 48;
    SynthConfig sc{H, W, 2};
    const auto samples = synth_dataset(kClipPairs, Rng(seed), sc);
    const LatentCodec codec;
    std::vector<Tensor> persons, agn, masks;
    for (const Sample& s : samples) {
        const AgnosticMask m = build_agnostic_mask(s.keypoints, H, W);
        persons.push_back(s.person);
        agn.push_back(apply_mask(s.person, m));
        masks.push_back(m.mask);
        fx->prompts.push_back(s.prompt);
    }
    const Tensor z0 = codec.encode(stack(persons));
    const auto agn_enc = codec.encode_full(stack(agn));
    fx->agnostic = agn_enc.latent;
    fx->detail = agn_enc.detail;
    fx->mask = mask_to_latent(stack(masks));
    const int t = 500;
    const DDIMSchedule sched;
    fx->alpha_bar = sched.alpha_bar(t);
    fx->t.assign(kClipPairs, static_cast<double>(t));
    Rng noise(seed ^ 0x5EED);
    fx->z_t = sched.q_sample(z0, noise.normal_tensor(z0.dims()), std::vector<int>(kClipPairs, t));

    return [&base, &inp, &ds, fx](const MergeCoefficients& c) {
        const WeightMap merged = merge(base, inp, ds, c);
        const UNetConfig cfg = infer_unet_config(merged, "unet.");
        ag::Tapef tape(false);
        UNet unet(ParamScope<float>(tape, merged, "unet."), cfg);
        ag::Varf x = tape.constant(fx->z_t);
        if (cfg.in_channels == kMainInputChannels)
            x = ag::concat(std::vector<ag::Varf>{x, tape.constant(fx->agnostic), tape.constant(fx->mask)}, 1);
        std::vector<int64_t> ids;
        for (const Prompt& p : fx->prompts) ids.insert(ids.end(), p.begin(), p.end());
        ag::Varf ctx = ag::reshape(ag::gather_rows(tape.parameter("text.table", merged.at("text.table")), ids),
                                   Shape{kClipPairs, 4, cfg.context_dim});
        const Tensor eps = unet.forward(x, fx->t, ctx).value();
        const Tensor x0 = predict_x0(fx->z_t, eps, fx->alpha_bar);
        static const LatentCodec codec;
        return clip_score_stub(codec.decode(x0, fx->detail), fx->prompts);
    };
}

Objective file_evaluator(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("evaluator grid: malformed JSON: ") + e.what());
    }
    if (!doc.contains("delta") || !doc["delta"].is_number() || !doc.contains("values") || !doc["values"].is_array())
        throw InputError("evaluator grid needs numeric \"delta\" and array \"values\"");
    const double delta = doc["delta"].get<double>();
    const int64_t n = std::llround(2.0 / delta);
    if (!(delta > 0) || std::abs(2.0 / delta - static_cast<double>(n)) > 1e-9)
        throw InputError("evaluator grid delta must divide 2");
    auto values = std::make_shared<std::vector<double>>();
    const auto& rows = doc["values"];
    if (static_cast<int64_t>(rows.size()) != n + 1) throw InputError("evaluator grid needs " + std::to_string(n + 1) + " rows");
    for (const auto& row : rows) {
        if (!row.is_array() || static_cast<int64_t>(row.size()) != n + 1)
            throw InputError("evaluator grid rows need " + std::to_string(n + 1) + " values");
        for (const auto& v : row) {
            if (!v.is_number()) throw InputError("evaluator grid values must be numbers");
            values->push_back(v.get<double>());
        }
    }
    return [values, n, delta](const MergeCoefficients& c) {
        auto idx = [&](double x) {
            const int64_t k = std::llround(x / delta);
            if (k < 0 || k > n || std::abs(static_cast<double>(k) * delta - x) > 1e-6)
                throw InputError("point " + point_str(c) + " is not on the evaluator grid");
            return k;
        };
        return (*values)[static_cast<size_t>(idx(c.alpha) * (n + 1) + idx(c.beta))];
    };
}

WeightMap tryon_from_merged(const WeightMap& merged, int branches, uint64_t seed, int64_t image_h, int64_t image_w) {
    const UNetConfig u = infer_unet_config(merged, "unet.");
    if (u.in_channels != kMainInputChannels)
        throw InputError("merged U-Net has " + std::to_string(u.in_channels) + " input channels; the try-on MainNet needs 9");
    TryOnConfig cfg;
    cfg.image_h = image_h;
    cfg.image_w = image_w;
    cfg.branches = branches;
    cfg.c1 = u.c1;
    cfg.c2 = u.c2;
    cfg.context_dim = u.context_dim;
    cfg.text_slots = static_cast<int>(merged.at("text.table").dim(0));
    WeightMap w = init_tryon(cfg, seed);
    w.set_provenance(Provenance::merged);
    static const std::string branch0 = ".attn.branch0.";
    for (const auto& [name, t] : merged.entries()) {
        if (name == "text.table") {
            w.at(name) = t;
            continue;
        }
        const std::string rel = name.substr(std::string("unet.").size());
        w.at("main." + rel) = t;
        if (is_conv_in(rel)) {
            const int64_t cout = t.dim(0), cin = t.dim(1), k2 = t.dim(2) * t.dim(3);
            Tensor cut(Shape{cout, 4, t.dim(2), t.dim(3)});
            for (int64_t o = 0; o < cout; ++o)
                std::copy(t.data() + o * cin * k2, t.data() + o * cin * k2 + 4 * k2, cut.data() + o * 4 * k2);
            w.at("hydra." + rel) = cut;
        } else if (const auto pos = rel.find(branch0); pos != std::string::npos) {
            for (int i = 0; i < branches; ++i) {
                std::string r = rel;
                r.replace(pos, branch0.size(), ".attn.branch" + std::to_string(i) + ".");
                w.at("hydra." + r) = t;
            }
        } else {
            w.at("hydra." + rel) = t;
        }
    }
    return w;
}

} // namespace hv
