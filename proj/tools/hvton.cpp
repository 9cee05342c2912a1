// hvton: command-line driver for merging, search, masks, data, training and try-on.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hv/data.hpp"
#include "hv/errors.hpp"
#include "hv/evolution.hpp"
#include "hv/image_io.hpp"
#include "hv/kernels.hpp"
#include "hv/mask.hpp"
#include "hv/metrics.hpp"
#include "hv/pipeline.hpp"
#include "hv/train.hpp"
#include "hv/tryon_model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hv;

namespace {

enum Exit { kOk = 0, kInvariant = 1, kUser = 2 };

std::string file_hash(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(std::as_bytes(std::span<const char>(bytes.data(), bytes.size()))));
}

/// Exclusive ownership of an output directory for one run.
class OutputDir {
public:
    explicit OutputDir(const fs::path& dir) : dir_(dir) {
        fs::create_directories(dir_);
        lock_ = dir_ / ".lock";
        std::FILE* f = std::fopen(lock_.c_str(), "wx");
        if (!f) throw InputError("output directory is locked by another run: " + dir_.string());
        std::fclose(f);
    }
    ~OutputDir() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;

    fs::path path(const std::string& name) const { return dir_ / name; }

    /// Records an output written by the command.
    void output(const std::string& key, const fs::path& p) { outputs_[key] = {{"path", p.filename().string()}, {"fnv1a64", file_hash(p)}}; }

    void manifest(const std::string& command, const json& config, const json& results = json::object()) {
        json m;
        m["command"] = command;
        m["config"] = config;
        m["kernels"] = kernels::active().name;
        m["outputs"] = outputs_;
        m["results"] = results;
        std::ofstream os(dir_ / "manifest.json");
        os << m.dump(2) << "\n";
        if (!os) throw InputError("cannot write manifest in " + dir_.string());
    }

private:
    fs::path dir_;
    fs::path lock_;
    json outputs_ = json::object();
};

void write_json(const fs::path& p, const json& j) {
    std::ofstream os(p);
    os << j.dump(2) << "\n";
    if (!os) throw InputError("cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw InputError("cannot open " + p.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json coeffs(const MergeCoefficients& c) { return json::array({c.alpha, c.beta}); }

Prompt parse_prompt(const std::string& text) {
    Prompt p{};
    std::stringstream ss(text);
    std::string item;
    size_t i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 4) throw InputError("prompt needs exactly 4 comma-separated slot ids");
        try {
            p[i++] = std::stoll(item);
        } catch (const std::exception&) {
            throw InputError("prompt slot '" + item + "' is not an integer");
        }
    }
    if (i != 4) throw InputError("prompt needs exactly 4 comma-separated slot ids");
    for (int64_t v : p)
        if (v < 0 || v >= 16) throw InputError("prompt slot ids must lie in [0,16)");
    return p;
}

// Nearest palette colour of a garment's non-white pixels.
int64_t dominant_color(const Tensor& g) {
    const int64_t HW = g.dim(1) * g.dim(2);
    double mean[3] = {0, 0, 0};
    int64_t count = 0;
    for (int64_t i = 0; i < HW; ++i) {
        if (g[i] >= 0.95f && g[HW + i] >= 0.95f && g[2 * HW + i] >= 0.95f) continue;
        for (int c = 0; c < 3; ++c) mean[c] += g[c * HW + i];
        ++count;
    }
    if (count == 0) return 0;
    int64_t best = 0;
    double best_d = 1e300;
    for (int k = 0; k < kColorCount; ++k) {
        const auto p = palette_color(k);
        double d = 0;
        for (int c = 0; c < 3; ++c) d += (mean[c] / count - p[static_cast<size_t>(c)]) * (mean[c] / count - p[static_cast<size_t>(c)]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

void select_kernels(const std::string& name) {
    if (name.empty()) return;
    const kernels::KernelSet* ks = kernels::find_kernels(name);
    if (!ks) throw InputError("kernel set '" + name + "' is not available on this machine");
    static std::unique_ptr<kernels::ScopedKernels> guard;
    guard = std::make_unique<kernels::ScopedKernels>(*ks);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hvton: multi-garment latent-diffusion try-on toolkit"};
    app.require_subcommand(1);
    std::string kernel_name;
    app.add_option("--kernels", kernel_name, "Kernel variant (scalar, avx2); default picks the fastest");

    // ---- init
    auto* init = app.add_subcommand("init", "Write fresh weights: a try-on checkpoint or a base/inp/ds family");
    std::string init_kind = "tryon", init_out;
    uint64_t init_seed = 0;
    int init_branches = 1;
    init->add_option("--kind", init_kind, "tryon | family")->check(CLI::IsMember({"tryon", "family"}));
    init->add_option("--seed", init_seed)->required();
    init->add_option("--branches", init_branches, "Garments per sample (try-on only)")->check(CLI::Range(1, 8));
    init->add_option("--out-dir", init_out)->required();

    // ---- merge
    auto* mg = app.add_subcommand("merge", "Residual merge of base/inp/ds weights");
    std::string mg_base, mg_inp, mg_ds, mg_out;
    double mg_alpha = 0.5, mg_beta = 0.5;
    int mg_tryon = 0;
    uint64_t mg_seed = 0;
    mg->add_option("--base", mg_base)->required();
    mg->add_option("--inp", mg_inp)->required();
    mg->add_option("--ds", mg_ds)->required();
    mg->add_option("--alpha", mg_alpha)->required();
    mg->add_option("--beta", mg_beta)->required();
    mg->add_option("--tryon-branches", mg_tryon, "Also emit a try-on checkpoint with N branches (needs --seed)");
    mg->add_option("--seed", mg_seed, "Seed for fresh try-on parts");
    mg->add_option("--out-dir", mg_out)->required();

    // ---- search
    auto* se = app.add_subcommand("search", "Greedy merge-coefficient search (and optional grid oracle)");
    double se_delta = 0.1;
    std::string se_eval = "quadratic", se_grid, se_base, se_inp, se_ds, se_out;
    uint64_t se_seed = 0;
    bool se_oracle = false;
    se->add_option("--delta", se_delta);
    se->add_option("--evaluator", se_eval)->check(CLI::IsMember({"quadratic", "plane", "clipstub", "file"}));
    se->add_option("--grid", se_grid, "JSON grid for --evaluator file");
    se->add_option("--base", se_base);
    se->add_option("--inp", se_inp);
    se->add_option("--ds", se_ds);
    se->add_option("--seed", se_seed, "Family seed for clipstub when no weights are given");
    se->add_flag("--oracle", se_oracle, "Also run the exhaustive grid oracle");
    se->add_option("--out-dir", se_out)->required();

    // ---- mask
    auto* mk = app.add_subcommand("mask", "Agnostic mask construction and elongation");
    mk->require_subcommand(1);
    auto* mk_build = mk->add_subcommand("build", "Mask from keypoints");
    auto* mk_aug = mk->add_subcommand("augment", "Training-time random elongation");
    auto* mk_adapt = mk->add_subcommand("adapt", "Inference-time elongation from a garment image");
    std::string mk_kp, mk_person, mk_garment, mk_out;
    int64_t mk_h = 64, mk_w = 48;
    uint64_t mk_seed = 0;
    int mk_draws = 1;
    for (auto* sub : {mk_build, mk_aug, mk_adapt}) {
        sub->add_option("--keypoints", mk_kp)->required();
        sub->add_option("--height", mk_h);
        sub->add_option("--width", mk_w);
        sub->add_option("--person", mk_person, "Person PPM to mask (optional)");
        sub->add_option("--out-dir", mk_out)->required();
    }
    mk_aug->add_option("--seed", mk_seed)->required();
    mk_aug->add_option("--draws", mk_draws, "Number of independent elongation draws")->check(CLI::Range(1, 100000));
    mk_adapt->add_option("--garment", mk_garment)->required();

    // ---- synth
    auto* sy = app.add_subcommand("synth", "Procedural paired try-on samples");
    int sy_n = 4, sy_garments = 1;
    uint64_t sy_seed = 0;
    std::string sy_out;
    bool sy_augment = false;
    sy->add_option("--n", sy_n)->check(CLI::Range(1, 100000));
    sy->add_option("--garments", sy_garments)->check(CLI::Range(1, 2));
    sy->add_option("--seed", sy_seed)->required();
    sy->add_flag("--augment", sy_augment, "Also write one augmented copy per sample");
    sy->add_option("--out-dir", sy_out)->required();

    // ---- train
    auto* tr = app.add_subcommand("train", "Toy training on synthetic data");
    std::string tr_ckpt, tr_out;
    TrainConfig tc;
    int tr_n = 16, tr_branches = 1;
    uint64_t tr_seed = 0;
    tr->add_option("--checkpoint", tr_ckpt, "Initial weights (default: fresh init)");
    tr->add_option("--branches", tr_branches, "Branches for a fresh init")->check(CLI::Range(1, 2));
    tr->add_option("--steps", tc.steps)->check(CLI::PositiveNumber);
    tr->add_option("--batch-size", tc.batch_size)->check(CLI::PositiveNumber);
    tr->add_option("--lr", tc.optimizer.lr)->check(CLI::NonNegativeNumber);
    tr->add_option("--dropout", tc.dropout_p)->check(CLI::Range(0.0, 1.0));
    tr->add_option("--n-samples", tr_n)->check(CLI::PositiveNumber);
    tr->add_flag("--overfit", tc.single_batch, "Reuse one batch and one noise draw every step");
    tr->add_option("--seed", tr_seed)->required();
    tr->add_option("--out-dir", tr_out)->required();

    // ---- tryon / sample
    auto* to = app.add_subcommand("tryon", "Mask, adapt, encode garments, sample and decode");
    to->alias("sample");
    std::string to_ckpt, to_person, to_kp, to_prompt, to_out;
    std::vector<std::string> to_garments;
    TryOnOptions topt;
    uint64_t to_seed = 0;
    bool to_no_adapt = false;
    to->add_option("--checkpoint", to_ckpt)->required();
    to->add_option("--person", to_person)->required();
    to->add_option("--garment", to_garments, "Garment PPM, once per branch (upper first)")->required();
    to->add_option("--keypoints", to_kp)->required();
    to->add_option("--prompt", to_prompt, "Four slot ids u,l,motif,category (default: from garment colours)");
    to->add_option("--steps", topt.steps)->check(CLI::Range(1, 1000));
    to->add_option("--guidance", topt.guidance, "Guidance scale s_g >= 1")->check(CLI::Range(1.0, 100.0));
    to->add_flag("--no-adapt", to_no_adapt, "Skip aspect-ratio mask elongation");
    to->add_option("--seed", to_seed)->required();
    to->add_option("--out-dir", to_out)->required();

    // ---- metrics
    auto* me = app.add_subcommand("metrics", "SSIM between image pairs");
    std::vector<std::string> me_a, me_b;
    std::string me_out;
    me->add_option("--a", me_a)->required();
    me->add_option("--b", me_b)->required();
    me->add_option("--out-dir", me_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUser;
    }

    try {
        select_kernels(kernel_name);

        if (*init) {
            OutputDir out(init_out);
            json cfg{{"kind", init_kind}, {"seed", init_seed}, {"branches", init_branches}};
            if (init_kind == "tryon") {
                TryOnConfig tcfg;
                tcfg.branches = init_branches;
                save_weights(out.path("checkpoint.hvw"), init_tryon(tcfg, init_seed));
                out.output("checkpoint", out.path("checkpoint.hvw"));
            } else {
                const ModelFamily f = make_family(init_seed);
                save_weights(out.path("base.hvw"), f.base);
                save_weights(out.path("inp.hvw"), f.inp);
                save_weights(out.path("ds.hvw"), f.ds);
                for (const char* k : {"base", "inp", "ds"}) out.output(k, out.path(std::string(k) + ".hvw"));
            }
            out.manifest("init", cfg);
        } else if (*mg) {
            const MergeCoefficients c{mg_alpha, mg_beta};
            validate(c);
            const WeightMap base = load_weights(mg_base), inp = load_weights(mg_inp), ds = load_weights(mg_ds);
            OutputDir out(mg_out);
            const WeightMap merged = merge(base, inp, ds, c);
            save_weights(out.path("merged.hvw"), merged);
            out.output("merged", out.path("merged.hvw"));
            if (mg_tryon > 0) {
                save_weights(out.path("tryon.hvw"), tryon_from_merged(merged, mg_tryon, mg_seed));
                out.output("tryon", out.path("tryon.hvw"));
            }
            out.manifest("merge", {{"base", mg_base}, {"inp", mg_inp}, {"ds", mg_ds}, {"alpha", mg_alpha},
                                   {"beta", mg_beta}, {"tryon_branches", mg_tryon}, {"seed", mg_seed}});
        } else if (*se) {
            Objective obj;
            ModelFamily fam;
            if (se_eval == "quadratic") {
                obj = Quadratic{};
            } else if (se_eval == "plane") {
                obj = plane;
            } else if (se_eval == "file") {
                if (se_grid.empty()) throw InputError("--evaluator file needs --grid");
                obj = file_evaluator(read_text(se_grid));
            } else {
                if (!se_base.empty() || !se_inp.empty() || !se_ds.empty()) {
                    if (se_base.empty() || se_inp.empty() || se_ds.empty())
                        throw InputError("clipstub needs all of --base, --inp and --ds (or none, with --seed)");
                    fam.base = load_weights(se_base);
                    fam.inp = load_weights(se_inp);
                    fam.ds = load_weights(se_ds);
                } else {
                    fam = make_family(se_seed);
                }
                obj = clip_evaluator(fam.base, fam.inp, fam.ds);
            }
            OutputDir out(se_out);
            const SearchResult r = greedy_search(obj, se_delta);
            json traj = json::array(), evals = json::array();
            for (const auto& e : r.trajectory) traj.push_back({{"point", coeffs(e.point)}, {"score", e.score}});
            for (const auto& e : r.evaluations) evals.push_back({{"point", coeffs(e.point)}, {"score", e.score}});
            json res{{"best", coeffs(r.best)}, {"score", r.score}, {"trajectory", traj}, {"evaluations", evals}};
            if (se_oracle) {
                const GridResult g = grid_oracle(obj, se_delta);
                res["oracle"] = {{"best", coeffs(g.best)}, {"score", g.score}, {"evaluations", g.evaluations},
                                 {"agrees", g.best == r.best}};
            }
            write_json(out.path("trajectory.json"), res);
            out.output("trajectory", out.path("trajectory.json"));
            out.manifest("search", {{"delta", se_delta}, {"evaluator", se_eval}, {"grid", se_grid}, {"base", se_base},
                                    {"inp", se_inp}, {"ds", se_ds}, {"seed", se_seed}, {"oracle", se_oracle}},
                         {{"best", coeffs(r.best)}, {"score", r.score}});
        } else if (*mk) {
            const PoseKeypoints kp = load_keypoints(mk_kp);
            const AgnosticMask base = build_agnostic_mask(kp, mk_h, mk_w);
            OutputDir out(mk_out);
            json cfg{{"keypoints", mk_kp}, {"height", mk_h}, {"width", mk_w}, {"person", mk_person}};
            json res;
            AgnosticMask m = base;
            std::string command = "mask build";
            if (*mk_aug) {
                command = "mask augment";
                cfg["seed"] = mk_seed;
                cfg["draws"] = mk_draws;
                Rng rng(mk_seed);
                json draws = json::array();
                int triggered = 0;
                for (int i = 0; i < mk_draws; ++i) {
                    const Elongation e = elongate_train(base, rng);
                    if (i == 0) m = e.mask;
                    triggered += e.triggered ? 1 : 0;
                    draws.push_back({{"triggered", e.triggered}, {"factor", e.factor}, {"height", e.mask.bbox.height()}});
                }
                res["draws"] = draws;
                res["trigger_rate"] = static_cast<double>(triggered) / mk_draws;
            } else if (*mk_adapt) {
                command = "mask adapt";
                cfg["garment"] = mk_garment;
                const BBox gb = garment_bbox(read_ppm(mk_garment));
                const double sigma = static_cast<double>(gb.height()) / static_cast<double>(gb.width());
                m = elongate_infer(base, static_cast<double>(gb.width()), static_cast<double>(gb.height()));
                res["sigma"] = sigma;
                res["elongated"] = !(m.bbox == base.bbox);
            }
            write_pgm(out.path("mask.pgm"), m.mask);
            out.output("mask", out.path("mask.pgm"));
            if (!mk_person.empty()) {
                write_ppm(out.path("agnostic.ppm"), apply_mask(read_ppm(mk_person), m));
                out.output("agnostic", out.path("agnostic.ppm"));
            }
            res["bbox"] = {m.bbox.top, m.bbox.left, m.bbox.bottom, m.bbox.right};
            out.manifest(command, cfg, res);
        } else if (*sy) {
            OutputDir out(sy_out);
            const Rng rng(sy_seed);
            const auto samples = synth_dataset(sy_n, rng, SynthConfig{64, 48, sy_garments});
            Rng aug_rng = rng.fork(0xA06);
            json index = json::array();
            for (size_t i = 0; i < samples.size(); ++i) {
                const std::string stem = "sample" + std::to_string(i);
                auto emit = [&](const Sample& s, const std::string& st) {
                    write_ppm(out.path(st + "_person.ppm"), s.person);
                    out.output(st + "_person", out.path(st + "_person.ppm"));
                    for (size_t g = 0; g < s.garments.size(); ++g) {
                        const std::string name = st + "_garment" + std::to_string(g);
                        write_ppm(out.path(name + ".ppm"), s.garments[g]);
                        out.output(name, out.path(name + ".ppm"));
                    }
                    save_keypoints(out.path(st + "_keypoints.json"), s.keypoints);
                    out.output(st + "_keypoints", out.path(st + "_keypoints.json"));
                    index.push_back({{"stem", st}, {"prompt", s.prompt}, {"hash", hex64(sample_hash(s))}});
                };
                emit(samples[i], stem);
                if (sy_augment) {
                    const Augmented a = augment(samples[i], AugmentPolicy{}, aug_rng);
                    emit(a.sample, stem + "_aug");
                    index.back()["augment"] = {{"flip", a.draw.flip}, {"pad_scale", a.draw.pad_scale},
                                               {"hue_deg", a.draw.hue_deg}, {"contrast", a.draw.contrast_factor}};
                }
            }
            write_json(out.path("index.json"), index);
            out.manifest("synth", {{"n", sy_n}, {"garments", sy_garments}, {"seed", sy_seed}, {"augment", sy_augment}});
        } else if (*tr) {
            WeightMap w;
            if (!tr_ckpt.empty()) {
                w = load_weights(tr_ckpt);
            } else {
                TryOnConfig cfg;
                cfg.branches = tr_branches;
                w = init_tryon(cfg, tr_seed);
            }
            const int branches = infer_tryon_config(w).branches;
            if (branches > 2) throw InputError("synthetic training data supports at most 2 garments");
            OutputDir out(tr_out);
            tc.seed = tr_seed;
            tc.fixed_draw = tc.single_batch;
            const auto data = synth_dataset(tr_n, Rng(tr_seed).fork(0xDA7A), SynthConfig{64, 48, branches});
            const TrainLog log = train_toy(w, data, tc, [](int step, double loss) {
                if (step % 25 == 0) std::cerr << "step " << step << " loss " << loss << "\n";
            });
            write_loss_csv(out.path("loss.csv"), log, tc.optimizer.lr);
            save_weights(out.path("checkpoint.hvw"), w);
            out.output("loss", out.path("loss.csv"));
            out.output("checkpoint", out.path("checkpoint.hvw"));
            out.manifest("train",
                         {{"checkpoint", tr_ckpt}, {"branches", branches}, {"steps", tc.steps}, {"batch_size", tc.batch_size},
                          {"lr", tc.optimizer.lr}, {"dropout", tc.dropout_p}, {"n_samples", tr_n}, {"overfit", tc.single_batch},
                          {"seed", tr_seed}},
                         {{"initial_loss", log.losses.front()}, {"final_loss", log.losses.back()}});
        } else if (*to) {
            const WeightMap w = load_weights(to_ckpt);
            const TryOnModel model(w);
            Sample s;
            s.person = read_ppm(to_person);
            for (const auto& g : to_garments) s.garments.push_back(read_ppm(g));
            s.keypoints = load_keypoints(to_kp);
            if (static_cast<int>(s.garments.size()) != model.config().branches)
                throw InputError("checkpoint expects " + std::to_string(model.config().branches) + " garments, got " +
                                 std::to_string(s.garments.size()));
            if (!to_prompt.empty()) {
                s.prompt = parse_prompt(to_prompt);
            } else {
                const int64_t up = dominant_color(s.garments[0]);
                const int64_t lo = s.garments.size() > 1 ? dominant_color(s.garments[1]) : up;
                s.prompt = {up, lo, kMotifBase, kCategoryBase + (s.garments.size() > 1 ? 1 : 0)};
            }
            OutputDir out(to_out);
            topt.seed = to_seed;
            topt.adapt_mask = !to_no_adapt;
            const TryOnResult r = run_tryon(model, {s}, topt);
            write_ppm(out.path("result.ppm"), unbatch(r.image));
            write_pgm(out.path("mask.pgm"), r.masks[0].mask);
            out.output("result", out.path("result.ppm"));
            out.output("mask", out.path("mask.pgm"));
            out.manifest("tryon",
                         {{"checkpoint", to_ckpt}, {"person", to_person}, {"garments", to_garments}, {"keypoints", to_kp},
                          {"prompt", s.prompt}, {"steps", topt.steps}, {"guidance", topt.guidance},
                          {"adapt_mask", topt.adapt_mask}, {"seed", to_seed}},
                         {{"latent_hash", hex64(content_hash(r.latent))}, {"image_hash", hex64(content_hash(r.image))},
                          {"hydra_calls", r.hydra_calls}});
            std::cout << hex64(content_hash(r.latent)) << "\n";
        } else if (*me) {
            if (me_a.size() != me_b.size()) throw InputError("--a and --b must be given the same number of times");
            std::vector<Tensor> a, b;
            for (const auto& p : me_a) a.push_back(read_ppm(p));
            for (const auto& p : me_b) b.push_back(read_ppm(p));
            OutputDir out(me_out);
            const SsimSummary s = ssim_pairs(a, b);
            write_json(out.path("metrics.json"), {{"ssim", s.values}, {"mean", s.mean}, {"std", s.stddev}});
            out.output("metrics", out.path("metrics.json"));
            out.manifest("metrics", {{"a", me_a}, {"b", me_b}}, {{"ssim_mean", s.mean}, {"ssim_std", s.stddev}});
            std::cout << s.mean << "\n";
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUser;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvariant;
    }
    return kOk;
}
