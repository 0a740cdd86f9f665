// diffhmr: command-line driver for synthetic-data generation, diffusion
// training, multi-hypothesis sampling, evaluation, gradient checking, and
// noise-schedule inspection.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "diffhmr/config.hpp"
#include "diffhmr/diffusion.hpp"
#include "diffhmr/losses.hpp"
#include "diffhmr/trainer.hpp"

namespace {

using namespace diffhmr;

int exit_code_for(const Error& e) {
    if (e.kind() == "IoError" || e.kind() == "FormatError") return 3;
    return 2;
}

void require_match(const Dataset& ds, const BodyModel& model) {
    if (ds.K != model.K)
        throw FormatError("dataset K=" + std::to_string(ds.K) + " does not match model K=" +
                          std::to_string(model.K));
}

int cmd_gen_data(const std::string& config_path, const std::string& out, int64_t seed_override) {
    RunConfig cfg = config::load(config_path);
    if (seed_override >= 0) cfg.dataset.seed = static_cast<uint64_t>(seed_override);
    auto model = body::build_default_model(cfg.model_seed, cfg.model_vertices);
    auto ds = synthdata::generate(cfg.dataset, model);
    synthdata::save(ds, out);

    size_t occluded = 0, paired = 0;
    for (const auto& s : ds.samples) {
        if (s.has_occlusion()) ++occluded;
        if (s.pair_id >= 0) ++paired;
    }
    std::printf("samples=%zu occluded=%zu ambiguous_pair_members=%zu out=%s\n", ds.samples.size(),
                occluded, paired, out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out,
              const std::string& resume, int64_t steps_override, int64_t seed_override,
              const std::string& repr_override) {
    RunConfig cfg = config::load(config_path);
    if (steps_override >= 0) cfg.train.steps = static_cast<size_t>(steps_override);
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    if (!repr_override.empty()) cfg.train.repr = pose_repr_from_name(repr_override);

    auto ds = synthdata::load(data_path);
    auto model = body::build_default_model(cfg.model_seed, cfg.model_vertices);
    require_match(ds, model);

    TrainState st = resume.empty() ? trainer::make_state(cfg.train, model.K)
                                   : trainer::load_checkpoint(resume);
    if (!resume.empty()) st.cfg.steps = cfg.train.steps;

    auto rep = trainer::train(st, ds, model, out, [](size_t step, const StepReport& r) {
        std::printf("step=%zu L_diff=%.6f L_hmr=%.6f L_all=%.6f\n", step, r.l_diff, r.l_hmr,
                    r.l_all);
    });
    double drop = rep.initial_smoothed_ldiff > 0.0
                      ? 100.0 * (1.0 - rep.final_smoothed_ldiff / rep.initial_smoothed_ldiff)
                      : 0.0;
    std::printf("smoothed_L_diff initial=%.6f final=%.6f drop_pct=%.2f checkpoint=%s\n",
                rep.initial_smoothed_ldiff, rep.final_smoothed_ldiff, drop, out.c_str());
    return 0;
}

int cmd_sample(const std::string& config_path, const std::string& ckpt_path,
               const std::string& data_path, size_t index, size_t n, uint64_t seed,
               const std::string& out, std::string plot_csv) {
    RunConfig cfg = config::load(config_path);
    auto st = trainer::load_checkpoint(ckpt_path);
    auto ds = synthdata::load(data_path);
    auto model = body::build_default_model(cfg.model_seed, cfg.model_vertices);
    require_match(ds, model);
    if (index >= ds.samples.size()) throw InvalidConfig("--index out of range");
    if (n < 1) throw InvalidConfig("--n must be >= 1");
    if (plot_csv.empty()) plot_csv = out + ".csv";

    const Sample& s = ds.samples[index];
    auto sched = linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
    size_t D = st.net.spec().pose_dim;
    auto [beta_hat, cam_vals] = st.net.regressor_forward(s.z);
    CameraParams cam_hat{cam_vals[0], cam_vals[1], cam_vals[2]};

    std::ofstream os(out, std::ios::binary);
    if (!os) throw IoError("cannot open " + out + " for writing");
    nlohmann::json header = {{"magic", "DIFFPOSE-HYP/1"},
                             {"K", model.K},
                             {"n", n},
                             {"index", index},
                             {"seed", seed},
                             {"representation", pose_repr_name(st.cfg.repr)}};
    os << header.dump() << "\n";

    std::ofstream pcsv(plot_csv);
    if (!pcsv) throw IoError("cannot open " + plot_csv + " for writing");
    pcsv << "hypothesis,joint,x,y,z\n";

    std::vector<std::vector<Mat3>> joint_rots(n);
    std::vector<double> vis_err(n, 0.0);
    size_t cpj = coords_per_joint(st.cfg.repr);
    for (size_t h = 0; h < n; ++h) {
        uint64_t hyp_seed = Rng::derive(seed, index, h).next_u64();
        auto theta = diffusion::sample(
            [&](const PoseState& x, size_t t) { return st.net.denoiser_forward(x, t, s.z); }, D,
            sched, hyp_seed);
        auto verts = body::mesh(model, theta, st.cfg.repr, ShapeParams{beta_hat});
        auto j3d = body::joints3d(model, verts);
        auto j2d = body::project(j3d, cam_hat);

        nlohmann::json rec = {{"theta", io::encode_f32_base64(theta)},
                              {"j3d", io::encode_f32_base64(j3d)},
                              {"j2d", io::encode_f32_base64(j2d)},
                              {"vertices", io::encode_f32_base64(verts)}};
        os << rec.dump() << "\n";
        for (size_t k = 0; k < model.K; ++k) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.6f,%.6f,%.6f\n", h, k, j3d[k * 3],
                          j3d[k * 3 + 1], j3d[k * 3 + 2]);
            pcsv << buf;
        }

        joint_rots[h].resize(model.K);
        for (size_t k = 0; k < model.K; ++k)
            joint_rots[h][k] = decode_joint(st.cfg.repr, &theta[k * cpj]);
        size_t n_vis = 0;
        for (size_t k = 0; k < model.K; ++k) {
            if (s.occlusion_mask[k] == 0.0) continue;
            double dx = j2d[k * 2] - s.keypoints2d[k * 2];
            double dy = j2d[k * 2 + 1] - s.keypoints2d[k * 2 + 1];
            vis_err[h] += std::sqrt(dx * dx + dy * dy);
            ++n_vis;
        }
        if (n_vis > 0) vis_err[h] /= static_cast<double>(n_vis);
    }
    if (!os || !pcsv) throw IoError("failed writing hypothesis outputs");

    // Spread diagnostics: rotation disagreement at occluded joints vs
    // reprojection agreement at visible ones.
    double max_geo = 0.0;
    for (size_t k = 0; k < model.K; ++k) {
        if (s.occlusion_mask[k] != 0.0) continue;
        for (size_t a = 0; a < n; ++a)
            for (size_t b = a + 1; b < n; ++b)
                max_geo = std::max(max_geo, geodesic_distance(joint_rots[a][k], joint_rots[b][k]));
    }
    double mean_vis = 0.0;
    for (double e : vis_err) mean_vis += e;
    mean_vis /= static_cast<double>(n);
    std::printf("hypotheses=%zu occluded_joint_max_pairwise_geodesic=%.6f "
                "visible_mean_reprojection_error=%.6f out=%s plot=%s\n",
                n, max_geo, mean_vis, out.c_str(), plot_csv.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_path, const std::string& n_list_str, uint64_t seed,
             const std::string& out) {
    RunConfig cfg = config::load(config_path);
    auto st = trainer::load_checkpoint(ckpt_path);
    auto ds = synthdata::load(data_path);
    auto model = body::build_default_model(cfg.model_seed, cfg.model_vertices);
    require_match(ds, model);

    std::vector<size_t> n_list;
    {
        std::string cur;
        for (char c : n_list_str + ",") {
            if (c == ',') {
                if (!cur.empty()) {
                    try {
                        n_list.push_back(std::stoul(cur));
                    } catch (const std::exception&) {
                        throw InvalidConfig("--n-list must be comma-separated integers");
                    }
                    cur.clear();
                }
            } else {
                cur += c;
            }
        }
        if (n_list.empty()) throw InvalidConfig("--n-list is empty");
    }

    auto table = trainer::evaluate(st, ds, model, n_list, seed, cfg.eval_threads);
    std::string csv = table.to_csv();
    std::fputs(csv.c_str(), stdout);
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw IoError("cannot open " + out + " for writing");
        os << csv;
    }
    return 0;
}

int cmd_gradcheck(size_t joints, size_t hidden, size_t blocks, size_t batch, double fd_step,
                  uint64_t seed, const std::string& repr) {
    TrainConfig cfg;
    cfg.hidden = hidden;
    cfg.blocks = blocks;
    cfg.repr = pose_repr_from_name(repr);
    auto rep = trainer::run_gradcheck(cfg, joints, batch, fd_step, seed);
    std::printf("max rel err = %.6e at %s (checked %zu params)\n", rep.max_rel_err,
                rep.worst_param.c_str(), rep.checked);
    return 0;
}

int cmd_schedule_dump(size_t T, double beta_start, double beta_end) {
    auto s = linear_schedule(T, beta_start, beta_end);
    std::printf("t,beta,alpha,alpha_bar,snr,posterior_variance\n");
    for (size_t t = 1; t <= s.T(); ++t)
        std::printf("%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", t, s.beta(t), s.alpha(t),
                    s.alpha_bar(t), s.snr(t), s.posterior_variance(t));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffhmr: generative pose recovery via pose-space diffusion"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, ckpt_path, resume_path, n_list = "1,5,10,25";
    std::string repr, plot_csv;
    int64_t steps_override = -1, seed_override = -1;
    size_t index = 0, n = 1, joints = 24, hidden = 192, blocks = 3, batch = 4, T = 100;
    uint64_t seed = 0;
    double fd_step = 1e-4, beta_start = 1e-4, beta_end = 0.02;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "JSON run config");
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_option("--seed", seed_override, "override dataset seed");

    auto* train = app.add_subcommand("train", "train the denoiser and regressor");
    train->add_option("--config", config_path, "JSON run config");
    train->add_option("--data", data_path, "dataset path")->required();
    train->add_option("--out", out_path, "checkpoint path")->required();
    train->add_option("--resume", resume_path, "resume from checkpoint");
    train->add_option("--steps", steps_override, "override step count");
    train->add_option("--seed", seed_override, "override training seed");
    train->add_option("--representation", repr, "6d or axis-angle");

    auto* smp = app.add_subcommand("sample", "draw pose hypotheses for one dataset record");
    smp->add_option("--config", config_path, "JSON run config");
    smp->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    smp->add_option("--data", data_path, "dataset path")->required();
    smp->add_option("--index", index, "sample index")->required();
    smp->add_option("--n", n, "number of hypotheses")->required();
    smp->add_option("--seed", seed, "sampling seed")->required();
    smp->add_option("--out", out_path, "hypotheses output path")->required();
    smp->add_option("--plot-csv", plot_csv, "plot-data CSV path (default: <out>.csv)");

    auto* ev = app.add_subcommand("eval", "multi-hypothesis metric table");
    ev->add_option("--config", config_path, "JSON run config");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    ev->add_option("--data", data_path, "dataset path")->required();
    ev->add_option("--n-list", n_list, "comma-separated hypothesis counts");
    ev->add_option("--seed", seed, "evaluation seed")->required();
    ev->add_option("--out", out_path, "also write the CSV here");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full gradient");
    gc->add_option("--joints", joints, "joint count");
    gc->add_option("--hidden", hidden, "denoiser width");
    gc->add_option("--blocks", blocks, "residual block count");
    gc->add_option("--batch", batch, "batch size");
    gc->add_option("--fd-step", fd_step, "finite-difference step");
    gc->add_option("--seed", seed, "seed");
    gc->add_option("--representation", repr, "6d or axis-angle")->default_val("6d");

    auto* sd = app.add_subcommand("schedule-dump", "emit the noise-schedule table as CSV");
    sd->add_option("--T", T, "step count")->required();
    sd->add_option("--beta-start", beta_start, "first beta")->required();
    sd->add_option("--beta-end", beta_end, "last beta")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "ERROR:2: %s\n", e.what());
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed_override);
        if (train->parsed())
            return cmd_train(config_path, data_path, out_path, resume_path, steps_override,
                             seed_override, repr);
        if (smp->parsed())
            return cmd_sample(config_path, ckpt_path, data_path, index, n, seed, out_path,
                              plot_csv);
        if (ev->parsed()) return cmd_eval(config_path, ckpt_path, data_path, n_list, seed, out_path);
        if (gc->parsed())
            return cmd_gradcheck(joints, hidden, blocks, batch, fd_step, seed,
                                 repr.empty() ? "6d" : repr);
        if (sd->parsed()) return cmd_schedule_dump(T, beta_start, beta_end);
    } catch (const Error& e) {
        int code = exit_code_for(e);
        std::fprintf(stderr, "ERROR:%d: %s\n", code, e.what());
        return code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ERROR:2: %s\n", e.what());
        return 2;
    }
    return 2;
}
