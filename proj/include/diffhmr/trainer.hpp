#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffhmr/bodymodel.hpp"
#include "diffhmr/diffusion.hpp"
#include "diffhmr/errors.hpp"
#include "diffhmr/io.hpp"
#include "diffhmr/losses.hpp"
#include "diffhmr/nnet.hpp"
#include "diffhmr/rng.hpp"
#include "diffhmr/schedule.hpp"
#include "diffhmr/synthdata.hpp"

namespace diffhmr {

struct TrainConfig {
    size_t T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    size_t batch_size = 64;
    size_t steps = 20000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights;
    uint64_t seed = 42;
    size_t eval_every = 500;
    size_t checkpoint_every = 0;  // 0 = final checkpoint only
    PoseRepr repr = PoseRepr::Sixd;
    size_t hidden = 192;
    size_t blocks = 3;
    size_t embed_dim = 64;
    size_t reg_hidden = 64;

    void validate() const {
        if (T < 1) throw InvalidConfig("T must be >= 1");
        if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
        if (!(learning_rate >= 0.0)) throw InvalidConfig("learning_rate must be >= 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw InvalidConfig("adam betas must lie in [0, 1)");
        if (!(adam_eps > 0.0)) throw InvalidConfig("adam_eps must be > 0");
        if (eval_every == 0) throw InvalidConfig("eval_every must be positive");
        weights.validate();
    }
};

// Adam moments aligned 1:1 with the flat parameter array.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    size_t step = 0;

    explicit OptimizerState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

    void update(std::vector<double>& params, const Gradients& g, double lr, double b1, double b2,
                double eps) {
        if (g.size() != params.size() || m.size() != params.size())
            throw DimensionMismatch("optimizer: array sizes differ");
        ++step;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

struct TrainState {
    TrainConfig cfg;
    nnet::Network net;
    OptimizerState opt;
    size_t step = 0;

    TrainState(TrainConfig c, nnet::NetSpec spec) : cfg(c), net(spec), opt(spec.total) {}
};

struct StepReport {
    double l_diff = 0.0;
    double l_hmr = 0.0;
    double l_all = 0.0;
};

namespace trainer {

// Dataset converted to the training representation, with ground-truth joints
// cached.
struct PreparedData {
    const Dataset* ds = nullptr;
    PoseRepr repr = PoseRepr::Sixd;
    std::vector<std::vector<double>> codes;   // per sample, K * coords_per_joint
    std::vector<std::vector<double>> gt_j3d;  // per sample, K x 3
};

inline std::vector<double> convert_pose(const std::vector<double>& theta6d, PoseRepr repr,
                                        size_t K) {
    if (repr == PoseRepr::Sixd) return theta6d;
    std::vector<double> out(K * 3);
    for (size_t k = 0; k < K; ++k) {
        Rot6D s{{theta6d[k * 6], theta6d[k * 6 + 1], theta6d[k * 6 + 2], theta6d[k * 6 + 3],
                 theta6d[k * 6 + 4], theta6d[k * 6 + 5]}};
        AxisAngle aa = canonicalize(rotmat_to_axisangle(sixd_to_rotmat(s)));
        for (int a = 0; a < 3; ++a) out[k * 3 + a] = aa.v[a];
    }
    return out;
}

inline PreparedData prepare(const Dataset& ds, const BodyModel& model, PoseRepr repr) {
    if (ds.K != model.K) throw FormatError("dataset K does not match body model K");
    PreparedData p;
    p.ds = &ds;
    p.repr = repr;
    p.codes.reserve(ds.samples.size());
    p.gt_j3d.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        p.codes.push_back(convert_pose(s.theta0, repr, ds.K));
        auto verts = body::mesh(model, s.theta0, PoseRepr::Sixd, ShapeParams{s.beta});
        p.gt_j3d.push_back(body::joints3d(model, verts));
    }
    return p;
}

inline nnet::NetSpec spec_for(const TrainConfig& cfg, size_t K) {
    return nnet::NetSpec::make(K * coords_per_joint(cfg.repr), 3 * K, cfg.hidden, cfg.blocks,
                               cfg.embed_dim, cfg.reg_hidden);
}

inline TrainState make_state(const TrainConfig& cfg, size_t K) {
    cfg.validate();
    TrainState st(cfg, spec_for(cfg, K));
    st.net.init(Rng::derive(cfg.seed, 0x1417ULL).next_u64());
    return st;
}

// Per-sample draw of the stochastic training quantities.
struct BatchDraw {
    size_t idx = 0;
    size_t t = 1;
    std::vector<double> eps;
};

// Batch mean of L_all = L_diff + L_hmr. Per draw: noise the pose via the
// closed-form forward sample, predict eps_hat, deduce theta0_hat from it,
// regress shape/camera, and score. When `grads` is given, analytic gradients
// for every parameter are accumulated (L_hmr flows through predict_x0 into
// the denoiser and through the body model into both heads).
inline StepReport batch_loss_and_grad(const nnet::Network& net, const TrainConfig& cfg,
                                      const PreparedData& data, const BodyModel& model,
                                      const NoiseSchedule& sched,
                                      const std::vector<BatchDraw>& draws, Gradients* grads) {
    size_t D = net.spec().pose_dim;
    StepReport rep;
    double inv_b = 1.0 / static_cast<double>(draws.size());

    for (const auto& draw : draws) {
        const Sample& s = data.ds->samples[draw.idx];
        const auto& code = data.codes[draw.idx];

        auto x_t = diffusion::forward_sample(code, draw.t, draw.eps, sched);
        auto dtr = net.denoiser_forward_traced(x_t, draw.t, s.z);
        const auto& eps_hat = dtr.out;

        double l_diff = losses::diffusion_loss(draw.eps, eps_hat);
        auto theta_hat = diffusion::predict_x0(x_t, draw.t, eps_hat, sched);
        double c2 = std::sqrt(1.0 / sched.alpha_bar(draw.t) - 1.0);

        auto rtr = net.regressor_forward_traced(s.z);
        std::vector<double> beta_hat(rtr.out.begin(), rtr.out.begin() + model.shape_dim);
        CameraParams cam_hat{rtr.out[model.shape_dim], rtr.out[model.shape_dim + 1],
                             rtr.out[model.shape_dim + 2]};

        std::vector<double> dtheta(D, 0.0), dbeta(model.shape_dim, 0.0), dcam(3, 0.0);
        auto terms = losses::hmr_loss_detail(
            model, cfg.repr, theta_hat, code, beta_hat, s.beta, cam_hat, s.keypoints2d,
            s.occlusion_mask, data.gt_j3d[draw.idx], cfg.weights, grads ? &dtheta : nullptr,
            grads ? &dbeta : nullptr, grads ? &dcam : nullptr);

        if (grads) {
            std::vector<double> deps(D);
            for (size_t i = 0; i < D; ++i)
                deps[i] = (2.0 * (eps_hat[i] - draw.eps[i]) / static_cast<double>(D) -
                           c2 * dtheta[i]) *
                          inv_b;
            net.denoiser_backward(dtr, deps, *grads);

            std::vector<double> dreg(model.shape_dim + 3);
            for (size_t i = 0; i < model.shape_dim; ++i) dreg[i] = dbeta[i] * inv_b;
            for (int i = 0; i < 3; ++i) dreg[model.shape_dim + i] = dcam[i] * inv_b;
            net.regressor_backward(rtr, dreg, *grads);
        }

        rep.l_diff += l_diff * inv_b;
        rep.l_hmr += terms.total * inv_b;
    }
    rep.l_all = rep.l_diff + rep.l_hmr;
    return rep;
}

// Deterministic function of (cfg.seed, st.step): draws the batch, uniform t
// per sample, and one Adam update.
inline StepReport train_step(TrainState& st, const PreparedData& data, const BodyModel& model,
                             const NoiseSchedule& sched) {
    const auto& cfg = st.cfg;
    size_t n = data.codes.size();
    if (n == 0) throw InvalidConfig("empty dataset");
    size_t D = st.net.spec().pose_dim;

    Rng rng = Rng::derive(cfg.seed, 0x57e9ULL, st.step);
    std::vector<BatchDraw> draws(cfg.batch_size);
    for (auto& d : draws) {
        d.idx = rng.uniform_index(n);
        d.t = 1 + rng.uniform_index(sched.T());
        d.eps = rng.normal_vec(D);
    }

    Gradients grads(st.net.params().size(), 0.0);
    auto rep = batch_loss_and_grad(st.net, cfg, data, model, sched, draws, &grads);
    if (!std::isfinite(rep.l_all))
        throw NonFiniteLoss("step " + std::to_string(st.step) + ": L_diff=" +
                            std::to_string(rep.l_diff) + " L_hmr=" + std::to_string(rep.l_hmr));

    st.opt.update(st.net.params(), grads, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
    ++st.step;
    return rep;
}

// Finite-difference check of the full training gradient (denoiser, regressor,
// body-model chain) at a randomly perturbed parameter point.
inline nnet::GradcheckReport run_gradcheck(const TrainConfig& cfg_in, size_t K, size_t batch,
                                           double fd_step, uint64_t seed) {
    TrainConfig cfg = cfg_in;
    auto model = body::build_default_model(seed);
    DatasetConfig dc;
    dc.n_samples = batch;
    dc.seed = seed;
    dc.occlusion_rate = 0.2;
    dc.ambiguous_fraction = 0.0;
    auto ds = synthdata::generate(dc, model);
    auto data = prepare(ds, model, cfg.repr);
    auto sched = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

    TrainState st = make_state(cfg, K);
    Rng prng = Rng::derive(seed, 0x6a0dULL);
    for (auto& p : st.net.params()) p += 0.02 * prng.normal();

    std::vector<BatchDraw> draws(batch);
    for (size_t b = 0; b < batch; ++b) {
        draws[b].idx = b % ds.samples.size();
        draws[b].t = 1 + prng.uniform_index(sched.T());
        draws[b].eps = prng.normal_vec(st.net.spec().pose_dim);
    }

    Gradients grads(st.net.params().size(), 0.0);
    batch_loss_and_grad(st.net, cfg, data, model, sched, draws, &grads);
    auto loss = [&]() {
        return batch_loss_and_grad(st.net, cfg, data, model, sched, draws, nullptr).l_all;
    };
    return nnet::gradcheck(st.net, loss, grads, fd_step, seed + 1);
}

// Checkpoint container: JSON manifest line, then f32 blobs for parameters and
// Adam moments. Saving rounds the live state to the serialized precision so a
// resumed run continues from exactly the persisted values.
inline void save_checkpoint(TrainState& st, const std::string& path) {
    auto quantize = [](std::vector<double>& v) { v = io::to_f64(io::to_f32(v)); };
    quantize(st.net.params());
    quantize(st.opt.m);
    quantize(st.opt.v);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : st.net.spec().layers)
        layers.push_back({{"name", l.name}, {"offset", l.offset}, {"rows", l.rows}, {"cols", l.cols}});
    const auto& cfg = st.cfg;
    nlohmann::json manifest = {
        {"magic", "DIFFPOSE-CKPT/1"},
        {"param_count", st.net.params().size()},
        {"layers", layers},
        {"arch",
         {{"pose_dim", st.net.spec().pose_dim},
          {"cond_dim", st.net.spec().cond_dim},
          {"hidden", cfg.hidden},
          {"blocks", cfg.blocks},
          {"embed_dim", cfg.embed_dim},
          {"reg_hidden", cfg.reg_hidden}}},
        {"representation", pose_repr_name(cfg.repr)},
        {"schedule", {{"T", cfg.T}, {"beta_start", cfg.beta_start}, {"beta_end", cfg.beta_end}}},
        {"train",
         {{"batch_size", cfg.batch_size},
          {"steps", cfg.steps},
          {"learning_rate", cfg.learning_rate},
          {"adam", {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}},
          {"weights",
           {cfg.weights.w_pose, cfg.weights.w_j3d, cfg.weights.w_j2d, cfg.weights.w_beta}},
          {"eval_every", cfg.eval_every},
          {"checkpoint_every", cfg.checkpoint_every}}},
        {"seed_history", {cfg.seed}},
        {"step", st.step},
        {"opt_step", st.opt.step},
        {"blobs", {"params", "adam_m", "adam_v"}},
    };
    os << manifest.dump() << "\n";
    io::write_f32_blob(os, st.net.params());
    io::write_f32_blob(os, st.opt.m);
    io::write_f32_blob(os, st.opt.v);
    if (!os) throw IoError("failed writing checkpoint " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("missing checkpoint manifest");
    nlohmann::json mf;
    try {
        mf = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (mf.value("magic", "") != "DIFFPOSE-CKPT/1") throw FormatError("not a DIFFPOSE-CKPT/1 file");

    TrainConfig cfg;
    const auto& arch = mf.at("arch");
    cfg.hidden = arch.at("hidden").get<size_t>();
    cfg.blocks = arch.at("blocks").get<size_t>();
    cfg.embed_dim = arch.at("embed_dim").get<size_t>();
    cfg.reg_hidden = arch.at("reg_hidden").get<size_t>();
    cfg.repr = pose_repr_from_name(mf.at("representation").get<std::string>());
    const auto& sc = mf.at("schedule");
    cfg.T = sc.at("T").get<size_t>();
    cfg.beta_start = sc.at("beta_start").get<double>();
    cfg.beta_end = sc.at("beta_end").get<double>();
    const auto& tr = mf.at("train");
    cfg.batch_size = tr.at("batch_size").get<size_t>();
    cfg.steps = tr.at("steps").get<size_t>();
    cfg.learning_rate = tr.at("learning_rate").get<double>();
    cfg.adam_beta1 = tr.at("adam").at(0).get<double>();
    cfg.adam_beta2 = tr.at("adam").at(1).get<double>();
    cfg.adam_eps = tr.at("adam").at(2).get<double>();
    cfg.weights.w_pose = tr.at("weights").at(0).get<double>();
    cfg.weights.w_j3d = tr.at("weights").at(1).get<double>();
    cfg.weights.w_j2d = tr.at("weights").at(2).get<double>();
    cfg.weights.w_beta = tr.at("weights").at(3).get<double>();
    cfg.eval_every = tr.at("eval_every").get<size_t>();
    cfg.checkpoint_every = tr.at("checkpoint_every").get<size_t>();
    cfg.seed = mf.at("seed_history").at(0).get<uint64_t>();

    size_t pose_dim = arch.at("pose_dim").get<size_t>();
    size_t cond_dim = arch.at("cond_dim").get<size_t>();
    auto spec = nnet::NetSpec::make(pose_dim, cond_dim, cfg.hidden, cfg.blocks, cfg.embed_dim,
                                    cfg.reg_hidden);
    size_t count = mf.at("param_count").get<size_t>();
    if (count != spec.total) throw FormatError("checkpoint param_count does not match manifest arch");

    TrainState st(cfg, spec);
    st.step = mf.at("step").get<size_t>();
    st.opt.step = mf.at("opt_step").get<size_t>();
    st.net.params() = io::read_f32_blob(is, count);
    st.opt.m = io::read_f32_blob(is, count);
    st.opt.v = io::read_f32_blob(is, count);
    return st;
}

struct TrainReport {
    double initial_smoothed_ldiff = 0.0;
    double final_smoothed_ldiff = 0.0;
    StepReport last;
};

using ProgressFn = std::function<void(size_t step, const StepReport&)>;

// Runs (or resumes) training to cfg.steps and writes the checkpoint. The
// smoothing window for the loss trend is 100 steps.
inline TrainReport train(TrainState& st, const Dataset& ds, const BodyModel& model,
                         const std::string& out_path, const ProgressFn& progress = nullptr) {
    st.cfg.validate();
    auto sched = linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
    auto data = prepare(ds, model, st.cfg.repr);

    TrainReport rep;
    size_t window = 100;
    std::vector<double> first, last;
    while (st.step < st.cfg.steps) {
        auto r = train_step(st, data, model, sched);
        rep.last = r;
        if (first.size() < window) first.push_back(r.l_diff);
        last.push_back(r.l_diff);
        if (last.size() > window) last.erase(last.begin());
        if (progress && (st.step % st.cfg.eval_every == 0 || st.step == st.cfg.steps))
            progress(st.step, r);
        if (st.cfg.checkpoint_every > 0 && st.step % st.cfg.checkpoint_every == 0 &&
            st.step < st.cfg.steps)
            save_checkpoint(st, out_path);
    }
    save_checkpoint(st, out_path);
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double a = 0.0;
        for (double x : v) a += x;
        return a / static_cast<double>(v.size());
    };
    rep.initial_smoothed_ldiff = mean(first);
    rep.final_smoothed_ldiff = mean(last);
    return rep;
}

struct MetricsRow {
    size_t n = 0;
    double mpjpe_mm = 0.0;
    double pa_mpjpe_mm = 0.0;
    double pve_mm = 0.0;
    std::string subset;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;

    std::string to_csv() const {
        std::string out = "n,MPJPE_mm,PA-MPJPE_mm,PVE_mm,subset\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%s\n", r.n, r.mpjpe_mm,
                          r.pa_mpjpe_mm, r.pve_mm, r.subset.c_str());
            out += buf;
        }
        return out;
    }
};

// Multi-hypothesis evaluation: draw max(n_list) hypotheses per sample from
// deterministic per-(sample, hypothesis) seeds, score each, and report the
// min over the first n for every requested n. Per-sample work may fan out
// across threads; results are identical to the serial order.
inline MetricsTable evaluate(const TrainState& st, const Dataset& ds, const BodyModel& model,
                             const std::vector<size_t>& n_list, uint64_t seed,
                             size_t n_threads = 0) {
    if (n_list.empty()) throw InvalidConfig("n_list must be nonempty");
    for (size_t n : n_list)
        if (n < 1) throw InvalidConfig("hypothesis counts must be >= 1");
    size_t max_n = *std::max_element(n_list.begin(), n_list.end());
    auto sched = linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
    auto data = prepare(ds, model, st.cfg.repr);
    size_t D = st.net.spec().pose_dim;
    size_t n_samples = ds.samples.size();

    // errs[sample][hyp] = (mpjpe, pa, pve)
    std::vector<std::vector<std::array<double, 3>>> errs(
        n_samples, std::vector<std::array<double, 3>>(max_n));

    auto eval_sample = [&](size_t i) {
        const Sample& s = ds.samples[i];
        auto gt_verts = body::mesh(model, s.theta0, PoseRepr::Sixd, ShapeParams{s.beta});
        const auto& gt_j3d = data.gt_j3d[i];
        std::vector<double> gt_verts_aligned = gt_verts;
        for (size_t v = 0; v < model.V; ++v)
            for (int a = 0; a < 3; ++a) gt_verts_aligned[v * 3 + a] -= gt_j3d[a];

        auto [beta_hat, cam_vals] = st.net.regressor_forward(s.z);
        for (size_t h = 0; h < max_n; ++h) {
            uint64_t hyp_seed = Rng::derive(seed, i, h).next_u64();
            auto theta_hat = diffusion::sample(
                [&](const PoseState& x, size_t t) { return st.net.denoiser_forward(x, t, s.z); }, D,
                sched, hyp_seed);
            auto verts = body::mesh(model, theta_hat, st.cfg.repr, ShapeParams{beta_hat});
            auto j3d = body::joints3d(model, verts);
            std::vector<double> verts_aligned = verts;
            for (size_t v = 0; v < model.V; ++v)
                for (int a = 0; a < 3; ++a) verts_aligned[v * 3 + a] -= j3d[a];
            errs[i][h] = {losses::mpjpe(j3d, gt_j3d), losses::pa_mpjpe(j3d, gt_j3d),
                          losses::pve(verts_aligned, gt_verts_aligned)};
        }
    };

    if (n_threads == 0) n_threads = std::min<size_t>(std::thread::hardware_concurrency(), 8);
    if (n_threads <= 1 || n_samples < 2) {
        for (size_t i = 0; i < n_samples; ++i) eval_sample(i);
    } else {
        std::vector<std::thread> pool;
        for (size_t w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w] {
                for (size_t i = w; i < n_samples; i += n_threads) eval_sample(i);
            });
        for (auto& th : pool) th.join();
    }

    MetricsTable table;
    for (const std::string& subset : {std::string("all"), std::string("occluded")}) {
        for (size_t n : n_list) {
            MetricsRow row;
            row.n = n;
            row.subset = subset;
            size_t count = 0;
            for (size_t i = 0; i < n_samples; ++i) {
                if (subset == "occluded" && !ds.samples[i].has_occlusion()) continue;
                std::array<double, 3> best = errs[i][0];
                for (size_t h = 1; h < n; ++h)
                    for (int a = 0; a < 3; ++a) best[a] = std::min(best[a], errs[i][h][a]);
                row.mpjpe_mm += best[0];
                row.pa_mpjpe_mm += best[1];
                row.pve_mm += best[2];
                ++count;
            }
            if (count > 0) {
                row.mpjpe_mm /= static_cast<double>(count);
                row.pa_mpjpe_mm /= static_cast<double>(count);
                row.pve_mm /= static_cast<double>(count);
            }
            table.rows.push_back(row);
        }
    }
    return table;
}

}  // namespace trainer
}  // namespace diffhmr
