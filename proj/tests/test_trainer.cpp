#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffhmr/config.hpp"
#include "diffhmr/trainer.hpp"

using namespace diffhmr;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig c;
    c.T = 10;
    c.batch_size = 4;
    c.steps = 10;
    c.hidden = 24;
    c.blocks = 1;
    c.embed_dim = 8;
    c.reg_hidden = 8;
    c.eval_every = 5;
    return c;
}

Dataset tiny_dataset(const BodyModel& m, size_t n = 8, uint64_t seed = 3) {
    DatasetConfig dc;
    dc.n_samples = n;
    dc.seed = seed;
    dc.occlusion_rate = 0.1;
    dc.ambiguous_fraction = 0.25;
    return synthdata::generate(dc, m);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("adam single-parameter hand trajectory") {
    // One parameter, constant gradient 1: bias-corrected Adam moves by
    // exactly -lr / (1 + eps*...) ~ -lr each step at the start.
    OptimizerState opt(1);
    std::vector<double> p{0.0};
    Gradients g{1.0};
    double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    opt.update(p, g, lr, b1, b2, eps);
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    CHECK(p[0] == Catch::Approx(-lr / (1.0 + eps)).epsilon(1e-12));
    opt.update(p, g, lr, b1, b2, eps);
    // Second step identical for a constant gradient.
    CHECK(p[0] == Catch::Approx(-2.0 * lr / (1.0 + eps)).epsilon(1e-9));
    CHECK(opt.step == 2);
}

TEST_CASE("adam with zero learning rate is a no-op on parameters") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    cfg.learning_rate = 0.0;
    auto st = trainer::make_state(cfg, m.K);
    auto before = st.net.params();
    auto data = trainer::prepare(ds, m, cfg.repr);
    auto sched = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    trainer::train_step(st, data, m, sched);
    CHECK(st.net.params() == before);
    CHECK(st.step == 1);
}

TEST_CASE("training steps are deterministic given the seed") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    auto sched = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    auto data = trainer::prepare(ds, m, cfg.repr);

    auto a = trainer::make_state(cfg, m.K);
    auto b = trainer::make_state(cfg, m.K);
    for (int i = 0; i < 10; ++i) {
        auto ra = trainer::train_step(a, data, m, sched);
        auto rb = trainer::train_step(b, data, m, sched);
        REQUIRE(ra.l_all == rb.l_all);
        REQUIRE(a.net.params() == b.net.params());
    }

    auto cfg2 = cfg;
    cfg2.seed = cfg.seed + 1;
    auto c = trainer::make_state(cfg2, m.K);
    trainer::train_step(c, data, m, sched);
    CHECK(c.net.params() != a.net.params());
}

TEST_CASE("full-pipeline gradient check stays under 1e-3") {
    auto cfg = tiny_train_config();
    auto rep = trainer::run_gradcheck(cfg, 24, 2, 1e-4, 12345);
    INFO("worst " << rep.worst_param << " rel " << rep.max_rel_err);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("axis-angle pipeline gradient check stays under 1e-3") {
    auto cfg = tiny_train_config();
    cfg.repr = PoseRepr::AxisAngleRepr;
    auto rep = trainer::run_gradcheck(cfg, 24, 2, 1e-4, 999);
    INFO("worst " << rep.worst_param << " rel " << rep.max_rel_err);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("checkpoint with zero steps persists the initial state") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    cfg.steps = 0;
    auto st = trainer::make_state(cfg, m.K);
    auto init = io::to_f64(io::to_f32(st.net.params()));
    std::string path = "test_ckpt_zero.bin";
    trainer::train(st, ds, m, path);
    auto st2 = trainer::load_checkpoint(path);
    CHECK(st2.step == 0);
    CHECK(st2.net.params() == init);
    CHECK(st2.cfg.T == cfg.T);
    CHECK(st2.cfg.repr == cfg.repr);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint round trip preserves config and state") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    cfg.repr = PoseRepr::AxisAngleRepr;
    cfg.weights.w_j2d = 0.7;
    auto st = trainer::make_state(cfg, m.K);
    std::string path = "test_ckpt_rt.bin";
    trainer::train(st, ds, m, path);
    auto st2 = trainer::load_checkpoint(path);
    CHECK(st2.step == cfg.steps);
    CHECK(st2.opt.step == st.opt.step);
    CHECK(st2.cfg.repr == PoseRepr::AxisAngleRepr);
    CHECK(st2.cfg.weights.w_j2d == 0.7);
    CHECK(st2.cfg.seed == cfg.seed);
    CHECK(st2.net.params() == st.net.params());
    CHECK(st2.opt.m == st.opt.m);
    CHECK(st2.opt.v == st.opt.v);
    std::remove(path.c_str());
}

TEST_CASE("interrupted training resumes bit-for-bit") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    cfg.steps = 12;
    cfg.checkpoint_every = 4;

    // Uninterrupted run.
    auto full = trainer::make_state(cfg, m.K);
    std::string full_path = "test_ckpt_full.bin";
    trainer::train(full, ds, m, full_path);

    // Interrupted at step 8, resumed from disk.
    auto cfg8 = cfg;
    cfg8.steps = 8;
    auto part = trainer::make_state(cfg8, m.K);
    std::string part_path = "test_ckpt_part.bin";
    trainer::train(part, ds, m, part_path);
    auto resumed = trainer::load_checkpoint(part_path);
    REQUIRE(resumed.step == 8);
    resumed.cfg.steps = 12;
    resumed.cfg.checkpoint_every = 4;
    std::string res_path = "test_ckpt_res.bin";
    trainer::train(resumed, ds, m, res_path);

    CHECK(resumed.step == 12);
    CHECK(resumed.net.params() == full.net.params());
    CHECK(resumed.opt.m == full.opt.m);
    CHECK(resumed.opt.v == full.opt.v);
    CHECK(slurp(full_path) == slurp(res_path));
    std::remove(full_path.c_str());
    std::remove(part_path.c_str());
    std::remove(res_path.c_str());
}

TEST_CASE("non-finite loss raises NonFiniteLoss with step context") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m);
    auto cfg = tiny_train_config();
    auto st = trainer::make_state(cfg, m.K);
    // Poison one parameter.
    st.net.params()[10] = std::numeric_limits<double>::quiet_NaN();
    auto data = trainer::prepare(ds, m, cfg.repr);
    auto sched = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    CHECK_THROWS_AS(trainer::train_step(st, data, m, sched), NonFiniteLoss);
}

TEST_CASE("evaluation produces the metric table and is thread-invariant") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m, 6);
    auto cfg = tiny_train_config();
    cfg.steps = 2;
    auto st = trainer::make_state(cfg, m.K);
    std::string path = "test_ckpt_eval.bin";
    trainer::train(st, ds, m, path);
    std::remove(path.c_str());

    auto t1 = trainer::evaluate(st, ds, m, {1, 3}, 77, 1);
    auto t4 = trainer::evaluate(st, ds, m, {1, 3}, 77, 4);
    REQUIRE(t1.rows.size() == 4);  // {1,3} x {all, occluded}
    for (size_t i = 0; i < t1.rows.size(); ++i) {
        REQUIRE(t1.rows[i].mpjpe_mm == t4.rows[i].mpjpe_mm);
        REQUIRE(t1.rows[i].pa_mpjpe_mm == t4.rows[i].pa_mpjpe_mm);
        REQUIRE(t1.rows[i].pve_mm == t4.rows[i].pve_mm);
    }
    // min over hypotheses is non-increasing in n by construction.
    CHECK(t1.rows[1].mpjpe_mm <= t1.rows[0].mpjpe_mm);
    CHECK(t1.rows[1].subset == "all");
    CHECK(t1.rows[2].subset == "occluded");
    // CSV header shape.
    auto csv = t1.to_csv();
    CHECK(csv.rfind("n,MPJPE_mm,PA-MPJPE_mm,PVE_mm,subset\n", 0) == 0);
}

TEST_CASE("evaluation with a different seed gives different hypotheses") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m, 4);
    auto cfg = tiny_train_config();
    cfg.steps = 1;
    auto st = trainer::make_state(cfg, m.K);
    std::string path = "test_ckpt_eval2.bin";
    trainer::train(st, ds, m, path);
    std::remove(path.c_str());
    auto a = trainer::evaluate(st, ds, m, {1}, 1, 1);
    auto b = trainer::evaluate(st, ds, m, {1}, 2, 1);
    CHECK(a.rows[0].mpjpe_mm != b.rows[0].mpjpe_mm);
}

TEST_CASE("config parsing: defaults, overrides, unknown keys") {
    RunConfig def = config::load("");
    CHECK(def.train.T == 100);
    CHECK(def.train.hidden == 192);
    CHECK(def.dataset.n_samples == 5000);
    CHECK(def.eval_n_list == std::vector<size_t>{1, 5, 10, 25});

    nlohmann::json j = {
        {"dataset", {{"n_samples", 12}, {"seed", 9}}},
        {"train", {{"T", 20}, {"representation", "axis-angle"}, {"w_j2d", 0.5}}},
        {"eval", {{"n_list", {1, 2}}, {"seed", 4}}},
    };
    auto c = config::parse(j);
    CHECK(c.dataset.n_samples == 12);
    CHECK(c.train.T == 20);
    CHECK(c.train.repr == PoseRepr::AxisAngleRepr);
    CHECK(c.train.weights.w_j2d == 0.5);
    CHECK(c.eval_n_list == std::vector<size_t>{1, 2});

    nlohmann::json bad = {{"train", {{"Tee", 20}}}};
    CHECK_THROWS_AS(config::parse(bad), InvalidConfig);
    nlohmann::json bad2 = {{"trainer", nlohmann::json::object()}};
    CHECK_THROWS_AS(config::parse(bad2), InvalidConfig);
    nlohmann::json bad3 = {{"train", {{"representation", "quaternion"}}}};
    CHECK_THROWS_AS(config::parse(bad3), InvalidConfig);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = TrainConfig{};
    c.adam_beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = TrainConfig{};
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("prepare rejects mismatched dataset and model") {
    auto m = body::build_default_model(7, 60);
    auto ds = tiny_dataset(m, 4);
    ds.K = 23;
    CHECK_THROWS_AS(trainer::prepare(ds, m, PoseRepr::Sixd), FormatError);
}
