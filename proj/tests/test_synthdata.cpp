#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffhmr/synthdata.hpp"

using namespace diffhmr;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

DatasetConfig small_config(uint64_t seed = 1) {
    DatasetConfig c;
    c.n_samples = 60;
    c.occlusion_rate = 0.1;
    c.ambiguous_fraction = 0.4;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("encode zeroes occluded entries and appends the mask") {
    std::vector<double> kp = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    std::vector<double> mask = {1.0, 0.0, 1.0};
    auto z = synthdata::encode(kp, mask);
    REQUIRE(z.size() == 9);
    CHECK(z[0] == 0.1);
    CHECK(z[1] == 0.2);
    CHECK(z[2] == 0.0);
    CHECK(z[3] == 0.0);
    CHECK(z[4] == 0.5);
    CHECK(z[5] == 0.6);
    CHECK(z[6] == 1.0);
    CHECK(z[7] == 0.0);
    CHECK(z[8] == 1.0);
    CHECK_THROWS_AS(synthdata::encode({0.1}, mask), DimensionMismatch);
}

TEST_CASE("descendants walks the subtree") {
    auto m = body::build_default_model(7);
    auto d = synthdata::descendants(m, 16);  // l_shoulder
    CHECK(d == std::vector<size_t>{18, 20, 22});
    auto hip = synthdata::descendants(m, 1);
    CHECK(hip == std::vector<size_t>{4, 7, 10});
    CHECK(synthdata::descendants(m, 22).empty());
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    auto m = body::build_default_model(7);
    auto cfg = small_config();
    auto a = synthdata::generate(cfg, m);
    auto b = synthdata::generate(cfg, m);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].theta0 == b.samples[i].theta0);
        REQUIRE(a.samples[i].keypoints2d == b.samples[i].keypoints2d);
        REQUIRE(a.samples[i].occlusion_mask == b.samples[i].occlusion_mask);
    }
    auto c = synthdata::generate(small_config(2), m);
    CHECK(a.samples[0].theta0 != c.samples[0].theta0);
}

TEST_CASE("sample arrays are well formed") {
    auto m = body::build_default_model(7);
    auto ds = synthdata::generate(small_config(), m);
    REQUIRE(ds.samples.size() == 60);
    CHECK(ds.K == m.K);
    for (const auto& s : ds.samples) {
        CHECK_NOTHROW(synthdata::validate_sample(s, m.K));
        CHECK(s.occlusion_mask[0] == 1.0);  // root never occluded
        for (double b : s.beta) REQUIRE((b >= -2.0 && b <= 2.0));
        REQUIRE((s.cam.s >= 0.8 && s.cam.s <= 1.2));
    }
}

TEST_CASE("noise-free keypoints match the reprojected ground truth") {
    auto m = body::build_default_model(7);
    auto cfg = small_config();
    cfg.keypoint_noise_std = 0.0;
    auto ds = synthdata::generate(cfg, m);
    for (const auto& s : ds.samples) {
        auto verts = body::mesh(m, s.theta0, PoseRepr::Sixd, ShapeParams{s.beta});
        auto kp = body::project(body::joints3d(m, verts), s.cam);
        for (size_t i = 0; i < kp.size(); ++i)
            REQUIRE(std::abs(kp[i] - s.keypoints2d[i]) < 1e-6);  // f32 storage
    }
}

TEST_CASE("occlusion rate boundaries") {
    auto m = body::build_default_model(7);
    auto cfg = small_config();
    cfg.ambiguous_fraction = 0.0;
    cfg.occlusion_rate = 0.0;
    auto none = synthdata::generate(cfg, m);
    for (const auto& s : none.samples) CHECK_FALSE(s.has_occlusion());
    cfg.occlusion_rate = 1.0;
    auto all = synthdata::generate(cfg, m);
    for (const auto& s : all.samples) {
        CHECK(s.occlusion_mask[0] == 1.0);
        for (size_t k = 1; k < m.K; ++k) REQUIRE(s.occlusion_mask[k] == 0.0);
    }
}

TEST_CASE("ambiguous pairs share identical visible evidence") {
    auto m = body::build_default_model(7);
    auto cfg = small_config();
    cfg.ambiguous_fraction = 1.0;
    auto ds = synthdata::generate(cfg, m);
    size_t pairs = 0;
    for (size_t i = 0; i + 1 < ds.samples.size(); ++i) {
        const auto& a = ds.samples[i];
        const auto& b = ds.samples[i + 1];
        if (a.pair_id < 0 || a.pair_id != b.pair_id) continue;
        ++pairs;
        REQUIRE(a.occlusion_mask == b.occlusion_mask);
        REQUIRE(a.z == b.z);  // identical conditioning, noise bit included
        REQUIRE(a.theta0 != b.theta0);
        // Differences are confined to one limb: the (visible) limb root whose
        // own keypoint does not move when its rotation changes, plus its
        // occluded descendants.
        bool differs_occluded = false;
        auto is_limb_root = [](size_t k) { return k == 1 || k == 2 || k == 16 || k == 17; };
        for (size_t k = 0; k < m.K; ++k) {
            bool same = true;
            for (int c = 0; c < 6; ++c)
                if (a.theta0[k * 6 + c] != b.theta0[k * 6 + c]) same = false;
            if (!same) {
                REQUIRE((a.occlusion_mask[k] == 0.0 || is_limb_root(k)));
                if (a.occlusion_mask[k] == 0.0) differs_occluded = true;
            }
        }
        REQUIRE(differs_occluded);
        ++i;
    }
    CHECK(pairs >= 20);
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
    auto m = body::build_default_model(7);
    auto ds = synthdata::generate(small_config(), m);
    std::string path = "test_ds_roundtrip.jsonl";
    synthdata::save(ds, path);
    auto ds2 = synthdata::load(path);
    REQUIRE(ds2.samples.size() == ds.samples.size());
    CHECK(ds2.K == ds.K);
    CHECK(ds2.config.seed == ds.config.seed);
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        REQUIRE(ds2.samples[i].theta0 == ds.samples[i].theta0);
        REQUIRE(ds2.samples[i].beta == ds.samples[i].beta);
        REQUIRE(ds2.samples[i].keypoints2d == ds.samples[i].keypoints2d);
        REQUIRE(ds2.samples[i].occlusion_mask == ds.samples[i].occlusion_mask);
        REQUIRE(ds2.samples[i].z == ds.samples[i].z);
        REQUIRE(ds2.samples[i].pair_id == ds.samples[i].pair_id);
        REQUIRE(ds2.samples[i].cam.s == ds.samples[i].cam.s);
    }
    // Saving again produces byte-identical output.
    std::string path2 = "test_ds_roundtrip2.jsonl";
    synthdata::save(ds2, path2);
    CHECK(slurp(path) == slurp(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("malformed dataset files are rejected") {
    auto m = body::build_default_model(7);
    auto cfg = small_config();
    cfg.n_samples = 5;
    auto ds = synthdata::generate(cfg, m);
    std::string path = "test_ds_bad.jsonl";
    synthdata::save(ds, path);

    // Truncate: drop the last record.
    auto content = slurp(path);
    auto cut = content.rfind('{');
    {
        std::ofstream os(path, std::ios::binary);
        os << content.substr(0, cut);
    }
    CHECK_THROWS_AS(synthdata::load(path), FormatError);

    {
        std::ofstream os(path);
        os << "{\"magic\":\"DIFFPOSE-DS/2\"}\n";
    }
    CHECK_THROWS_AS(synthdata::load(path), FormatError);
    CHECK_THROWS_AS(synthdata::load("no_such_dataset.jsonl"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("config validation") {
    auto m = body::build_default_model(7);
    DatasetConfig c;
    c.n_samples = 0;
    CHECK_THROWS_AS(synthdata::generate(c, m), InvalidConfig);
    c = DatasetConfig{};
    c.occlusion_rate = 1.5;
    CHECK_THROWS_AS(synthdata::generate(c, m), InvalidConfig);
    c = DatasetConfig{};
    c.pose_range = {0.5};  // wrong length
    CHECK_THROWS_AS(synthdata::generate(c, m), InvalidConfig);
    c = DatasetConfig{};
    c.ambiguous_fraction = -0.1;
    CHECK_THROWS_AS(synthdata::generate(c, m), InvalidConfig);
}
