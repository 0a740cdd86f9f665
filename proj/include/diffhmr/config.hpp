#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffhmr/bodymodel.hpp"
#include "diffhmr/errors.hpp"
#include "diffhmr/synthdata.hpp"
#include "diffhmr/trainer.hpp"

namespace diffhmr {

// Run configuration file: a JSON document with optional "dataset", "model",
// "train", and "eval" sections. Every field is optional and defaults to the
// values below; unknown keys are rejected so typos fail fast.
struct RunConfig {
    DatasetConfig dataset;
    uint64_t model_seed = 7;
    size_t model_vertices = 200;
    TrainConfig train;
    std::vector<size_t> eval_n_list = {1, 5, 10, 25};
    uint64_t eval_seed = 123;
    size_t eval_threads = 0;  // 0 = auto
};

namespace config {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw InvalidConfig("unknown key '" + it.key() + "' in " + where);
}

inline RunConfig parse(const nlohmann::json& j) {
    RunConfig c;
    reject_unknown(j, {"dataset", "model", "train", "eval"}, "config");

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d,
                       {"n_samples", "pose_range", "occlusion_rate", "ambiguous_fraction",
                        "keypoint_noise_std", "seed"},
                       "dataset");
        if (d.contains("n_samples")) c.dataset.n_samples = d.at("n_samples").get<size_t>();
        if (d.contains("pose_range")) {
            if (d.at("pose_range").is_number())
                c.dataset.pose_range.assign(24, d.at("pose_range").get<double>());
            else
                c.dataset.pose_range = d.at("pose_range").get<std::vector<double>>();
        }
        if (d.contains("occlusion_rate"))
            c.dataset.occlusion_rate = d.at("occlusion_rate").get<double>();
        if (d.contains("ambiguous_fraction"))
            c.dataset.ambiguous_fraction = d.at("ambiguous_fraction").get<double>();
        if (d.contains("keypoint_noise_std"))
            c.dataset.keypoint_noise_std = d.at("keypoint_noise_std").get<double>();
        if (d.contains("seed")) c.dataset.seed = d.at("seed").get<uint64_t>();
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"seed", "n_vertices"}, "model");
        if (m.contains("seed")) c.model_seed = m.at("seed").get<uint64_t>();
        if (m.contains("n_vertices")) c.model_vertices = m.at("n_vertices").get<size_t>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t,
                       {"T", "beta_start", "beta_end", "batch_size", "steps", "learning_rate",
                        "adam_beta1", "adam_beta2", "adam_eps", "w_pose", "w_j3d", "w_j2d",
                        "w_beta", "seed", "eval_every", "checkpoint_every", "representation",
                        "hidden", "blocks", "embed_dim", "reg_hidden"},
                       "train");
        auto& tc = c.train;
        if (t.contains("T")) tc.T = t.at("T").get<size_t>();
        if (t.contains("beta_start")) tc.beta_start = t.at("beta_start").get<double>();
        if (t.contains("beta_end")) tc.beta_end = t.at("beta_end").get<double>();
        if (t.contains("batch_size")) tc.batch_size = t.at("batch_size").get<size_t>();
        if (t.contains("steps")) tc.steps = t.at("steps").get<size_t>();
        if (t.contains("learning_rate")) tc.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("adam_beta1")) tc.adam_beta1 = t.at("adam_beta1").get<double>();
        if (t.contains("adam_beta2")) tc.adam_beta2 = t.at("adam_beta2").get<double>();
        if (t.contains("adam_eps")) tc.adam_eps = t.at("adam_eps").get<double>();
        if (t.contains("w_pose")) tc.weights.w_pose = t.at("w_pose").get<double>();
        if (t.contains("w_j3d")) tc.weights.w_j3d = t.at("w_j3d").get<double>();
        if (t.contains("w_j2d")) tc.weights.w_j2d = t.at("w_j2d").get<double>();
        if (t.contains("w_beta")) tc.weights.w_beta = t.at("w_beta").get<double>();
        if (t.contains("seed")) tc.seed = t.at("seed").get<uint64_t>();
        if (t.contains("eval_every")) tc.eval_every = t.at("eval_every").get<size_t>();
        if (t.contains("checkpoint_every"))
            tc.checkpoint_every = t.at("checkpoint_every").get<size_t>();
        if (t.contains("representation"))
            tc.repr = pose_repr_from_name(t.at("representation").get<std::string>());
        if (t.contains("hidden")) tc.hidden = t.at("hidden").get<size_t>();
        if (t.contains("blocks")) tc.blocks = t.at("blocks").get<size_t>();
        if (t.contains("embed_dim")) tc.embed_dim = t.at("embed_dim").get<size_t>();
        if (t.contains("reg_hidden")) tc.reg_hidden = t.at("reg_hidden").get<size_t>();
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"n_list", "seed", "threads"}, "eval");
        if (e.contains("n_list")) c.eval_n_list = e.at("n_list").get<std::vector<size_t>>();
        if (e.contains("seed")) c.eval_seed = e.at("seed").get<uint64_t>();
        if (e.contains("threads")) c.eval_threads = e.at("threads").get<size_t>();
    }
    return c;
}

// Empty path means all defaults.
inline RunConfig load(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
    }
    return parse(j);
}

}  // namespace config
}  // namespace diffhmr
