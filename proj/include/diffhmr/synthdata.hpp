#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffhmr/bodymodel.hpp"
#include "diffhmr/errors.hpp"
#include "diffhmr/io.hpp"
#include "diffhmr/nnet.hpp"
#include "diffhmr/rng.hpp"

namespace diffhmr {

// One dataset record. theta0 is stored in the 6D representation; trainers
// that diffuse another representation convert on load.
struct Sample {
    std::vector<double> theta0;          // 6K
    std::vector<double> beta;            // 10
    CameraParams cam;
    std::vector<double> keypoints2d;     // K x 2, observation noise included
    std::vector<double> occlusion_mask;  // K, 1 = visible
    ConditioningVector z;                // 2K zeroed-masked keypoints + K mask
    int pair_id = -1;                    // shared by manufactured ambiguous pairs

    bool has_occlusion() const {
        for (double v : occlusion_mask)
            if (v == 0.0) return true;
        return false;
    }
};

struct DatasetConfig {
    size_t n_samples = 5000;
    std::vector<double> pose_range;  // per-joint Euler half-range, radians
    double occlusion_rate = 0.05;
    double ambiguous_fraction = 0.3;
    double keypoint_noise_std = 0.005;
    uint64_t seed = 1;

    void validate(size_t K) const {
        if (n_samples == 0) throw InvalidConfig("n_samples must be positive");
        if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0))
            throw InvalidConfig("occlusion_rate must lie in [0, 1]");
        if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0))
            throw InvalidConfig("ambiguous_fraction must lie in [0, 1]");
        if (keypoint_noise_std < 0.0) throw InvalidConfig("keypoint_noise_std must be >= 0");
        if (!pose_range.empty() && pose_range.size() != K)
            throw InvalidConfig("pose_range must have one entry per joint");
        for (double r : pose_range)
            if (r < 0.0) throw InvalidConfig("pose_range entries must be >= 0");
    }
};

struct Dataset {
    DatasetConfig config;
    size_t K = 0;
    std::vector<Sample> samples;
};

namespace synthdata {

inline std::vector<double> default_pose_ranges(size_t K) {
    std::vector<double> r(K, 0.9);
    r[0] = 0.4;  // keep the global orientation near canonical
    return r;
}

// Deterministic stand-in for the image encoder: zero out occluded keypoints
// and append the visibility mask.
inline ConditioningVector encode(const std::vector<double>& keypoints2d,
                                 const std::vector<double>& occlusion_mask) {
    size_t K = occlusion_mask.size();
    if (keypoints2d.size() != 2 * K) throw DimensionMismatch("encode: keypoints vs mask size");
    ConditioningVector z(3 * K, 0.0);
    for (size_t k = 0; k < K; ++k) {
        if (occlusion_mask[k] != 0.0) {
            z[2 * k] = keypoints2d[2 * k];
            z[2 * k + 1] = keypoints2d[2 * k + 1];
            z[2 * K + k] = 1.0;
        }
    }
    return z;
}

inline std::vector<size_t> descendants(const BodyModel& m, size_t joint) {
    std::vector<size_t> out;
    for (size_t k = joint + 1; k < m.K; ++k) {
        size_t a = k;
        while (a != 0 && a != joint) a = static_cast<size_t>(m.parent[a]);
        if (a == joint) out.push_back(k);
    }
    return out;
}

namespace detail {

inline Mat3 euler_xyz(double ax, double ay, double az) {
    AxisAngle rx{{ax, 0, 0}}, ry{{0, ay, 0}}, rz{{0, 0, az}};
    return axisangle_to_rotmat(rz) * axisangle_to_rotmat(ry) * axisangle_to_rotmat(rx);
}

inline void set_joint_6d(std::vector<double>& theta, size_t k, const Mat3& r) {
    Rot6D s = rotmat_to_sixd(r);
    for (int i = 0; i < 6; ++i) theta[k * 6 + i] = s.v[i];
}

inline std::vector<double> random_pose(const BodyModel& m, const std::vector<double>& ranges,
                                       Rng& rng) {
    std::vector<double> theta(m.K * 6);
    for (size_t k = 0; k < m.K; ++k) {
        double r = ranges[k];
        Mat3 rot = euler_xyz(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
        set_joint_6d(theta, k, rot);
    }
    return theta;
}

inline void quantize(std::vector<double>& v) { v = io::to_f64(io::to_f32(v)); }

inline void finish_sample(Sample& s, const BodyModel& m, const DatasetConfig& cfg, Rng& rng) {
    ShapeParams beta{s.beta};
    auto verts = body::mesh(m, s.theta0, PoseRepr::Sixd, beta);
    auto j3d = body::joints3d(m, verts);
    s.keypoints2d = body::project(j3d, s.cam);
    for (auto& v : s.keypoints2d) v += cfg.keypoint_noise_std * rng.normal();
    quantize(s.theta0);
    quantize(s.beta);
    s.cam.s = static_cast<float>(s.cam.s);
    s.cam.tx = static_cast<float>(s.cam.tx);
    s.cam.ty = static_cast<float>(s.cam.ty);
    quantize(s.keypoints2d);
    s.z = encode(s.keypoints2d, s.occlusion_mask);
}

}  // namespace detail

// Deterministic per seed. A configurable fraction of records comes in
// "ambiguous pairs": two ground-truth poses sharing identical visible
// evidence, differing only inside an occluded limb subtree. That construction
// is what makes the conditional pose distribution multi-modal.
inline Dataset generate(const DatasetConfig& cfg_in, const BodyModel& model) {
    DatasetConfig cfg = cfg_in;
    cfg_in.validate(model.K);
    if (cfg.pose_range.empty()) cfg.pose_range = default_pose_ranges(model.K);

    // Limb subtree roots eligible for manufactured ambiguity (hips, shoulders).
    const std::vector<size_t> limb_roots = {1, 2, 16, 17};

    Dataset ds;
    ds.config = cfg;
    ds.K = model.K;
    ds.samples.reserve(cfg.n_samples);
    int next_pair = 0;
    for (size_t i = 0; ds.samples.size() < cfg.n_samples; ++i) {
        Rng rng = Rng::derive(cfg.seed, 0xda7aULL, i);
        Sample a;
        a.theta0 = detail::random_pose(model, cfg.pose_range, rng);
        a.beta.resize(model.shape_dim);
        for (auto& b : a.beta) b = std::clamp(0.5 * rng.normal(), -2.0, 2.0);
        a.cam.s = rng.uniform(0.8, 1.2);
        a.cam.tx = rng.uniform(-0.1, 0.1);
        a.cam.ty = rng.uniform(-0.1, 0.1);
        a.occlusion_mask.assign(model.K, 1.0);
        for (size_t k = 1; k < model.K; ++k)
            if (rng.uniform() < cfg.occlusion_rate) a.occlusion_mask[k] = 0.0;

        bool make_pair = rng.uniform() < cfg.ambiguous_fraction &&
                         ds.samples.size() + 2 <= cfg.n_samples;
        if (!make_pair) {
            detail::finish_sample(a, model, cfg, rng);
            ds.samples.push_back(std::move(a));
            continue;
        }

        size_t root = limb_roots[rng.uniform_index(limb_roots.size())];
        auto sub = descendants(model, root);
        for (size_t k : sub) a.occlusion_mask[k] = 0.0;

        Sample b = a;
        // Resample the subtree's rotations; the subtree root's own position
        // (and every visible keypoint) is untouched.
        {
            double r = cfg.pose_range[root];
            detail::set_joint_6d(b.theta0, root,
                                 detail::euler_xyz(rng.uniform(-r, r), rng.uniform(-r, r),
                                                   rng.uniform(-r, r)));
            for (size_t k : sub) {
                double rr = cfg.pose_range[k];
                detail::set_joint_6d(b.theta0, k,
                                     detail::euler_xyz(rng.uniform(-rr, rr), rng.uniform(-rr, rr),
                                                       rng.uniform(-rr, rr)));
            }
        }
        a.pair_id = b.pair_id = next_pair++;
        detail::finish_sample(a, model, cfg, rng);
        detail::finish_sample(b, model, cfg, rng);
        // Identical visible evidence, noise included.
        for (size_t k = 0; k < model.K; ++k)
            if (a.occlusion_mask[k] != 0.0) {
                b.keypoints2d[2 * k] = a.keypoints2d[2 * k];
                b.keypoints2d[2 * k + 1] = a.keypoints2d[2 * k + 1];
            }
        b.z = encode(b.keypoints2d, b.occlusion_mask);
        ds.samples.push_back(std::move(a));
        ds.samples.push_back(std::move(b));
    }
    return ds;
}

inline void validate_sample(const Sample& s, size_t K) {
    if (s.theta0.size() != 6 * K || s.beta.size() != 10 || s.keypoints2d.size() != 2 * K ||
        s.occlusion_mask.size() != K || s.z.size() != 3 * K)
        throw FormatError("sample: array sizes inconsistent with K");
    for (double v : s.occlusion_mask)
        if (v != 0.0 && v != 1.0) throw FormatError("sample: mask entries must be 0 or 1");
    auto z = encode(s.keypoints2d, s.occlusion_mask);
    if (z != s.z) throw FormatError("sample: z is not the encoding of (keypoints, mask)");
    for (double v : s.theta0)
        if (!std::isfinite(v)) throw FormatError("sample: non-finite theta0");
}

inline void save(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    nlohmann::json header = {
        {"magic", "DIFFPOSE-DS/1"},
        {"K", ds.K},
        {"n", ds.samples.size()},
        {"config",
         {{"n_samples", ds.config.n_samples},
          {"pose_range", ds.config.pose_range},
          {"occlusion_rate", ds.config.occlusion_rate},
          {"ambiguous_fraction", ds.config.ambiguous_fraction},
          {"keypoint_noise_std", ds.config.keypoint_noise_std},
          {"seed", ds.config.seed}}},
    };
    os << header.dump() << "\n";
    for (const auto& s : ds.samples) {
        nlohmann::json rec = {
            {"theta0", io::encode_f32_base64(s.theta0)},
            {"beta", io::encode_f32_base64(s.beta)},
            {"cam", {s.cam.s, s.cam.tx, s.cam.ty}},
            {"kp2d", io::encode_f32_base64(s.keypoints2d)},
            {"mask", io::encode_f32_base64(s.occlusion_mask)},
            {"pair", s.pair_id},
        };
        os << rec.dump() << "\n";
    }
    if (!os) throw IoError("failed writing dataset " + path);
}

inline Dataset load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("missing dataset header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad dataset header: ") + e.what());
    }
    if (header.value("magic", "") != "DIFFPOSE-DS/1") throw FormatError("not a DIFFPOSE-DS/1 file");
    Dataset ds;
    ds.K = header.at("K").get<size_t>();
    size_t n = header.at("n").get<size_t>();
    const auto& c = header.at("config");
    ds.config.n_samples = c.at("n_samples").get<size_t>();
    ds.config.pose_range = c.at("pose_range").get<std::vector<double>>();
    ds.config.occlusion_rate = c.at("occlusion_rate").get<double>();
    ds.config.ambiguous_fraction = c.at("ambiguous_fraction").get<double>();
    ds.config.keypoint_noise_std = c.at("keypoint_noise_std").get<double>();
    ds.config.seed = c.at("seed").get<uint64_t>();
    ds.samples.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line))
            throw FormatError("dataset truncated: expected " + std::to_string(n) + " samples, got " +
                              std::to_string(i));
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad sample record: ") + e.what());
        }
        Sample s;
        s.theta0 = io::decode_f32_base64(rec.at("theta0").get<std::string>(), 6 * ds.K);
        s.beta = io::decode_f32_base64(rec.at("beta").get<std::string>(), 10);
        auto cam = rec.at("cam");
        s.cam = {cam.at(0).get<double>(), cam.at(1).get<double>(), cam.at(2).get<double>()};
        s.keypoints2d = io::decode_f32_base64(rec.at("kp2d").get<std::string>(), 2 * ds.K);
        s.occlusion_mask = io::decode_f32_base64(rec.at("mask").get<std::string>(), ds.K);
        s.pair_id = rec.at("pair").get<int>();
        s.z = encode(s.keypoints2d, s.occlusion_mask);
        validate_sample(s, ds.K);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace synthdata
}  // namespace diffhmr
