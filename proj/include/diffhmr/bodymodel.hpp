#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffhmr/errors.hpp"
#include "diffhmr/io.hpp"
#include "diffhmr/rng.hpp"
#include "diffhmr/rotmath.hpp"

namespace diffhmr {

// Joint-angle parameterization of the diffused pose vector.
enum class PoseRepr { Sixd, AxisAngleRepr };

inline size_t coords_per_joint(PoseRepr r) { return r == PoseRepr::Sixd ? 6 : 3; }

inline const char* pose_repr_name(PoseRepr r) { return r == PoseRepr::Sixd ? "6d" : "axis-angle"; }

inline PoseRepr pose_repr_from_name(const std::string& s) {
    if (s == "6d") return PoseRepr::Sixd;
    if (s == "axis-angle") return PoseRepr::AxisAngleRepr;
    throw InvalidConfig("unknown representation '" + s + "' (expected 6d or axis-angle)");
}

inline Mat3 decode_joint(PoseRepr r, const double* code) {
    if (r == PoseRepr::Sixd) {
        Rot6D s{{code[0], code[1], code[2], code[3], code[4], code[5]}};
        return sixd_to_rotmat(s);
    }
    return axisangle_to_rotmat({{code[0], code[1], code[2]}});
}

inline void decode_joint_backward(PoseRepr r, const double* code, const Mat3& dR, double* dcode) {
    if (r == PoseRepr::Sixd) {
        Rot6D s{{code[0], code[1], code[2], code[3], code[4], code[5]}};
        std::array<double, 6> g{};
        sixd_backward(s, dR, g);
        for (int i = 0; i < 6; ++i) dcode[i] += g[i];
    } else {
        Vec3 g{0, 0, 0};
        rodrigues_backward({{code[0], code[1], code[2]}}, dR, g);
        for (int i = 0; i < 3; ++i) dcode[i] += g[i];
    }
}

struct ShapeParams {
    std::vector<double> beta;  // length 10
};

struct CameraParams {
    double s = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

using JointSet3D = std::vector<double>;  // K x 3 flat, meters
using JointSet2D = std::vector<double>;  // K x 2 flat, normalized image units

// Simplified parametric articulated body: shape-blended template, forward
// kinematics over a rooted tree, linear blend skinning, and a fixed linear
// joint regressor.
struct BodyModel {
    size_t K = 0;
    size_t V = 0;
    size_t shape_dim = 10;
    std::vector<int> parent;                // length K, parent[0] = -1
    std::vector<double> rest_joints;        // K x 3
    std::vector<double> template_vertices;  // V x 3
    std::vector<double> skin_weights;       // V x K, row-stochastic
    std::vector<double> shape_dirs;         // V x 3 x shape_dim
    std::vector<double> joint_regressor;    // K x V, rows sum to 1

    size_t pose_dim(PoseRepr r) const { return K * coords_per_joint(r); }

    void validate() const {
        if (parent.size() != K || rest_joints.size() != K * 3 ||
            template_vertices.size() != V * 3 || skin_weights.size() != V * K ||
            shape_dirs.size() != V * 3 * shape_dim || joint_regressor.size() != K * V)
            throw FormatError("body model: array sizes inconsistent with K/V");
        if (parent[0] != -1) throw FormatError("body model: joint 0 must be the root");
        for (size_t k = 1; k < K; ++k)
            if (parent[k] < 0 || static_cast<size_t>(parent[k]) >= k)
                throw FormatError("body model: parent index must precede child");
        for (size_t i = 0; i < V; ++i) {
            double sum = 0.0;
            for (size_t k = 0; k < K; ++k) {
                double w = skin_weights[i * K + k];
                if (w < 0.0) throw FormatError("body model: negative skin weight");
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-6) throw FormatError("body model: skin weight row sum != 1");
        }
        for (size_t k = 0; k < K; ++k) {
            double sum = 0.0;
            for (size_t i = 0; i < V; ++i) sum += joint_regressor[k * V + i];
            if (std::abs(sum - 1.0) > 1e-6)
                throw FormatError("body model: joint regressor row sum != 1");
        }
    }
};

namespace body {

// template + shape_dirs . beta
inline std::vector<double> shaped_vertices(const BodyModel& m, const ShapeParams& beta) {
    if (beta.beta.size() != m.shape_dim) throw DimensionMismatch("shape params size");
    std::vector<double> v = m.template_vertices;
    for (size_t i = 0; i < m.V; ++i)
        for (int a = 0; a < 3; ++a) {
            double acc = 0.0;
            const double* dirs = &m.shape_dirs[(i * 3 + a) * m.shape_dim];
            for (size_t s = 0; s < m.shape_dim; ++s) acc += dirs[s] * beta.beta[s];
            v[i * 3 + a] += acc;
        }
    return v;
}

// J = W . vertices
inline JointSet3D joints3d(const BodyModel& m, const std::vector<double>& vertices) {
    if (vertices.size() != m.V * 3) throw DimensionMismatch("joints3d: vertex count");
    JointSet3D j(m.K * 3, 0.0);
    for (size_t k = 0; k < m.K; ++k) {
        const double* w = &m.joint_regressor[k * m.V];
        for (size_t i = 0; i < m.V; ++i) {
            double wi = w[i];
            if (wi == 0.0) continue;
            j[k * 3 + 0] += wi * vertices[i * 3 + 0];
            j[k * 3 + 1] += wi * vertices[i * 3 + 1];
            j[k * 3 + 2] += wi * vertices[i * 3 + 2];
        }
    }
    return j;
}

// Weak perspective: (x, y) -> s (x, y) + t; depth dropped.
inline JointSet2D project(const JointSet3D& j3d, const CameraParams& cam) {
    JointSet2D out(j3d.size() / 3 * 2);
    for (size_t k = 0; k * 3 < j3d.size(); ++k) {
        out[k * 2 + 0] = cam.s * j3d[k * 3 + 0] + cam.tx;
        out[k * 2 + 1] = cam.s * j3d[k * 3 + 1] + cam.ty;
    }
    return out;
}

// Everything cached by one mesh() evaluation, enough to backpropagate.
struct MeshTrace {
    std::vector<Mat3> local_rot;   // K
    std::vector<Mat3> global_rot;  // K
    std::vector<Vec3> global_t;    // K (posed joint positions)
    std::vector<double> shaped;    // V x 3 rest vertices after shape blend
    std::vector<double> rest_j;    // K x 3 rest joints of the shaped template
    std::vector<double> vertices;  // V x 3 posed
};

inline MeshTrace mesh_traced(const BodyModel& m, const std::vector<double>& theta, PoseRepr repr,
                             const ShapeParams& beta) {
    size_t cpj = coords_per_joint(repr);
    if (theta.size() != m.K * cpj) throw DimensionMismatch("mesh: pose dim");
    MeshTrace tr;
    tr.local_rot.resize(m.K);
    for (size_t k = 0; k < m.K; ++k) tr.local_rot[k] = decode_joint(repr, &theta[k * cpj]);

    tr.shaped = shaped_vertices(m, beta);
    tr.rest_j = joints3d(m, tr.shaped);

    // Forward kinematics, parent-to-child, bone offsets from the shaped rest pose.
    tr.global_rot.resize(m.K);
    tr.global_t.resize(m.K);
    for (size_t k = 0; k < m.K; ++k) {
        Vec3 jk = {tr.rest_j[k * 3], tr.rest_j[k * 3 + 1], tr.rest_j[k * 3 + 2]};
        if (k == 0) {
            tr.global_rot[0] = tr.local_rot[0];
            tr.global_t[0] = jk;
        } else {
            int p = m.parent[k];
            Vec3 jp = {tr.rest_j[p * 3], tr.rest_j[p * 3 + 1], tr.rest_j[p * 3 + 2]};
            tr.global_rot[k] = tr.global_rot[p] * tr.local_rot[k];
            tr.global_t[k] = tr.global_rot[p] * (jk - jp) + tr.global_t[p];
        }
    }

    // Linear blend skinning about each joint's shaped rest position,
    // expressed as R v + (t - R j) so the rest pose reproduces the template
    // bit-for-bit.
    std::vector<Vec3> trans(m.K);
    for (size_t k = 0; k < m.K; ++k) {
        Vec3 jk = {tr.rest_j[k * 3], tr.rest_j[k * 3 + 1], tr.rest_j[k * 3 + 2]};
        trans[k] = tr.global_t[k] - tr.global_rot[k] * jk;
    }
    tr.vertices.assign(m.V * 3, 0.0);
    for (size_t i = 0; i < m.V; ++i) {
        Vec3 v = {tr.shaped[i * 3], tr.shaped[i * 3 + 1], tr.shaped[i * 3 + 2]};
        Vec3 acc = {0, 0, 0};
        for (size_t k = 0; k < m.K; ++k) {
            double w = m.skin_weights[i * m.K + k];
            if (w == 0.0) continue;
            acc = acc + w * (tr.global_rot[k] * v + trans[k]);
        }
        tr.vertices[i * 3] = acc[0];
        tr.vertices[i * 3 + 1] = acc[1];
        tr.vertices[i * 3 + 2] = acc[2];
    }
    return tr;
}

inline std::vector<double> mesh(const BodyModel& m, const std::vector<double>& theta, PoseRepr repr,
                                const ShapeParams& beta) {
    return mesh_traced(m, theta, repr, beta).vertices;
}

// Reverse pass of mesh_traced: accumulates dL/dtheta and dL/dbeta from
// dL/d(vertices).
inline void mesh_backward(const BodyModel& m, const std::vector<double>& theta, PoseRepr repr,
                          const MeshTrace& tr, const std::vector<double>& dverts,
                          std::vector<double>& dtheta, std::vector<double>& dbeta) {
    size_t cpj = coords_per_joint(repr);
    if (dverts.size() != m.V * 3) throw DimensionMismatch("mesh_backward: dverts size");
    if (dtheta.size() != m.K * cpj) throw DimensionMismatch("mesh_backward: dtheta size");
    if (dbeta.size() != m.shape_dim) throw DimensionMismatch("mesh_backward: dbeta size");

    std::vector<Mat3> dG_R(m.K, Mat3::zero());
    std::vector<Vec3> dG_t(m.K, Vec3{0, 0, 0});
    std::vector<double> dshaped(m.V * 3, 0.0);
    std::vector<double> drest_j(m.K * 3, 0.0);

    // Skinning backward.
    for (size_t i = 0; i < m.V; ++i) {
        Vec3 g = {dverts[i * 3], dverts[i * 3 + 1], dverts[i * 3 + 2]};
        Vec3 v = {tr.shaped[i * 3], tr.shaped[i * 3 + 1], tr.shaped[i * 3 + 2]};
        for (size_t k = 0; k < m.K; ++k) {
            double w = m.skin_weights[i * m.K + k];
            if (w == 0.0) continue;
            Vec3 jk = {tr.rest_j[k * 3], tr.rest_j[k * 3 + 1], tr.rest_j[k * 3 + 2]};
            Vec3 wg = w * g;
            dG_R[k] += outer(wg, v - jk);
            dG_t[k] = dG_t[k] + wg;
            Vec3 back = tr.global_rot[k].transposed() * wg;
            for (int a = 0; a < 3; ++a) {
                dshaped[i * 3 + a] += back[a];
                drest_j[k * 3 + a] -= back[a];
            }
        }
    }

    // Kinematic chain backward, children before parents.
    for (size_t k = m.K; k-- > 1;) {
        int p = m.parent[k];
        Vec3 jk = {tr.rest_j[k * 3], tr.rest_j[k * 3 + 1], tr.rest_j[k * 3 + 2]};
        Vec3 jp = {tr.rest_j[p * 3], tr.rest_j[p * 3 + 1], tr.rest_j[p * 3 + 2]};
        Vec3 d = jk - jp;
        Mat3 pRt = tr.global_rot[p].transposed();

        Mat3 dRk = pRt * dG_R[k];
        decode_joint_backward(repr, &theta[k * cpj], dRk, &dtheta[k * cpj]);

        Vec3 dd = pRt * dG_t[k];
        for (int a = 0; a < 3; ++a) {
            drest_j[k * 3 + a] += dd[a];
            drest_j[p * 3 + a] -= dd[a];
        }
        dG_R[p] += dG_R[k] * tr.local_rot[k].transposed();
        dG_R[p] += outer(dG_t[k], d);
        dG_t[p] = dG_t[p] + dG_t[k];
    }
    decode_joint_backward(repr, &theta[0], dG_R[0], &dtheta[0]);
    for (int a = 0; a < 3; ++a) drest_j[a] += dG_t[0][a];

    // rest_j = W . shaped
    for (size_t k = 0; k < m.K; ++k) {
        const double* w = &m.joint_regressor[k * m.V];
        for (size_t i = 0; i < m.V; ++i) {
            if (w[i] == 0.0) continue;
            for (int a = 0; a < 3; ++a) dshaped[i * 3 + a] += w[i] * drest_j[k * 3 + a];
        }
    }

    // shaped = template + shape_dirs . beta
    for (size_t i = 0; i < m.V; ++i)
        for (int a = 0; a < 3; ++a) {
            double g = dshaped[i * 3 + a];
            if (g == 0.0) continue;
            const double* dirs = &m.shape_dirs[(i * 3 + a) * m.shape_dim];
            for (size_t s = 0; s < m.shape_dim; ++s) dbeta[s] += g * dirs[s];
        }
}

// SMPL-like 24-joint topology.
inline std::vector<int> default_parents() {
    return {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
}

inline std::vector<double> default_rest_joints() {
    return {
        0.00, 0.00,  0.00,   // pelvis
        0.09, -0.05, 0.00,   // l_hip
        -0.09, -0.05, 0.00,  // r_hip
        0.00, 0.11,  0.00,   // spine1
        0.10, -0.45, 0.00,   // l_knee
        -0.10, -0.45, 0.00,  // r_knee
        0.00, 0.23,  0.00,   // spine2
        0.11, -0.85, 0.00,   // l_ankle
        -0.11, -0.85, 0.00,  // r_ankle
        0.00, 0.29,  0.00,   // spine3
        0.12, -0.90, 0.12,   // l_foot
        -0.12, -0.90, 0.12,  // r_foot
        0.00, 0.48,  0.00,   // neck
        0.06, 0.42,  0.00,   // l_collar
        -0.06, 0.42, 0.00,   // r_collar
        0.00, 0.58,  0.00,   // head
        0.17, 0.44,  0.00,   // l_shoulder
        -0.17, 0.44, 0.00,   // r_shoulder
        0.42, 0.44,  0.00,   // l_elbow
        -0.42, 0.44, 0.00,   // r_elbow
        0.67, 0.44,  0.00,   // l_wrist
        -0.67, 0.44, 0.00,   // r_wrist
        0.75, 0.44,  0.00,   // l_hand
        -0.75, 0.44, 0.00,   // r_hand
    };
}

// Deterministic synthetic replacement for a licensed body-model asset.
// Each joint gets a symmetric marker-vertex pair (so W reproduces the rest
// joints exactly); the remaining vertices are scattered along bones.
inline BodyModel build_default_model(uint64_t seed, size_t n_vertices = 200) {
    BodyModel m;
    m.parent = default_parents();
    m.K = m.parent.size();
    std::vector<double> joints = default_rest_joints();
    if (n_vertices < 2 * m.K + 1) throw InvalidConfig("need at least 2K+1 vertices");
    m.V = n_vertices;
    m.template_vertices.assign(m.V * 3, 0.0);
    m.skin_weights.assign(m.V * m.K, 0.0);
    m.joint_regressor.assign(m.K * m.V, 0.0);
    m.shape_dirs.assign(m.V * 3 * m.shape_dim, 0.0);

    Rng rng = Rng::derive(seed, 0x6d6f64656cULL);  // model stream

    // Marker pairs: vertices 2k, 2k+1 straddle joint k.
    for (size_t k = 0; k < m.K; ++k) {
        Vec3 d;
        for (int a = 0; a < 3; ++a) d[a] = rng.normal();
        d = (0.02 / norm(d)) * d;
        for (int half = 0; half < 2; ++half) {
            size_t i = 2 * k + half;
            double sgn = half == 0 ? 1.0 : -1.0;
            for (int a = 0; a < 3; ++a) m.template_vertices[i * 3 + a] = joints[k * 3 + a] + sgn * d[a];
            m.skin_weights[i * m.K + k] = 1.0;
            m.joint_regressor[k * m.V + i] = 0.5;
        }
    }

    // Filler vertices along bones with radial scatter.
    size_t n_bones = m.K - 1;
    for (size_t i = 2 * m.K; i < m.V; ++i) {
        size_t k = 1 + (i - 2 * m.K) % n_bones;  // child joint of the bone
        int p = m.parent[k];
        // Dyadic weight so t and 1-t are both f32-exact and sum to 1 exactly.
        double t = static_cast<double>(38 + rng.uniform_index(180)) / 256.0;
        for (int a = 0; a < 3; ++a) {
            double base = (1.0 - t) * joints[p * 3 + a] + t * joints[k * 3 + a];
            m.template_vertices[i * 3 + a] = base + 0.03 * rng.normal();
        }
        m.skin_weights[i * m.K + p] = 1.0 - t;
        m.skin_weights[i * m.K + k] = t;
    }

    // Shape space: one random displacement per (component, joint), blended
    // onto vertices by their skin weights. Marker pairs share their joint's
    // displacement, so regressed joints track the shape blend exactly.
    std::vector<double> joint_dirs(m.shape_dim * m.K * 3);
    for (auto& x : joint_dirs) x = 0.02 * rng.normal();
    for (size_t i = 0; i < m.V; ++i)
        for (size_t s = 0; s < m.shape_dim; ++s)
            for (int a = 0; a < 3; ++a) {
                double acc = 0.0;
                for (size_t k = 0; k < m.K; ++k) {
                    double w = m.skin_weights[i * m.K + k];
                    if (w != 0.0) acc += w * joint_dirs[(s * m.K + k) * 3 + a];
                }
                m.shape_dirs[(i * 3 + a) * m.shape_dim + s] = acc;
            }

    // Quantize every asset array to f32 so the serialized form is the model.
    auto quantize = [](std::vector<double>& v) { v = io::to_f64(io::to_f32(v)); };
    quantize(m.template_vertices);
    quantize(m.skin_weights);
    quantize(m.shape_dirs);
    quantize(m.joint_regressor);
    m.rest_joints = joints3d(m, m.template_vertices);
    quantize(m.rest_joints);
    m.validate();
    return m;
}

inline void save_model(const BodyModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    nlohmann::json manifest = {
        {"magic", "DIFFPOSE-BODY/1"},
        {"K", m.K},
        {"V", m.V},
        {"shape_dim", m.shape_dim},
        {"parent", m.parent},
        {"blobs", {"template_vertices", "skin_weights", "shape_dirs", "joint_regressor",
                   "rest_joints"}},
    };
    os << manifest.dump() << "\n";
    io::write_f32_blob(os, m.template_vertices);
    io::write_f32_blob(os, m.skin_weights);
    io::write_f32_blob(os, m.shape_dirs);
    io::write_f32_blob(os, m.joint_regressor);
    io::write_f32_blob(os, m.rest_joints);
}

inline BodyModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("missing body model manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad body model manifest: ") + e.what());
    }
    if (manifest.value("magic", "") != "DIFFPOSE-BODY/1")
        throw FormatError("not a DIFFPOSE-BODY/1 file");
    BodyModel m;
    m.K = manifest.at("K").get<size_t>();
    m.V = manifest.at("V").get<size_t>();
    m.shape_dim = manifest.at("shape_dim").get<size_t>();
    m.parent = manifest.at("parent").get<std::vector<int>>();
    m.template_vertices = io::read_f32_blob(is, m.V * 3);
    m.skin_weights = io::read_f32_blob(is, m.V * m.K);
    m.shape_dirs = io::read_f32_blob(is, m.V * 3 * m.shape_dim);
    m.joint_regressor = io::read_f32_blob(is, m.K * m.V);
    m.rest_joints = io::read_f32_blob(is, m.K * 3);
    m.validate();
    return m;
}

}  // namespace body
}  // namespace diffhmr
