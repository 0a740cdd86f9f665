#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "diffhmr/bodymodel.hpp"
#include "diffhmr/errors.hpp"
#include "diffhmr/synthdata.hpp"

namespace diffhmr {

struct LossWeights {
    double w_pose = 1.0;
    double w_j3d = 1.0;
    double w_j2d = 1.0;
    double w_beta = 0.1;

    void validate() const {
        for (double w : {w_pose, w_j3d, w_j2d, w_beta})
            if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidConfig("loss weights must be >= 0");
    }
};

namespace losses {

// Mean squared error over coordinates (not sum), so the scale is
// dimension-independent.
inline double diffusion_loss(const std::vector<double>& eps_true,
                             const std::vector<double>& eps_pred) {
    if (eps_true.size() != eps_pred.size()) throw DimensionMismatch("diffusion_loss: sizes differ");
    double acc = 0.0;
    for (size_t i = 0; i < eps_true.size(); ++i) {
        double d = eps_pred[i] - eps_true[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps_true.size());
}

// Root-aligned mean per-joint position error, millimeters (inputs in meters).
inline double mpjpe(const JointSet3D& pred, const JointSet3D& gt) {
    if (pred.size() != gt.size() || pred.size() % 3 != 0)
        throw DimensionMismatch("mpjpe: joint sets differ");
    size_t K = pred.size() / 3;
    double acc = 0.0;
    for (size_t k = 0; k < K; ++k) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double d = (pred[k * 3 + a] - pred[a]) - (gt[k * 3 + a] - gt[a]);
            d2 += d * d;
        }
        acc += std::sqrt(d2);
    }
    return 1000.0 * acc / static_cast<double>(K);
}

// Similarity (rotation + uniform scale + translation) Procrustes alignment of
// pred onto gt, then plain mean joint distance, millimeters.
inline double pa_mpjpe(const JointSet3D& pred, const JointSet3D& gt) {
    if (pred.size() != gt.size() || pred.size() % 3 != 0)
        throw DimensionMismatch("pa_mpjpe: joint sets differ");
    size_t K = pred.size() / 3;
    if (K < 3) throw DegenerateInput("pa_mpjpe: need at least 3 joints");

    Eigen::Matrix3Xd P(3, K), G(3, K);
    for (size_t k = 0; k < K; ++k)
        for (int a = 0; a < 3; ++a) {
            P(a, k) = pred[k * 3 + a];
            G(a, k) = gt[k * 3 + a];
        }
    Eigen::Vector3d mp = P.rowwise().mean(), mg = G.rowwise().mean();
    P.colwise() -= mp;
    G.colwise() -= mg;

    double var_p = P.squaredNorm() / static_cast<double>(K);
    if (var_p < 1e-14) throw DegenerateInput("pa_mpjpe: prediction has no spread");
    Eigen::Matrix3d sigma = G * P.transpose() / static_cast<double>(K);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = svd.singularValues();
    if (d(1) < 1e-14) throw DegenerateInput("pa_mpjpe: ground truth spread is rank-deficient");
    Eigen::Vector3d s = Eigen::Vector3d::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2) = -1.0;
    Eigen::Matrix3d R = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    double c = d.dot(s) / var_p;

    double acc = 0.0;
    for (size_t k = 0; k < K; ++k) acc += (c * R * P.col(k) - G.col(k)).norm();
    return 1000.0 * acc / static_cast<double>(K);
}

// Plain mean per-vertex distance, millimeters. Root alignment is the
// caller's job (evaluation subtracts the root joint before calling).
inline double pve(const std::vector<double>& pred_vertices,
                  const std::vector<double>& gt_vertices) {
    if (pred_vertices.size() != gt_vertices.size() || pred_vertices.size() % 3 != 0)
        throw DimensionMismatch("pve: vertex sets differ");
    size_t V = pred_vertices.size() / 3;
    double acc = 0.0;
    for (size_t i = 0; i < V; ++i) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double d = pred_vertices[i * 3 + a] - gt_vertices[i * 3 + a];
            d2 += d * d;
        }
        acc += std::sqrt(d2);
    }
    return 1000.0 * acc / static_cast<double>(V);
}

inline double min_of_n(const std::vector<double>& errors) {
    if (errors.empty()) throw EmptyInput("min_of_n: empty error list");
    double m = errors[0];
    for (double e : errors) m = std::min(m, e);
    return m;
}

struct HmrLossTerms {
    double pose = 0.0;
    double j3d = 0.0;
    double j2d = 0.0;
    double beta = 0.0;
    double total = 0.0;
};

// L_hmr = w_pose MSE(theta_hat, theta) + w_j3d MSE(J3d_hat, J3d)
//       + w_j2d mean over visible joints of squared 2D distance
//       + w_beta MSE(beta_hat, beta).
// Pose/J3d/beta terms are per-coordinate means; the 2D term averages the
// squared distance per joint so one joint contributes |dxy|^2.
// When gradient outputs are supplied, dL/dtheta_hat, dL/dbeta_hat and
// dL/d(s,tx,ty) are accumulated analytically through the body model.
inline HmrLossTerms hmr_loss_detail(const BodyModel& model, PoseRepr repr,
                                    const std::vector<double>& theta_hat,
                                    const std::vector<double>& gt_theta,
                                    const std::vector<double>& beta_hat,
                                    const std::vector<double>& gt_beta,
                                    const CameraParams& cam_hat,
                                    const std::vector<double>& gt_keypoints2d,
                                    const std::vector<double>& occlusion_mask,
                                    const JointSet3D& gt_j3d, const LossWeights& w,
                                    std::vector<double>* dtheta = nullptr,
                                    std::vector<double>* dbeta = nullptr,
                                    std::vector<double>* dcam = nullptr) {
    w.validate();
    size_t D = theta_hat.size();
    if (gt_theta.size() != D) throw DimensionMismatch("hmr_loss: pose dims differ");
    if (beta_hat.size() != gt_beta.size()) throw DimensionMismatch("hmr_loss: shape dims differ");
    size_t K = model.K;
    HmrLossTerms out;

    for (size_t i = 0; i < D; ++i) {
        double d = theta_hat[i] - gt_theta[i];
        out.pose += d * d;
        if (dtheta) (*dtheta)[i] += w.w_pose * 2.0 * d / static_cast<double>(D);
    }
    out.pose /= static_cast<double>(D);

    for (size_t s = 0; s < beta_hat.size(); ++s) {
        double d = beta_hat[s] - gt_beta[s];
        out.beta += d * d;
        if (dbeta) (*dbeta)[s] += w.w_beta * 2.0 * d / static_cast<double>(beta_hat.size());
    }
    out.beta /= static_cast<double>(beta_hat.size());

    bool need_body = w.w_j3d != 0.0 || w.w_j2d != 0.0;
    std::vector<double> dj3d(K * 3, 0.0);
    body::MeshTrace tr;
    JointSet3D j3d_hat;
    if (need_body) {
        tr = body::mesh_traced(model, theta_hat, repr, ShapeParams{beta_hat});
        j3d_hat = body::joints3d(model, tr.vertices);

        for (size_t i = 0; i < K * 3; ++i) {
            double d = j3d_hat[i] - gt_j3d[i];
            out.j3d += d * d;
            dj3d[i] += w.w_j3d * 2.0 * d / static_cast<double>(K * 3);
        }
        out.j3d /= static_cast<double>(K * 3);

        size_t n_vis = 0;
        for (size_t k = 0; k < K; ++k)
            if (occlusion_mask[k] != 0.0) ++n_vis;
        if (n_vis > 0) {
            auto j2d_hat = body::project(j3d_hat, cam_hat);
            for (size_t k = 0; k < K; ++k) {
                if (occlusion_mask[k] == 0.0) continue;
                for (int a = 0; a < 2; ++a) {
                    double d = j2d_hat[k * 2 + a] - gt_keypoints2d[k * 2 + a];
                    out.j2d += d * d;
                    double g = w.w_j2d * 2.0 * d / static_cast<double>(n_vis);
                    dj3d[k * 3 + a] += g * cam_hat.s;
                    if (dcam) {
                        (*dcam)[0] += g * j3d_hat[k * 3 + a];
                        (*dcam)[1 + a] += g;
                    }
                }
            }
            out.j2d /= static_cast<double>(n_vis);
        }
    }

    out.total = w.w_pose * out.pose + w.w_j3d * out.j3d + w.w_j2d * out.j2d + w.w_beta * out.beta;

    if (need_body && (dtheta || dbeta)) {
        // dL/dvertices = W^T dL/dJ3d
        std::vector<double> dverts(model.V * 3, 0.0);
        for (size_t k = 0; k < K; ++k) {
            const double* wr = &model.joint_regressor[k * model.V];
            for (size_t i = 0; i < model.V; ++i) {
                if (wr[i] == 0.0) continue;
                for (int a = 0; a < 3; ++a) dverts[i * 3 + a] += wr[i] * dj3d[k * 3 + a];
            }
        }
        std::vector<double> dth(D, 0.0), db(model.shape_dim, 0.0);
        body::mesh_backward(model, theta_hat, repr, tr, dverts, dth, db);
        if (dtheta)
            for (size_t i = 0; i < D; ++i) (*dtheta)[i] += dth[i];
        if (dbeta)
            for (size_t s = 0; s < model.shape_dim; ++s) (*dbeta)[s] += db[s];
    }
    return out;
}

// Spec-shaped entry point: ground truth taken from the sample (6D pose).
inline double hmr_loss(const std::vector<double>& theta0_hat, const Sample& sample,
                       const std::vector<double>& beta_hat, const CameraParams& cam_hat,
                       const BodyModel& model, const LossWeights& w) {
    auto gt_verts = body::mesh(model, sample.theta0, PoseRepr::Sixd, ShapeParams{sample.beta});
    auto gt_j3d = body::joints3d(model, gt_verts);
    auto terms = hmr_loss_detail(model, PoseRepr::Sixd, theta0_hat, sample.theta0, beta_hat,
                                 sample.beta, cam_hat, sample.keypoints2d, sample.occlusion_mask,
                                 gt_j3d, w);
    return terms.total;
}

}  // namespace losses
}  // namespace diffhmr
