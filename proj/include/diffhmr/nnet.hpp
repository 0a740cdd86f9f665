#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffhmr/errors.hpp"
#include "diffhmr/rng.hpp"

namespace diffhmr {

// Flat conditioning vector: flattened 2D keypoints with occluded entries
// zeroed, followed by the visibility mask.
using ConditioningVector = std::vector<double>;
using Gradients = std::vector<double>;

namespace nnet {

inline double silu(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// Sinusoidal features of t with geometric frequency spacing from 1 to 1e4.
inline std::vector<double> time_embedding(size_t t, size_t dim) {
    size_t half = dim / 2;
    std::vector<double> e(dim);
    for (size_t i = 0; i < half; ++i) {
        double denom = (half > 1) ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(half - 1))
                                  : 1.0;
        double arg = static_cast<double>(t) / denom;
        e[i] = std::sin(arg);
        e[half + i] = std::cos(arg);
    }
    return e;
}

struct LayerSpec {
    std::string name;
    size_t offset = 0;
    size_t rows = 0;  // output dim; biases are rows x 1
    size_t cols = 0;
    size_t size() const { return rows * cols; }
};

// Architecture manifest. The denoiser is a residual MLP:
//   in = concat(x_t, time_embedding(t), z)
//   h  = silu(W_in in + b_in)
//   h += silu(W_k h + b_k)      for each block k
//   out = W_head h + b_head     (zero-initialized head)
// The shape/camera regressor is a 2-layer MLP on z alone.
struct NetSpec {
    size_t pose_dim = 144;
    size_t embed_dim = 64;
    size_t cond_dim = 72;
    size_t hidden = 192;
    size_t blocks = 3;
    size_t reg_hidden = 64;
    size_t shape_dim = 10;
    size_t cam_dim = 3;

    std::vector<LayerSpec> layers;
    size_t total = 0;

    size_t input_dim() const { return pose_dim + embed_dim + cond_dim; }

    static NetSpec make(size_t pose_dim, size_t cond_dim, size_t hidden = 192, size_t blocks = 3,
                        size_t embed_dim = 64, size_t reg_hidden = 64) {
        NetSpec s;
        s.pose_dim = pose_dim;
        s.cond_dim = cond_dim;
        s.hidden = hidden;
        s.blocks = blocks;
        s.embed_dim = embed_dim;
        s.reg_hidden = reg_hidden;
        size_t off = 0;
        auto add = [&](const std::string& name, size_t rows, size_t cols) {
            s.layers.push_back({name, off, rows, cols});
            off += rows * cols;
        };
        add("denoiser.in.W", hidden, s.input_dim());
        add("denoiser.in.b", hidden, 1);
        for (size_t k = 0; k < blocks; ++k) {
            add("denoiser.block" + std::to_string(k) + ".W", hidden, hidden);
            add("denoiser.block" + std::to_string(k) + ".b", hidden, 1);
        }
        add("denoiser.head.W", pose_dim, hidden);
        add("denoiser.head.b", pose_dim, 1);
        add("regressor.in.W", reg_hidden, cond_dim);
        add("regressor.in.b", reg_hidden, 1);
        add("regressor.out.W", s.shape_dim + s.cam_dim, reg_hidden);
        add("regressor.out.b", s.shape_dim + s.cam_dim, 1);
        s.total = off;
        return s;
    }

    const LayerSpec& layer(const std::string& name) const {
        for (const auto& l : layers)
            if (l.name == name) return l;
        throw DimensionMismatch("unknown layer " + name);
    }
};

// y = W x + b with row-major W (rows x cols).
inline void affine(const double* W, const double* b, const double* x, double* y, size_t rows,
                   size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* w = W + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
        y[r] = acc;
    }
}

// Backward of y = W x + b: accumulates dW, db, and (optionally) dx.
inline void affine_backward(const double* W, const double* x, const double* dy, double* dW,
                            double* db, double* dx, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double g = dy[r];
        db[r] += g;
        double* dWr = dW + r * cols;
        const double* w = W + r * cols;
        for (size_t c = 0; c < cols; ++c) dWr[c] += g * x[c];
        if (dx) {
            for (size_t c = 0; c < cols; ++c) dx[c] += g * w[c];
        }
    }
}

// Cached activations of one denoiser forward pass, kept for backprop.
struct DenoiserTrace {
    std::vector<double> in;                  // concat input
    std::vector<double> pre_in;              // W_in in + b_in
    std::vector<std::vector<double>> h;      // h after input layer and each block (blocks+1)
    std::vector<std::vector<double>> pre;    // per-block pre-activation
    std::vector<double> out;
};

struct RegressorTrace {
    std::vector<double> z;
    std::vector<double> pre;
    std::vector<double> h;
    std::vector<double> out;  // [shape_dim | cam_dim]
};

// Conditional noise-prediction network plus shape/camera regressor over one
// flat parameter array.
class Network {
public:
    explicit Network(NetSpec spec) : spec_(std::move(spec)), params_(spec_.total, 0.0) {}

    const NetSpec& spec() const { return spec_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Fan-in-scaled uniform weights, zero biases, zero denoiser head.
    void init(uint64_t seed) {
        Rng rng(seed);
        for (const auto& l : spec_.layers) {
            bool bias = l.cols == 1;
            bool head = l.name == "denoiser.head.W" || l.name == "denoiser.head.b";
            double scale = bias ? 0.0 : std::sqrt(1.0 / static_cast<double>(l.cols));
            for (size_t i = 0; i < l.size(); ++i) {
                double v = (bias || head) ? 0.0 : rng.uniform(-scale, scale);
                params_[l.offset + i] = v;
            }
        }
    }

    DenoiserTrace denoiser_forward_traced(const std::vector<double>& x_t, size_t t,
                                          const ConditioningVector& z) const {
        if (x_t.size() != spec_.pose_dim) throw DimensionMismatch("denoiser: pose dim");
        if (z.size() != spec_.cond_dim) throw DimensionMismatch("denoiser: cond dim");
        DenoiserTrace tr;
        tr.in.reserve(spec_.input_dim());
        tr.in.insert(tr.in.end(), x_t.begin(), x_t.end());
        auto emb = time_embedding(t, spec_.embed_dim);
        tr.in.insert(tr.in.end(), emb.begin(), emb.end());
        tr.in.insert(tr.in.end(), z.begin(), z.end());

        const size_t H = spec_.hidden;
        const auto& lin = spec_.layer("denoiser.in.W");
        const auto& lbin = spec_.layer("denoiser.in.b");
        tr.pre_in.resize(H);
        affine(&params_[lin.offset], &params_[lbin.offset], tr.in.data(), tr.pre_in.data(), H,
               spec_.input_dim());
        std::vector<double> h(H);
        for (size_t i = 0; i < H; ++i) h[i] = silu(tr.pre_in[i]);
        tr.h.push_back(h);

        tr.pre.resize(spec_.blocks);
        for (size_t k = 0; k < spec_.blocks; ++k) {
            const auto& lw = spec_.layer("denoiser.block" + std::to_string(k) + ".W");
            const auto& lb = spec_.layer("denoiser.block" + std::to_string(k) + ".b");
            tr.pre[k].resize(H);
            affine(&params_[lw.offset], &params_[lb.offset], h.data(), tr.pre[k].data(), H, H);
            for (size_t i = 0; i < H; ++i) h[i] += silu(tr.pre[k][i]);
            tr.h.push_back(h);
        }

        const auto& lhw = spec_.layer("denoiser.head.W");
        const auto& lhb = spec_.layer("denoiser.head.b");
        tr.out.resize(spec_.pose_dim);
        affine(&params_[lhw.offset], &params_[lhb.offset], h.data(), tr.out.data(), spec_.pose_dim,
               H);
        return tr;
    }

    std::vector<double> denoiser_forward(const std::vector<double>& x_t, size_t t,
                                         const ConditioningVector& z) const {
        return denoiser_forward_traced(x_t, t, z).out;
    }

    // Accumulates parameter gradients; optionally returns dL/d(x_t).
    void denoiser_backward(const DenoiserTrace& tr, const std::vector<double>& dout, Gradients& g,
                           std::vector<double>* dx_t = nullptr) const {
        if (g.size() != params_.size()) throw DimensionMismatch("gradients size");
        if (dout.size() != spec_.pose_dim) throw DimensionMismatch("dout size");
        const size_t H = spec_.hidden;

        const auto& lhw = spec_.layer("denoiser.head.W");
        const auto& lhb = spec_.layer("denoiser.head.b");
        std::vector<double> dh(H, 0.0);
        affine_backward(&params_[lhw.offset], tr.h.back().data(), dout.data(), &g[lhw.offset],
                        &g[lhb.offset], dh.data(), spec_.pose_dim, H);

        std::vector<double> dpre(H), dh_in(H);
        for (size_t k = spec_.blocks; k-- > 0;) {
            const auto& lw = spec_.layer("denoiser.block" + std::to_string(k) + ".W");
            const auto& lb = spec_.layer("denoiser.block" + std::to_string(k) + ".b");
            for (size_t i = 0; i < H; ++i) dpre[i] = dh[i] * silu_grad(tr.pre[k][i]);
            std::fill(dh_in.begin(), dh_in.end(), 0.0);
            affine_backward(&params_[lw.offset], tr.h[k].data(), dpre.data(), &g[lw.offset],
                            &g[lb.offset], dh_in.data(), H, H);
            for (size_t i = 0; i < H; ++i) dh[i] += dh_in[i];  // residual skip
        }

        const auto& lin = spec_.layer("denoiser.in.W");
        const auto& lbin = spec_.layer("denoiser.in.b");
        for (size_t i = 0; i < H; ++i) dpre[i] = dh[i] * silu_grad(tr.pre_in[i]);
        std::vector<double> din;
        if (dx_t) din.assign(spec_.input_dim(), 0.0);
        affine_backward(&params_[lin.offset], tr.in.data(), dpre.data(), &g[lin.offset],
                        &g[lbin.offset], dx_t ? din.data() : nullptr, H, spec_.input_dim());
        if (dx_t) dx_t->assign(din.begin(), din.begin() + spec_.pose_dim);
    }

    RegressorTrace regressor_forward_traced(const ConditioningVector& z) const {
        if (z.size() != spec_.cond_dim) throw DimensionMismatch("regressor: cond dim");
        RegressorTrace tr;
        tr.z = z;
        const auto& lw0 = spec_.layer("regressor.in.W");
        const auto& lb0 = spec_.layer("regressor.in.b");
        tr.pre.resize(spec_.reg_hidden);
        affine(&params_[lw0.offset], &params_[lb0.offset], z.data(), tr.pre.data(),
               spec_.reg_hidden, spec_.cond_dim);
        tr.h.resize(spec_.reg_hidden);
        for (size_t i = 0; i < spec_.reg_hidden; ++i) tr.h[i] = silu(tr.pre[i]);
        const auto& lw1 = spec_.layer("regressor.out.W");
        const auto& lb1 = spec_.layer("regressor.out.b");
        tr.out.resize(spec_.shape_dim + spec_.cam_dim);
        affine(&params_[lw1.offset], &params_[lb1.offset], tr.h.data(), tr.out.data(),
               spec_.shape_dim + spec_.cam_dim, spec_.reg_hidden);
        return tr;
    }

    // Returns (shape beta, camera pi).
    std::pair<std::vector<double>, std::vector<double>> regressor_forward(
        const ConditioningVector& z) const {
        auto tr = regressor_forward_traced(z);
        std::vector<double> beta(tr.out.begin(), tr.out.begin() + spec_.shape_dim);
        std::vector<double> cam(tr.out.begin() + spec_.shape_dim, tr.out.end());
        return {beta, cam};
    }

    void regressor_backward(const RegressorTrace& tr, const std::vector<double>& dout,
                            Gradients& g) const {
        if (dout.size() != spec_.shape_dim + spec_.cam_dim)
            throw DimensionMismatch("regressor dout size");
        const auto& lw1 = spec_.layer("regressor.out.W");
        const auto& lb1 = spec_.layer("regressor.out.b");
        std::vector<double> dh(spec_.reg_hidden, 0.0);
        affine_backward(&params_[lw1.offset], tr.h.data(), dout.data(), &g[lw1.offset],
                        &g[lb1.offset], dh.data(), spec_.shape_dim + spec_.cam_dim,
                        spec_.reg_hidden);
        std::vector<double> dpre(spec_.reg_hidden);
        for (size_t i = 0; i < spec_.reg_hidden; ++i) dpre[i] = dh[i] * silu_grad(tr.pre[i]);
        const auto& lw0 = spec_.layer("regressor.in.W");
        const auto& lb0 = spec_.layer("regressor.in.b");
        affine_backward(&params_[lw0.offset], tr.z.data(), dpre.data(), &g[lw0.offset],
                        &g[lb0.offset], nullptr, spec_.reg_hidden, spec_.cond_dim);
    }

private:
    NetSpec spec_;
    std::vector<double> params_;
};

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t checked = 0;
};

// Central finite differences on a random parameter subsample (>= n_random
// params plus every parameter of the smallest layer) against an analytic
// gradient. `loss` must re-evaluate with the network's current parameters.
inline GradcheckReport gradcheck(Network& net, const std::function<double()>& loss,
                                 const Gradients& analytic, double fd_step, uint64_t seed,
                                 size_t n_random = 200) {
    if (!(fd_step > 0.0)) throw InvalidConfig("gradcheck: fd_step must be > 0");
    auto& p = net.params();
    std::vector<size_t> idx;
    const LayerSpec* smallest = nullptr;
    for (const auto& l : net.spec().layers)
        if (!smallest || l.size() < smallest->size()) smallest = &l;
    for (size_t i = 0; i < smallest->size(); ++i) idx.push_back(smallest->offset + i);
    Rng rng(seed);
    for (size_t i = 0; i < n_random; ++i) idx.push_back(rng.uniform_index(p.size()));

    GradcheckReport rep;
    rep.checked = idx.size();
    for (size_t i : idx) {
        double orig = p[i];
        p[i] = orig + fd_step;
        double lp = loss();
        p[i] = orig - fd_step;
        double lm = loss();
        p[i] = orig;
        double fd = (lp - lm) / (2.0 * fd_step);
        double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        double rel = std::abs(fd - analytic[i]) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            for (const auto& l : net.spec().layers)
                if (i >= l.offset && i < l.offset + l.size())
                    rep.worst_param = l.name + "[" + std::to_string(i - l.offset) + "]";
        }
    }
    return rep;
}

}  // namespace nnet
}  // namespace diffhmr
