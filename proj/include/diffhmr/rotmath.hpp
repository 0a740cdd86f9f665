#pragma once

#include <array>
#include <cmath>

#include "diffhmr/errors.hpp"

namespace diffhmr {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Row-major 3x3 matrix.
struct Mat3 {
    double m[3][3];

    static Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }
    static Mat3 zero() { return {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}}; }

    double& operator()(int r, int c) { return m[r][c]; }
    double operator()(int r, int c) const { return m[r][c]; }

    Vec3 col(int c) const { return {m[0][c], m[1][c], m[2][c]}; }
    Vec3 row(int r) const { return {m[r][0], m[r][1], m[r][2]}; }
    void set_col(int c, const Vec3& v) {
        m[0][c] = v[0];
        m[1][c] = v[1];
        m[2][c] = v[2];
    }

    Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t.m[r][c] = m[c][r];
        return t;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
                m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
                m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r = zero();
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
                for (int j = 0; j < 3; ++j) r.m[i][j] += m[i][k] * o.m[k][j];
        return r;
    }

    Mat3& operator+=(const Mat3& o) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m[r][c] += o.m[r][c];
        return *this;
    }

    double trace() const { return m[0][0] + m[1][1] + m[2][2]; }

    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
};

inline Mat3 outer(const Vec3& a, const Vec3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = a[i] * b[j];
    return r;
}

inline Mat3 skew(const Vec3& v) {
    return {{{0, -v[2], v[1]}, {v[2], 0, -v[0]}, {-v[1], v[0], 0}}};
}

// Two unnormalized rotation-matrix columns, stored as 6 scalars (a then b).
// Intentionally carries no normalization invariant: this is the diffused space.
struct Rot6D {
    std::array<double, 6> v;

    Vec3 a() const { return {v[0], v[1], v[2]}; }
    Vec3 b() const { return {v[3], v[4], v[5]}; }

    static Rot6D identity() { return {{1, 0, 0, 0, 1, 0}}; }
};

struct AxisAngle {
    Vec3 v;  // direction = axis, magnitude = angle (radians)
};

namespace detail {
constexpr double kDegenerateEps = 1e-8;
constexpr double kSmallAngle = 1e-4;
}  // namespace detail

// Gram-Schmidt map of the 6D representation: normalize a, orthogonalize b
// against it, complete with the cross product.
inline Mat3 sixd_to_rotmat(const Rot6D& r) {
    Vec3 a = r.a();
    double na = norm(a);
    if (na <= detail::kDegenerateEps)
        throw DegenerateInput("sixd_to_rotmat: first column norm <= eps");
    Vec3 x = (1.0 / na) * a;
    Vec3 b = r.b();
    Vec3 u = b - dot(x, b) * x;
    double nu = norm(u);
    if (nu <= detail::kDegenerateEps)
        throw DegenerateInput("sixd_to_rotmat: orthogonalized second column norm <= eps");
    Vec3 y = (1.0 / nu) * u;
    Vec3 z = cross(x, y);
    Mat3 m;
    m.set_col(0, x);
    m.set_col(1, y);
    m.set_col(2, z);
    return m;
}

// Inverse embedding: first two columns.
inline Rot6D rotmat_to_sixd(const Mat3& m) {
    return {{m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)}};
}

// Accumulates dL/d(6D) given dL/dR through the Gram-Schmidt map.
inline void sixd_backward(const Rot6D& r, const Mat3& dR, std::array<double, 6>& grad) {
    Vec3 a = r.a();
    double na = norm(a);
    Vec3 x = (1.0 / na) * a;
    Vec3 b = r.b();
    double d = dot(x, b);
    Vec3 u = b - d * x;
    double nu = norm(u);
    Vec3 y = (1.0 / nu) * u;

    Vec3 gz = dR.col(2);
    Vec3 gy = dR.col(1) + cross(gz, x);
    Vec3 gx = dR.col(0) + cross(y, gz);

    // y = u / |u|
    Vec3 gu = (1.0 / nu) * (gy - dot(y, gy) * y);
    // u = b - (x.b) x
    Vec3 gb = gu - dot(x, gu) * x;
    gx = gx - dot(x, gu) * b - d * gu;
    // x = a / |a|
    Vec3 ga = (1.0 / na) * (gx - dot(x, gx) * x);

    for (int i = 0; i < 3; ++i) {
        grad[i] += ga[i];
        grad[3 + i] += gb[i];
    }
}

// Rodrigues formula with a Taylor branch for small angles.
inline Mat3 axisangle_to_rotmat(const AxisAngle& aa) {
    double theta = norm(aa.v);
    Mat3 k = skew(aa.v);
    Mat3 k2 = k * k;
    double c1, c2;  // R = I + c1*K + c2*K^2 with K unscaled by theta
    if (theta < detail::kSmallAngle) {
        double t2 = theta * theta;
        c1 = 1.0 - t2 / 6.0;
        c2 = 0.5 - t2 / 24.0;
    } else {
        c1 = std::sin(theta) / theta;
        c2 = (1.0 - std::cos(theta)) / (theta * theta);
    }
    Mat3 r = Mat3::identity();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] += c1 * k.m[i][j] + c2 * k2.m[i][j];
    return r;
}

// Log map. Canonical output: angle in [0, pi].
inline AxisAngle rotmat_to_axisangle(const Mat3& m) {
    double c = (m.trace() - 1.0) * 0.5;
    c = std::min(1.0, std::max(-1.0, c));
    double theta = std::acos(c);
    Vec3 w = {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
    if (theta < detail::kSmallAngle) {
        // R ~ I + [v]x, so w ~ 2 v
        return {0.5 * w};
    }
    if (theta > M_PI - 1e-4) {
        // Near pi the antisymmetric part vanishes and acos conditioning makes
        // sin(theta) unreliable; recover the axis from the symmetric part
        // R ~ 2 n n^T - I instead. Symmetrizing the off-diagonals cancels the
        // residual sin(theta) contamination.
        Vec3 n;
        int k = 0;
        for (int i = 1; i < 3; ++i)
            if (m(i, i) > m(k, k)) k = i;
        n[k] = std::sqrt(std::max(0.0, (m(k, k) + 1.0) * 0.5));
        for (int i = 0; i < 3; ++i)
            if (i != k) n[i] = (m(k, i) + m(i, k)) / (4.0 * n[k]);
        // Fix the sign ambiguity with the (possibly tiny) antisymmetric part.
        if (dot(n, w) < 0.0) n = -1.0 * n;
        double nn = norm(n);
        return {(theta / nn) * n};
    }
    double s = theta / (2.0 * std::sin(theta));
    return {s * w};
}

// Unique representative with |v| in [0, pi].
inline AxisAngle canonicalize(const AxisAngle& aa) {
    double theta = norm(aa.v);
    if (theta == 0.0) return aa;
    double wrapped = std::fmod(theta, 2.0 * M_PI);
    if (wrapped < 0.0) wrapped += 2.0 * M_PI;
    Vec3 axis = (1.0 / theta) * aa.v;
    if (wrapped > M_PI) {
        wrapped = 2.0 * M_PI - wrapped;
        axis = -1.0 * axis;
    }
    return {wrapped * axis};
}

// Accumulates dL/dv given dL/dR through the Rodrigues map (Gallego & Yezzi).
inline void rodrigues_backward(const AxisAngle& aa, const Mat3& dR, Vec3& grad) {
    const Vec3& v = aa.v;
    double theta2 = dot(v, v);
    Mat3 r = axisangle_to_rotmat(aa);
    // The closed form divides by theta^2 but stays accurate down to very
    // small angles (the numerator is O(theta^2) with matching rounding); only
    // the machine-precision neighborhood of zero needs the limit form
    // dR/dv_i = [e_i]x.
    for (int i = 0; i < 3; ++i) {
        Mat3 dRdvi;
        if (theta2 < 1e-16) {
            Vec3 e{0, 0, 0};
            e[i] = 1.0;
            dRdvi = skew(e);
        } else {
            Vec3 e{0, 0, 0};
            e[i] = 1.0;
            Vec3 w = cross(v, e - r * e);
            Mat3 s = skew((v[i] / theta2) * v + (1.0 / theta2) * w);
            dRdvi = s * r;
        }
        double g = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) g += dR.m[a][b] * dRdvi.m[a][b];
        grad[i] += g;
    }
}

// Angle of the relative rotation, in [0, pi].
inline double geodesic_distance(const Mat3& m1, const Mat3& m2) {
    Mat3 rel = m1.transposed() * m2;
    double c = (rel.trace() - 1.0) * 0.5;
    c = std::min(1.0, std::max(-1.0, c));
    return std::acos(c);
}

inline bool is_rotation(const Mat3& m, double tol = 1e-6) {
    Mat3 mtm = m.transposed() * m;
    double dev = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) dev = std::max(dev, std::abs(mtm(r, c) - (r == c ? 1.0 : 0.0)));
    return dev < tol && std::abs(m.det() - 1.0) < tol;
}

}  // namespace diffhmr
