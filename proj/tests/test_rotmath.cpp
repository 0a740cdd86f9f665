#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "diffhmr/rng.hpp"
#include "diffhmr/rotmath.hpp"

using namespace diffhmr;

namespace {

Mat3 random_rotation(Rng& rng) {
    Rot6D r;
    for (auto& v : r.v) v = rng.normal();
    return sixd_to_rotmat(r);
}

double max_abs_diff(const Mat3& a, const Mat3& b) {
    double d = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(a(r, c) - b(r, c)));
    return d;
}

}  // namespace

TEST_CASE("identity code decodes to the identity matrix") {
    auto r = sixd_to_rotmat(Rot6D::identity());
    CHECK(max_abs_diff(r, Mat3::identity()) == 0.0);
}

TEST_CASE("hand case: swapped orthonormal columns") {
    // a = e_y, b = e_x: Gram-Schmidt keeps both, z = e_y x e_x = -e_z.
    Rot6D r{{0, 1, 0, 1, 0, 0}};
    Mat3 m = sixd_to_rotmat(r);
    Mat3 expect{{{0, 1, 0}, {1, 0, 0}, {0, 0, -1}}};
    CHECK(max_abs_diff(m, expect) < 1e-15);
    CHECK(std::abs(m.det() - 1.0) < 1e-12);
}

TEST_CASE("90 degree rotation about z embeds as expected") {
    Mat3 rz = axisangle_to_rotmat({{0, 0, M_PI / 2}});
    Rot6D s = rotmat_to_sixd(rz);
    std::array<double, 6> expect{0, 1, 0, -1, 0, 0};
    for (int i = 0; i < 6; ++i) CHECK(std::abs(s.v[i] - expect[i]) < 1e-15);
}

TEST_CASE("decoded matrices are valid rotations over many random draws") {
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        Rot6D r;
        for (auto& v : r.v) v = rng.normal();
        Mat3 m = sixd_to_rotmat(r);
        REQUIRE(is_rotation(m, 1e-9));
    }
}

TEST_CASE("decode is scale-invariant in both columns") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        Rot6D r;
        for (auto& v : r.v) v = rng.normal();
        Mat3 m = sixd_to_rotmat(r);
        Rot6D scaled = r;
        double sa = rng.uniform(0.1, 10.0), sb = rng.uniform(0.1, 10.0);
        for (int j = 0; j < 3; ++j) {
            scaled.v[j] *= sa;
            scaled.v[3 + j] *= sb;
        }
        CHECK(max_abs_diff(m, sixd_to_rotmat(scaled)) < 1e-12);
    }
}

TEST_CASE("round trip rotmat -> 6d -> rotmat is exact to tolerance") {
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        Mat3 m = random_rotation(rng);
        Mat3 m2 = sixd_to_rotmat(rotmat_to_sixd(m));
        CHECK(max_abs_diff(m, m2) < 1e-12);
    }
}

TEST_CASE("degenerate 6d inputs throw") {
    CHECK_THROWS_AS(sixd_to_rotmat(Rot6D{{0, 0, 0, 1, 0, 0}}), DegenerateInput);
    CHECK_THROWS_AS(sixd_to_rotmat(Rot6D{{1e-9, 0, 0, 0, 1, 0}}), DegenerateInput);
    // b parallel to a: orthogonalization collapses.
    CHECK_THROWS_AS(sixd_to_rotmat(Rot6D{{1, 0, 0, 2, 0, 0}}), DegenerateInput);
    // Just above the threshold must succeed.
    CHECK_NOTHROW(sixd_to_rotmat(Rot6D{{1e-7, 0, 0, 0, 1e-7, 0}}));
}

TEST_CASE("Rodrigues hand case: pi/2 about z") {
    Mat3 m = axisangle_to_rotmat({{0, 0, M_PI / 2}});
    Mat3 expect{{{0, -1, 0}, {1, 0, 0}, {0, 0, 1}}};
    CHECK(max_abs_diff(m, expect) < 1e-15);
}

TEST_CASE("Rodrigues small-angle branch agrees with the exact formula") {
    // Just below and above the branch point.
    for (double theta : {9.9e-5, 1.01e-4}) {
        Vec3 axis{1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
        Mat3 m = axisangle_to_rotmat({theta * axis});
        double c1 = std::sin(theta) / theta;
        double c2 = (1.0 - std::cos(theta)) / (theta * theta);
        Mat3 k = skew(theta * axis), k2 = k * k;
        Mat3 exact = Mat3::identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) exact.m[r][c] += c1 * k.m[r][c] + c2 * k2.m[r][c];
        CHECK(max_abs_diff(m, exact) < 1e-14);
        CHECK(is_rotation(m, 1e-12));
    }
}

TEST_CASE("axis-angle round trip, including near zero and near pi") {
    Rng rng(14);
    for (int i = 0; i < 2000; ++i) {
        double theta;
        switch (i % 4) {
            case 0: theta = rng.uniform(1e-7, 1e-4); break;
            case 1: theta = rng.uniform(M_PI - 1e-5, M_PI - 1e-9); break;
            case 2: theta = M_PI; break;
            default: theta = rng.uniform(1e-4, M_PI - 1e-5); break;
        }
        Vec3 axis = {rng.normal(), rng.normal(), rng.normal()};
        axis = (1.0 / norm(axis)) * axis;
        AxisAngle aa{theta * axis};
        Mat3 m = axisangle_to_rotmat(aa);
        AxisAngle back = rotmat_to_axisangle(m);
        Mat3 m2 = axisangle_to_rotmat(back);
        // Compare as rotations: at theta = pi the axis sign is not unique.
        CHECK(geodesic_distance(m, m2) < 1e-6);
        CHECK(norm(back.v) <= M_PI + 1e-12);
    }
}

TEST_CASE("canonicalize wraps angles into [0, pi]") {
    AxisAngle aa{{0, 0, 3 * M_PI / 2}};  // 270 deg about z == 90 deg about -z
    AxisAngle c = canonicalize(aa);
    CHECK(std::abs(norm(c.v) - M_PI / 2) < 1e-12);
    CHECK(c.v[2] < 0.0);
    CHECK(geodesic_distance(axisangle_to_rotmat(aa), axisangle_to_rotmat(c)) < 1e-12);

    AxisAngle zero{{0, 0, 0}};
    CHECK(norm(canonicalize(zero).v) == 0.0);
}

TEST_CASE("geodesic distance basics") {
    Mat3 i = Mat3::identity();
    Mat3 rz = axisangle_to_rotmat({{0, 0, M_PI / 2}});
    CHECK(geodesic_distance(i, i) == 0.0);
    CHECK(std::abs(geodesic_distance(i, rz) - M_PI / 2) < 1e-12);
    // Symmetry and the triangle inequality on random triples.
    Rng rng(15);
    for (int k = 0; k < 200; ++k) {
        Mat3 a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
        double ab = geodesic_distance(a, b);
        CHECK(std::abs(ab - geodesic_distance(b, a)) < 1e-12);
        CHECK(ab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-9);
    }
}

TEST_CASE("6d backward matches central finite differences") {
    Rng rng(16);
    for (int trial = 0; trial < 50; ++trial) {
        Rot6D r;
        for (auto& v : r.v) v = rng.normal();
        // Random linear functional of R as the loss.
        Mat3 dR;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) dR.m[a][b] = rng.normal();
        auto loss = [&](const Rot6D& q) {
            Mat3 m = sixd_to_rotmat(q);
            double acc = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) acc += dR.m[a][b] * m.m[a][b];
            return acc;
        };
        std::array<double, 6> grad{};
        sixd_backward(r, dR, grad);
        double h = 1e-6;
        for (int i = 0; i < 6; ++i) {
            Rot6D p = r, mns = r;
            p.v[i] += h;
            mns.v[i] -= h;
            double fd = (loss(p) - loss(mns)) / (2 * h);
            CHECK(std::abs(fd - grad[i]) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("Rodrigues backward matches central finite differences") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        AxisAngle aa{{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        if (trial % 5 == 0) aa.v = 1e-5 * aa.v;  // exercise the small-angle branch
        Mat3 dR;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) dR.m[a][b] = rng.normal();
        auto loss = [&](const AxisAngle& q) {
            Mat3 m = axisangle_to_rotmat(q);
            double acc = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) acc += dR.m[a][b] * m.m[a][b];
            return acc;
        };
        Vec3 grad{0, 0, 0};
        rodrigues_backward(aa, dR, grad);
        double h = 1e-6;
        for (int i = 0; i < 3; ++i) {
            AxisAngle p = aa, mns = aa;
            p.v[i] += h;
            mns.v[i] -= h;
            double fd = (loss(p) - loss(mns)) / (2 * h);
            CHECK(std::abs(fd - grad[i]) < 2e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}
