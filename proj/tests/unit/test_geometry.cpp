// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "rotdrag/error.hpp"
#include "rotdrag/geometry.hpp"

using namespace rotdrag;
using rotdrag::testing::textured_image;

namespace {

constexpr double kPi = std::numbers::pi;

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

Image gaussian_blob(int w, int h) {
    Image img(3, h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = x - (w - 1) / 2.0 - 2.0 * c, dy = y - (h - 1) / 2.0 + c;
                img.at(c, y, x) = 0.2 + 0.6 * std::exp(-(dx * dx + dy * dy) / (2 * 36.0));
            }
    return img;
}

}  // namespace

TEST_CASE("compute_rotation_angle examples") {
    CHECK(compute_rotation_angle({1, 0}, {0, 1}, {0, 0}).value() == doctest::Approx(kPi / 2).epsilon(1e-12));
    CHECK(compute_rotation_angle({5, 3}, {5, 3}, {0, 0}).value() == 0.0);
    const double got = compute_rotation_angle({1, 0}, {std::cos(0.3), std::sin(0.3)}, {0, 0}).value();
    CHECK(std::abs(got - 0.3) < 1e-9);
}

TEST_CASE("compute_rotation_angle is normalized to (-pi, pi]") {
    // s at angle 170 deg, h at -170 deg: the short way round is +20 deg
    const Point2 s{std::cos(170 * kDegree), std::sin(170 * kDegree)};
    const Point2 h{std::cos(-170 * kDegree), std::sin(-170 * kDegree)};
    CHECK(compute_rotation_angle(s, h, {0, 0}).value() == doctest::Approx(20 * kDegree).epsilon(1e-12));
    CHECK(compute_rotation_angle({1, 0}, {-1, 0}, {0, 0}).value() == doctest::Approx(kPi));
    CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
    CHECK(normalize_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
}

TEST_CASE("compute_rotation_angle rejects a degenerate axis") {
    CHECK(code_of([] { compute_rotation_angle({1, 1}, {2, 2}, {1, 1}); }) == ErrorCode::DegenerateAxis);
    CHECK(code_of([] { compute_rotation_angle({2, 2}, {1, 1}, {1, 1}); }) == ErrorCode::DegenerateAxis);
}

TEST_CASE("angle law and isometry hold for random rotations") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> pos(-30, 30), ang(-kPi, kPi);
    for (int i = 0; i < 500; ++i) {
        const Point2 s{pos(rng), pos(rng)}, c{pos(rng), pos(rng)};
        if (distance(s, c) < 1e-3)
            continue;
        const double theta = ang(rng);
        const Point2 h = rotate_point(s, c, AngleRad(theta));
        CHECK(std::abs(distance(h, c) - distance(s, c)) < 1e-9);
        CHECK(std::abs(compute_rotation_angle(s, h, c).value() - theta) < 1e-9);
    }
}

TEST_CASE("select_rotation_axis examples") {
    const BinaryMask any(20, 20, true);
    const std::vector<Point2> s1{{4, 4}, {10, 4}}, t1{{4, 4}, {10, 8}};
    CHECK(select_rotation_axis(s1, t1, any) == Point2{4, 4});

    const std::vector<Point2> s2{{8, 8}}, t2{{12, 8}};
    CHECK(select_rotation_axis(s2, t2, BinaryMask(17, 17, true)) == Point2{8, 0});

    BinaryMask corner(17, 17);
    corner.set(0, 0, true);
    CHECK(code_of([&] { select_rotation_axis(s2, t2, corner); }) == ErrorCode::EmptyMaskLine);
}

TEST_CASE("select_rotation_axis matches brute force over mask pixels") {
    // oracle: enumerate mask pixels on the perpendicular through s, farthest wins, ties by (y, x)
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> coord(0, 23);
    std::bernoulli_distribution bit(0.6);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        BinaryMask mask(24, 24);
        for (auto& b : mask.bits)
            b = bit(rng);
        const Point2 s{double(coord(rng)), double(coord(rng))};
        const int dir = trial % 2;
        const Point2 t = dir ? Point2{s.x, s.y + 3} : Point2{s.x + 5, s.y};
        std::optional<Point2> best;
        double best_d = -1;
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                const bool on_line = dir ? y == s.y : x == s.x;
                if (!on_line || !mask.at(x, y))
                    continue;
                const double d = distance({double(x), double(y)}, s);
                if (d > best_d) {
                    best_d = d;
                    best = Point2{double(x), double(y)};
                }
            }
        const std::vector<Point2> src{s}, tgt{t};
        if (!best) {
            CHECK(code_of([&] { select_rotation_axis(src, tgt, mask); }) == ErrorCode::EmptyMaskLine);
            continue;
        }
        const Point2 got = select_rotation_axis(src, tgt, mask);
        CHECK(got == *best);
        CHECK(mask.at(int(got.x), int(got.y)));
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("rotate_point examples") {
    const Point2 q = rotate_point({1, 0}, {0, 0}, AngleRad(kPi / 2));
    CHECK(q.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(1.0));
    CHECK(rotate_point({2.5, -1}, {2.5, -1}, AngleRad(1.234)) == Point2{2.5, -1});
    const Point2 back = rotate_point(rotate_point({3, 4}, {1, 1}, AngleRad(0.7)), {1, 1}, AngleRad(-0.7));
    CHECK(distance(back, {3, 4}) < 1e-9);
}

TEST_CASE("rotate_image examples") {
    const Image img = gaussian_blob(41, 33);
    const Image same = rotate_image(img, AngleRad(0.0));
    CHECK(same.data == img.data);

    const Image twice = rotate_image(rotate_image(img, AngleRad(kPi)), AngleRad(kPi));
    CHECK(max_abs_diff(twice, img) < 2.0 / 255.0);

    const Image flat(3, 20, 30, 0.37);
    const Image rotated = rotate_image(flat, AngleRad(0.9));
    CHECK(rotated.same_shape(flat));
    CHECK(max_abs_diff(rotated, flat) < 1e-15);
}

TEST_CASE("rotate_image turns content about the image center") {
    Image img(1, 31, 31, 0.0);
    img.at(0, 15, 25) = 1.0;  // 10 px right of the center
    const Image out = rotate_image(img, AngleRad(kPi / 2));
    const Point2 expect = rotate_point({25, 15}, image_center(31, 31), AngleRad(kPi / 2));
    CHECK(out.at(0, int(std::lround(expect.y)), int(std::lround(expect.x))) == doctest::Approx(1.0));
}

TEST_CASE("apply_homography examples") {
    CHECK(apply_homography(Homography::identity(), {7, 9}) == Point2{7, 9});
    CHECK(apply_homography(Homography::translation(2, 3), {0, 0}) == Point2{2, 3});
    const Homography r = Homography::rotation(AngleRad(0.3));
    const Homography both = r * r.inverse();
    for (const Point2 p : {Point2{3, -8}, Point2{100, 42}, Point2{-0.5, 0.25}})
        CHECK(distance(apply_homography(both, p), p) < 1e-9);

    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(2, 0) = 1.0;
    m(2, 2) = 1.0;
    const Homography vanishing(m);
    CHECK(code_of([&] { apply_homography(vanishing, {-1, 0}); }) == ErrorCode::PointAtInfinity);
}

TEST_CASE("corner_error examples and symmetry") {
    const Homography id = Homography::identity();
    CHECK(corner_error(id, id, 64, 64) == 0.0);
    CHECK(corner_error(Homography::translation(2, 0), id, 64, 64) == 2.0);
    CHECK(corner_error(Homography::translation(5, 0), id, 64, 64) == 5.0);
    CHECK(2.0 <= kCornerThresholdPx);
    CHECK(5.0 > kCornerThresholdPx);

    const Homography a = Homography::rotation(AngleRad(0.2), {30, 20}) * Homography::scaling(1.1, 0.9);
    const Homography b = Homography::translation(1.5, -2.0);
    CHECK(corner_error(a, b, 64, 48) == doctest::Approx(corner_error(b, a, 64, 48)).epsilon(1e-12));
}

TEST_CASE("warp_image matches per-pixel inverse mapping") {
    const Image img = textured_image(40, 30, 3);
    const Homography h = Homography::rotation(AngleRad(0.25), {20, 15}) * Homography::translation(1.5, -0.5);
    const Image out = warp_image(img, h, 40, 30);
    const Homography inv = h.inverse();
    for (int y = 0; y < 30; y += 3)
        for (int x = 0; x < 40; x += 3) {
            const Point2 p = apply_homography(inv, {double(x), double(y)});
            for (int c = 0; c < 3; ++c)
                CHECK(out.at(c, y, x) == doctest::Approx(sample_clamped(img, c, p.x, p.y)).epsilon(1e-12));
        }
}

TEST_CASE("category names round trip") {
    for (AffineCategory c : kAllCategories)
        CHECK(parse_category(to_string(c)) == c);
    CHECK_FALSE(parse_category("shear").has_value());
}
