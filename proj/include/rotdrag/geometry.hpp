// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "rotdrag/tensor.hpp"

namespace rotdrag {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
    Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
};

double norm(const Point2& p);
double distance(const Point2& a, const Point2& b);

/// Signed angle in radians, always normalized to (-pi, pi].
class AngleRad {
public:
    AngleRad() = default;
    explicit AngleRad(double radians);

    double value() const { return m_value; }
    static AngleRad degrees(double deg);

private:
    double m_value = 0.0;
};

double normalize_angle(double radians);

class Homography {
public:
    Homography();
    /// Normalizes so that m(2, 2) == 1; throws InvalidArgument when singular.
    explicit Homography(const Eigen::Matrix3d& m);

    static Homography identity() { return {}; }
    static Homography translation(double tx, double ty);
    /// Rotation by `angle` about `pivot` (image coordinates, y down).
    static Homography rotation(AngleRad angle, Point2 pivot = {});
    static Homography scaling(double sx, double sy, Point2 pivot = {});

    const Eigen::Matrix3d& matrix() const { return m_m; }
    double operator()(int r, int c) const { return m_m(r, c); }
    Homography inverse() const;
    Homography operator*(const Homography& rhs) const;

private:
    Eigen::Matrix3d m_m;
};

enum class AffineCategory { Scaling, Rotation, Perspective, Translation };

inline constexpr std::array<AffineCategory, 4> kAllCategories = {
    AffineCategory::Scaling, AffineCategory::Rotation, AffineCategory::Perspective, AffineCategory::Translation};

std::string_view to_string(AffineCategory c);
std::optional<AffineCategory> parse_category(std::string_view name);

/// Signed rotation of handle `h` relative to source `s` about axis `c`.
/// Throws DegenerateAxis when either offset from the axis vanishes.
AngleRad compute_rotation_angle(Point2 s, Point2 h, Point2 c);

/// Pivot for interpreting a drag as an in-plane rotation. An anchored pair (source == target)
/// wins; otherwise the mask pixel furthest from the first source along the line through it
/// perpendicular to its drag direction. Throws EmptyMaskLine when that line misses the mask.
Point2 select_rotation_axis(std::span<const Point2> sources, std::span<const Point2> targets, const BinaryMask& mask);

Point2 rotate_point(Point2 p, Point2 axis, AngleRad angle);

Point2 image_center(int width, int height);

/// Bilinear sample of channel `c` with edge-replicated borders.
double sample_clamped(const Tensor& img, int c, double x, double y);

/// Rotates the image content by `angle` about the image center: content at q moves to
/// rotate_point(q, center, angle). Bilinear, edge replication outside the frame.
Image rotate_image(const Image& img, AngleRad angle);

/// Inverse-maps every output pixel through `h` (output = input warped by h).
Image warp_image(const Image& img, const Homography& h, int out_width, int out_height);

/// Throws PointAtInfinity when the mapped depth is below 1e-12.
Point2 apply_homography(const Homography& h, Point2 p);

/// Mean distance between the four image corners mapped by the two homographies.
double corner_error(const Homography& estimated, const Homography& ground_truth, int width, int height);

inline constexpr double kCornerThresholdPx = 3.0;

}  // namespace rotdrag
