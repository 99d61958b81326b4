// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "rotdrag/error.hpp"

namespace rotdrag {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSamePointEps = 1e-12;
constexpr double kTieEps = 1e-9;

}  // namespace

double norm(const Point2& p) {
    return std::hypot(p.x, p.y);
}

double distance(const Point2& a, const Point2& b) {
    return norm(a - b);
}

double normalize_angle(double radians) {
    double r = std::remainder(radians, 2.0 * kPi);
    if (r <= -kPi)
        r += 2.0 * kPi;
    return r;
}

AngleRad::AngleRad(double radians) : m_value(normalize_angle(radians)) {}

AngleRad AngleRad::degrees(double deg) {
    return AngleRad(deg * kPi / 180.0);
}

Homography::Homography() : m_m(Eigen::Matrix3d::Identity()) {}

Homography::Homography(const Eigen::Matrix3d& m) {
    if (!m.allFinite())
        throw Error(ErrorCode::InvalidArgument, "homography has non-finite entries");
    if (std::abs(m(2, 2)) < 1e-15)
        throw Error(ErrorCode::InvalidArgument, "homography cannot be normalized (m22 == 0)");
    m_m = m / m(2, 2);
    if (std::abs(m_m.determinant()) <= 1e-12)
        throw Error(ErrorCode::InvalidArgument, "homography is singular");
}

Homography Homography::translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
}

Homography Homography::rotation(AngleRad angle, Point2 pivot) {
    const double c = std::cos(angle.value());
    const double s = std::sin(angle.value());
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r(0, 0) = c;
    r(0, 1) = -s;
    r(1, 0) = s;
    r(1, 1) = c;
    return translation(pivot.x, pivot.y) * Homography(r) * translation(-pivot.x, -pivot.y);
}

Homography Homography::scaling(double sx, double sy, Point2 pivot) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = sx;
    m(1, 1) = sy;
    return translation(pivot.x, pivot.y) * Homography(m) * translation(-pivot.x, -pivot.y);
}

Homography Homography::inverse() const {
    return Homography(Eigen::Matrix3d(m_m.inverse()));
}

Homography Homography::operator*(const Homography& rhs) const {
    return Homography(Eigen::Matrix3d(m_m * rhs.m_m));
}

std::string_view to_string(AffineCategory c) {
    switch (c) {
    case AffineCategory::Scaling: return "Scaling";
    case AffineCategory::Rotation: return "Rotation";
    case AffineCategory::Perspective: return "Perspective";
    case AffineCategory::Translation: return "Translation";
    }
    return "Unknown";
}

std::optional<AffineCategory> parse_category(std::string_view name) {
    for (AffineCategory c : kAllCategories) {
        const std::string_view canonical = to_string(c);
        if (name.size() != canonical.size())
            continue;
        bool same = true;
        for (std::size_t i = 0; i < name.size() && same; ++i)
            same = std::tolower(static_cast<unsigned char>(name[i])) ==
                   std::tolower(static_cast<unsigned char>(canonical[i]));
        if (same)
            return c;
    }
    return std::nullopt;
}

AngleRad compute_rotation_angle(Point2 s, Point2 h, Point2 c) {
    const Point2 hs = h - c;
    const Point2 ss = s - c;
    if (norm(hs) < kSamePointEps || norm(ss) < kSamePointEps)
        throw Error(ErrorCode::DegenerateAxis, "handle or source coincides with the rotation axis");
    return AngleRad(std::atan2(hs.y, hs.x) - std::atan2(ss.y, ss.x));
}

Point2 select_rotation_axis(std::span<const Point2> sources, std::span<const Point2> targets, const BinaryMask& mask) {
    if (sources.empty() || sources.size() != targets.size())
        throw Error(ErrorCode::InvalidArgument, "need at least one (source, target) pair of matching lengths");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (distance(sources[i], targets[i]) < kSamePointEps)
            return sources[i];
    }
    if (!mask.any())
        throw Error(ErrorCode::InvalidArgument, "mask is empty");

    const Point2 s = sources.front();
    const Point2 drag = targets.front() - s;
    const Point2 dir = drag * (1.0 / norm(drag));

    // A pixel lies on the perpendicular line when its center is within half a pixel of it.
    std::optional<Point2> best;
    double best_dist = -1.0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y))
                continue;
            const Point2 p{static_cast<double>(x), static_cast<double>(y)};
            const Point2 off = p - s;
            if (std::abs(off.x * dir.x + off.y * dir.y) > 0.5)
                continue;
            const double d = norm(off);
            // Row-major scan already visits smaller (y, x) first, so only a strictly larger
            // distance replaces the incumbent.
            if (!best || d > best_dist + kTieEps) {
                best = p;
                best_dist = d;
            }
        }
    }
    if (!best)
        throw Error(ErrorCode::EmptyMaskLine, "line perpendicular to the drag misses the mask");
    return *best;
}

Point2 rotate_point(Point2 p, Point2 axis, AngleRad angle) {
    const double c = std::cos(angle.value());
    const double s = std::sin(angle.value());
    const Point2 d = p - axis;
    return {axis.x + c * d.x - s * d.y, axis.y + s * d.x + c * d.y};
}

Point2 image_center(int width, int height) {
    return {0.5 * (width - 1), 0.5 * (height - 1)};
}

double sample_clamped(const Tensor& img, int c, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
    const double bottom = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

Image rotate_image(const Image& img, AngleRad angle) {
    if (img.empty())
        throw Error(ErrorCode::InvalidArgument, "rotate_image on an empty image");
    if (angle.value() == 0.0)
        return img;
    Image out(img.channels, img.height, img.width);
    const Point2 center = image_center(img.width, img.height);
    const AngleRad back(-angle.value());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Point2 src = rotate_point({static_cast<double>(x), static_cast<double>(y)}, center, back);
            for (int c = 0; c < img.channels; ++c)
                out.at(c, y, x) = sample_clamped(img, c, src.x, src.y);
        }
    }
    return out;
}

Image warp_image(const Image& img, const Homography& h, int out_width, int out_height) {
    if (img.empty())
        throw Error(ErrorCode::InvalidArgument, "warp_image on an empty image");
    const Homography inv = h.inverse();
    Image out(img.channels, out_height, out_width);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const Eigen::Vector3d q = inv.matrix() * Eigen::Vector3d(x, y, 1.0);
            if (std::abs(q.z()) < 1e-12)
                continue;
            for (int c = 0; c < img.channels; ++c)
                out.at(c, y, x) = sample_clamped(img, c, q.x() / q.z(), q.y() / q.z());
        }
    }
    return out;
}

Point2 apply_homography(const Homography& h, Point2 p) {
    const Eigen::Vector3d q = h.matrix() * Eigen::Vector3d(p.x, p.y, 1.0);
    if (std::abs(q.z()) < 1e-12)
        throw Error(ErrorCode::PointAtInfinity, "point maps to infinity");
    return {q.x() / q.z(), q.y() / q.z()};
}

double corner_error(const Homography& estimated, const Homography& ground_truth, int width, int height) {
    const double w = width - 1;
    const double hgt = height - 1;
    const std::array<Point2, 4> corners = {Point2{0, 0}, Point2{w, 0}, Point2{0, hgt}, Point2{w, hgt}};
    double total = 0.0;
    for (const Point2& c : corners)
        total += distance(apply_homography(estimated, c), apply_homography(ground_truth, c));
    return total / 4.0;
}

}  // namespace rotdrag
