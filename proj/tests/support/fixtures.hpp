// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "rotdrag/diffusion.hpp"
#include "rotdrag/drag_engine.hpp"
#include "rotdrag/geometry.hpp"
#include "rotdrag/tensor.hpp"

namespace rotdrag::testing {

/// Smooth random texture: a tilted background plus seeded Gaussian blobs of random color.
Image textured_image(int width, int height, std::uint64_t seed, int blobs = 60);

/// One rotation-tracking trial. A disk with a logistic rim and an off-center dark dot is drawn
/// at a random place and orientation; the source point sits on the rim opposite the dot.
/// `current` is `image` rotated by `angle` about `axis`, `truth` is where the source moved.
struct TrackingTrial {
    Image image;
    Image current;
    Point2 source;
    Point2 axis;
    Point2 truth;
    Point2 start;  ///< truth rounded after a jitter of up to 1 px per axis
    AngleRad angle;
};

inline constexpr int kTrackingSize = 64;
inline constexpr double kDiskRadius = 5.0;
inline constexpr double kAxisDistance = 14.0;

TrackingTrial make_tracking_trial(double degrees, std::uint64_t seed);

/// Tracks the trial once inside a session built on `image` and returns the tracked handle.
Point2 track_trial(const TrackingTrial& trial, TemplateMode mode, Denoiser& denoiser, FeatureBackend& backend);

/// 64x64 bar hinged at an anchored pivot with three blob handles at radii 6, 10 and 14.
/// Every handle target is its source rotated 30 degrees about the pivot.
DragConfig make_arc_fixture(double degrees = 30.0);

/// Independent scalar recursion for eps = gain * z along a DDIM trajectory: per element,
/// x <- sqrt(a_to / a_from) x + (sqrt(1 - a_to) - sqrt(a_to (1 - a_from) / a_from)) gain x.
double scalar_ddim_oracle(double x0, const std::vector<int>& timesteps, double gain);

/// Cumulative alpha of the scaled-linear schedule computed without the library.
double oracle_alpha(int t);

/// Empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return m_path; }

private:
    std::filesystem::path m_path;
};

/// Writes the arc fixture as a drag case (image, mask and JSON) into `dir` and returns the
/// JSON path.
std::filesystem::path write_arc_case(const std::filesystem::path& dir, const std::string& name);

}  // namespace rotdrag::testing
