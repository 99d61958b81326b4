// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotdrag/drag_case.hpp"
#include "rotdrag/drag_engine.hpp"
#include "rotdrag/features.hpp"
#include "rotdrag/geometry.hpp"
#include "rotdrag/options.hpp"

namespace rotdrag {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling ranges per category. A range with lo == hi pins the parameter.
struct AffineParamRanges {
    Range rotation_deg{-60.0, 60.0};
    Range scale{0.7, 1.4};
    Range translation_x{-7.0, 7.0};
    Range translation_y{-7.0, 7.0};
    Range perspective{-1.5e-3, 1.5e-3};  ///< bottom-row entries, per pixel
    double min_crop_fraction = 0.4;      ///< smallest crop side relative to the source
    int max_retries = 64;
};

/// `reference` is a centered crop of a source image; `warped` is the same source resampled so
/// that warped(q) = source(H_gt^-1 q + offset), i.e. warp(reference, H_gt) with real content
/// wherever the reference frame ends.
struct AffineCase {
    Image reference;
    Image warped;
    Homography H_gt;
    AffineCategory category = AffineCategory::Translation;
    std::size_t source_index = 0;
    Point2 crop_offset;
    int source_width = 0;
    int source_height = 0;
};

AffineParamRanges affine_ranges(const EngineOptions& options);

/// Transform of one category about `pivot` with the given parameters (the translation
/// category ignores the pivot). `p0`, `p1` are (angle rad), (s), (tx, ty) or (px, py).
Homography category_homography(AffineCategory category, double p0, double p1, Point2 pivot);

/// True when every frame corner of the case, pulled back through H_gt^-1 and shifted by the
/// crop offset, lies inside the source image.
bool corners_contained(const Homography& h, int crop_w, int crop_h, Point2 crop_offset, int source_w,
                       int source_h);

/// Throws InvalidArgument on bad arguments and UnsatisfiableCrop when retries run out.
std::vector<AffineCase> curate_affine_cases(const std::vector<Image>& images, AffineCategory category, int count,
                                            std::uint64_t seed, const AffineParamRanges& ranges = {});

inline constexpr int kRansacIterations = 2000;
inline constexpr double kRansacThresholdPx = 3.0;

/// Least-squares DLT with Hartley normalization. Needs >= 4 correspondences.
Homography fit_homography(const std::vector<Point2>& from, const std::vector<Point2>& to);

/// Exhaustive L2 nearest neighbour of each keypoint's fmA vector among all fmB
/// pixels, then RANSAC (4-point DLT hypotheses) and a least-squares refit on the inliers.
/// Correspondences are sorted before sampling, so keypoint order does not matter.
/// Throws DegenerateConfiguration with fewer than 4 keypoints or inliers.
Homography estimate_homography(const FeatureMap& fmA, const FeatureMap& fmB, const std::vector<Point2>& keypoints,
                               std::uint64_t seed = 0);

/// g x g keypoints evenly spaced over the inner region of a width x height frame.
std::vector<Point2> keypoint_grid(int width, int height, int g);

struct CategoryStats {
    int total = 0;
    int correct = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct CaseScore {
    AffineCategory category;
    double corner_error;  ///< +inf when estimation failed
    bool correct;
};

struct BenchReport {
    std::string method;
    std::array<CategoryStats, 4> per_category{};  ///< indexed like kAllCategories
    std::vector<CaseScore> cases;

    const CategoryStats& stats(AffineCategory c) const;
    nlohmann::json to_json() const;
};

struct EvalOptions {
    std::uint64_t seed = 0;
    Denoiser* denoiser = nullptr;  ///< defaults to the zero-noise linear denoiser
    int timestep = 0;
    std::string label;             ///< defaults to the backend name
};

/// Per-case failures count as incorrect.
BenchReport evaluate_method(const std::vector<AffineCase>& cases, FeatureBackend& backend, int grid,
                            const EvalOptions& options = {});

/// Rows are methods, columns Scaling, Rotation, Perspective, Translation (percent).
std::string format_table(const std::vector<BenchReport>& reports);
nlohmann::json reports_to_json(const std::vector<BenchReport>& reports);

struct DragCaseOutcome {
    std::string name;
    bool completed = false;  ///< engine ran and did not abort
    std::string error;
    std::optional<DragResult> result;
    std::optional<DragConfig> config;
    double final_mean_distance = 0.0;
    int steps = 0;
    bool converged = false;
};

struct DragBenchSummary {
    std::vector<DragCaseOutcome> outcomes;
    std::size_t completed = 0;
    std::size_t failed = 0;
    double convergence_rate = 0.0;      ///< over completed cases
    double mean_final_distance = 0.0;   ///< over completed cases
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

struct DragBenchOptions {
    OptionLayer overrides;  ///< applied over each case's own options
    int workers = 1;
    std::optional<std::filesystem::path> out_dir;
};

/// Throws EmptyBenchmark on an empty list. Case failures are recorded, not thrown.
DragBenchSummary run_drag_benchmark(const std::vector<DragCase>& cases, const DragBenchOptions& options);

/// Same, parsing each file inside the workers so a corrupt file only fails its own case.
DragBenchSummary run_drag_benchmark_files(const std::vector<std::filesystem::path>& files,
                                          const DragBenchOptions& options);

}  // namespace rotdrag
