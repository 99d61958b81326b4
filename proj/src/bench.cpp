// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "rotdrag/error.hpp"
#include "rotdrag/runner.hpp"

namespace rotdrag {

using nlohmann::json;

namespace {

std::size_t category_index(AffineCategory c) {
    return static_cast<std::size_t>(std::find(kAllCategories.begin(), kAllCategories.end(), c) -
                                    kAllCategories.begin());
}

double draw(std::mt19937_64& rng, Range r) {
    if (r.hi <= r.lo)
        return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

Homography about(const Eigen::Matrix3d& core, Point2 pivot) {
    return Homography::translation(pivot.x, pivot.y) * Homography(core) *
           Homography::translation(-pivot.x, -pivot.y);
}

// Hartley conditioning: centroid to the origin, mean distance sqrt(2).
Eigen::Matrix3d conditioner(const std::vector<Point2>& pts) {
    double cx = 0, cy = 0;
    for (const Point2& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= pts.size();
    cy /= pts.size();
    double mean = 0;
    for (const Point2& p : pts)
        mean += std::hypot(p.x - cx, p.y - cy);
    mean /= pts.size();
    const double s = mean > 1e-12 ? std::sqrt(2.0) / mean : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
    return t;
}

Image crop(const Image& src, int ox, int oy, int w, int h) {
    Image out(src.channels, h, w);
    for (int c = 0; c < src.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = src.at(c, y + oy, x + ox);
    return out;
}

}  // namespace

AffineParamRanges affine_ranges(const EngineOptions& options) {
    AffineParamRanges r;
    r.rotation_deg = {-options.max_rotation, options.max_rotation};
    r.scale = {options.scale_min, options.scale_max};
    r.translation_x = r.translation_y = {-options.max_translation, options.max_translation};
    r.perspective = {-options.max_perspective, options.max_perspective};
    return r;
}

Homography category_homography(AffineCategory category, double p0, double p1, Point2 pivot) {
    switch (category) {
    case AffineCategory::Rotation:
        return Homography::rotation(AngleRad(p0), pivot);
    case AffineCategory::Scaling:
        return Homography::scaling(p0, p0, pivot);
    case AffineCategory::Translation:
        return Homography::translation(p0, p1);
    case AffineCategory::Perspective: {
        Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
        m(2, 0) = p0;
        m(2, 1) = p1;
        return about(m, pivot);
    }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown category");
}

bool corners_contained(const Homography& h, int crop_w, int crop_h, Point2 crop_offset, int source_w,
                       int source_h) {
    const Homography inv = h.inverse();
    const double w = crop_w - 1, hh = crop_h - 1;
    for (Point2 q : {Point2{0, 0}, Point2{w, 0}, Point2{0, hh}, Point2{w, hh}}) {
        Point2 p;
        try {
            p = apply_homography(inv, q) + crop_offset;
        } catch (const Error&) {
            return false;
        }
        if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= source_w - 1.0 && p.y <= source_h - 1.0))
            return false;
    }
    return true;
}

std::vector<AffineCase> curate_affine_cases(const std::vector<Image>& images, AffineCategory category, int count,
                                            std::uint64_t seed, const AffineParamRanges& ranges) {
    if (count < 1)
        throw Error(ErrorCode::InvalidArgument, "count must be >= 1");
    if (images.empty())
        throw Error(ErrorCode::InvalidArgument, "no source images");
    for (const Image& img : images)
        if (img.width < 8 || img.height < 8)
            throw Error(ErrorCode::InvalidArgument, "source images must be at least 8x8");

    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (category_index(category) + 1)));
    std::vector<AffineCase> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt <= ranges.max_retries && !placed; ++attempt) {
            const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, images.size() - 1)(rng);
            const Image& src = images[idx];
            double p0 = 0, p1 = 0;
            switch (category) {
            case AffineCategory::Rotation:
                p0 = draw(rng, ranges.rotation_deg) * kDegree;
                break;
            case AffineCategory::Scaling:
                p0 = draw(rng, ranges.scale);
                break;
            case AffineCategory::Translation:
                p0 = draw(rng, ranges.translation_x);
                p1 = draw(rng, ranges.translation_y);
                break;
            case AffineCategory::Perspective:
                p0 = draw(rng, ranges.perspective);
                p1 = draw(rng, ranges.perspective);
                break;
            }
            // Largest centered crop whose transformed frame still pulls back inside the source.
            for (double f = 1.0; f >= ranges.min_crop_fraction - 1e-12; f -= 0.02) {
                const int cw = std::max(2, static_cast<int>(std::floor(f * src.width)));
                const int ch = std::max(2, static_cast<int>(std::floor(f * src.height)));
                const int ox = (src.width - cw) / 2;
                const int oy = (src.height - ch) / 2;
                const Point2 pivot{(cw - 1) / 2.0, (ch - 1) / 2.0};
                Homography h;
                try {
                    h = category_homography(category, p0, p1, pivot);
                } catch (const Error&) {
                    break;
                }
                const Point2 offset{static_cast<double>(ox), static_cast<double>(oy)};
                if (!corners_contained(h, cw, ch, offset, src.width, src.height))
                    continue;

                AffineCase c;
                c.reference = crop(src, ox, oy, cw, ch);
                c.warped = Image(src.channels, ch, cw);
                const Homography inv = h.inverse();
                for (int y = 0; y < ch; ++y)
                    for (int x = 0; x < cw; ++x) {
                        const Point2 p = apply_homography(inv, {static_cast<double>(x), static_cast<double>(y)}) + offset;
                        for (int k = 0; k < src.channels; ++k)
                            c.warped.at(k, y, x) = sample_clamped(src, k, p.x, p.y);
                    }
                c.H_gt = h;
                c.category = category;
                c.source_index = idx;
                c.crop_offset = offset;
                c.source_width = src.width;
                c.source_height = src.height;
                out.push_back(std::move(c));
                placed = true;
                break;
            }
        }
        if (!placed)
            throw Error(ErrorCode::UnsatisfiableCrop, "no crop contains the sampled " +
                                                          std::string(to_string(category)) + " transform after " +
                                                          std::to_string(ranges.max_retries + 1) + " draws");
    }
    return out;
}

Homography fit_homography(const std::vector<Point2>& from, const std::vector<Point2>& to) {
    if (from.size() != to.size() || from.size() < 4)
        throw Error(ErrorCode::DegenerateConfiguration, "homography fit needs >= 4 correspondences");
    const Eigen::Matrix3d ta = conditioner(from);
    const Eigen::Matrix3d tb = conditioner(to);
    const auto n = static_cast<Eigen::Index>(from.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d p = ta * Eigen::Vector3d(from[i].x, from[i].y, 1.0);
        const Eigen::Vector3d q = tb * Eigen::Vector3d(to[i].x, to[i].y, 1.0);
        const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
        a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    const Eigen::Matrix3d m = tb.inverse() * hn * ta;
    if (std::abs(m(2, 2)) < 1e-12)
        throw Error(ErrorCode::DegenerateConfiguration, "fitted homography is not normalizable");
    try {
        return Homography(m);
    } catch (const Error& e) {
        throw Error(ErrorCode::DegenerateConfiguration, e.what());
    }
}

Homography estimate_homography(const FeatureMap& fmA, const FeatureMap& fmB, const std::vector<Point2>& keypoints,
                               std::uint64_t seed) {
    if (keypoints.size() < 4)
        throw Error(ErrorCode::DegenerateConfiguration, "at least 4 keypoints are required");
    if (fmA.data.channels != fmB.data.channels)
        throw Error(ErrorCode::ShapeMismatch, "feature maps differ in channel count");

    const Tensor& b = fmB.data;
    const std::size_t plane = b.plane_size();
    struct Match {
        Point2 a, b;
    };
    std::vector<Match> matches;
    for (const Point2& k : keypoints) {
        if (!feature_in_bounds(fmA, k))
            continue;
        const std::vector<double> v = sample_feature(fmA, k);
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            double d = 0.0;
            for (int c = 0; c < b.channels && d < best; ++c) {
                const double diff = b.data[c * plane + i] - v[c];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        const double bx = static_cast<double>(best_i % b.width) / fmB.scale;
        const double by = static_cast<double>(best_i / b.width) / fmB.scale;
        matches.push_back({k, {bx, by}});
    }
    if (matches.size() < 4)
        throw Error(ErrorCode::DegenerateConfiguration, "fewer than 4 keypoints fall inside the feature map");
    std::sort(matches.begin(), matches.end(), [](const Match& l, const Match& r) {
        return std::tie(l.a.y, l.a.x, l.b.y, l.b.x) < std::tie(r.a.y, r.a.x, r.b.y, r.b.x);
    });

    auto inliers_of = [&](const Homography& h) {
        std::vector<std::size_t> in;
        for (std::size_t i = 0; i < matches.size(); ++i) {
            try {
                if (distance(apply_homography(h, matches[i].a), matches[i].b) <= kRansacThresholdPx)
                    in.push_back(i);
            } catch (const Error&) {
            }
        }
        return in;
    };

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, matches.size() - 1);
    std::vector<std::size_t> best_inliers;
    std::vector<Point2> from(4), to(4);
    for (int it = 0; it < kRansacIterations; ++it) {
        std::array<std::size_t, 4> s{};
        for (int j = 0; j < 4; ++j) {
            std::size_t cand;
            do {
                cand = pick(rng);
            } while (std::find(s.begin(), s.begin() + j, cand) != s.begin() + j);
            s[j] = cand;
        }
        for (int j = 0; j < 4; ++j) {
            from[j] = matches[s[j]].a;
            to[j] = matches[s[j]].b;
        }
        Homography h;
        try {
            h = fit_homography(from, to);
        } catch (const Error&) {
            continue;
        }
        std::vector<std::size_t> in = inliers_of(h);
        if (in.size() > best_inliers.size())
            best_inliers = std::move(in);
    }
    if (best_inliers.size() < 4)
        throw Error(ErrorCode::DegenerateConfiguration,
                    "best consensus has " + std::to_string(best_inliers.size()) + " inliers");
    from.clear();
    to.clear();
    for (std::size_t i : best_inliers) {
        from.push_back(matches[i].a);
        to.push_back(matches[i].b);
    }
    return fit_homography(from, to);
}

std::vector<Point2> keypoint_grid(int width, int height, int g) {
    if (g < 2)
        throw Error(ErrorCode::InvalidArgument, "keypoint grid needs g >= 2");
    const double mx = std::round(0.15 * (width - 1));
    const double my = std::round(0.15 * (height - 1));
    std::vector<Point2> out;
    for (int j = 0; j < g; ++j)
        for (int i = 0; i < g; ++i)
            out.push_back({std::round(mx + i * (width - 1 - 2 * mx) / (g - 1)),
                           std::round(my + j * (height - 1 - 2 * my) / (g - 1))});
    return out;
}

const CategoryStats& BenchReport::stats(AffineCategory c) const { return per_category[category_index(c)]; }

json BenchReport::to_json() const {
    json cats = json::object();
    for (AffineCategory c : kAllCategories) {
        const CategoryStats& s = stats(c);
        cats[std::string(to_string(c))] = {{"total", s.total}, {"correct", s.correct}, {"accuracy", s.accuracy()}};
    }
    json rows = json::array();
    for (const CaseScore& s : cases)
        rows.push_back({{"category", std::string(to_string(s.category))},
                        {"corner_error", std::isfinite(s.corner_error) ? json(s.corner_error) : json(nullptr)},
                        {"correct", s.correct}});
    return json{{"method", method}, {"categories", cats}, {"cases", rows}};
}

BenchReport evaluate_method(const std::vector<AffineCase>& cases, FeatureBackend& backend, int grid,
                            const EvalOptions& options) {
    if (cases.empty())
        throw Error(ErrorCode::EmptyBenchmark, "no cases to evaluate");
    LinearDenoiser zero(0.0);
    Denoiser& den = options.denoiser ? *options.denoiser : zero;
    BenchReport report;
    report.method = options.label.empty() ? backend.name() : options.label;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const AffineCase& c = cases[i];
        double err = std::numeric_limits<double>::infinity();
        try {
            const FeatureMap fa = backend.extract({c.reference, options.timestep}, options.timestep, den, "");
            const FeatureMap fb = backend.extract({c.warped, options.timestep}, options.timestep, den, "");
            const Homography h = estimate_homography(fa, fb, keypoint_grid(c.reference.width, c.reference.height, grid),
                                                     options.seed + i);
            err = corner_error(h, c.H_gt, c.reference.width, c.reference.height);
        } catch (const Error&) {
        }
        const bool ok = err <= kCornerThresholdPx;
        CategoryStats& s = report.per_category[category_index(c.category)];
        ++s.total;
        s.correct += ok ? 1 : 0;
        report.cases.push_back({c.category, err, ok});
    }
    return report;
}

std::string format_table(const std::vector<BenchReport>& reports) {
    std::size_t name_w = 6;
    for (const BenchReport& r : reports)
        name_w = std::max(name_w, r.method.size());
    std::ostringstream out;
    out << "Homography estimation accuracy [%] at 3 pixels\n";
    out << std::left << std::setw(static_cast<int>(name_w)) << "Method";
    for (AffineCategory c : kAllCategories)
        out << "  " << std::right << std::setw(11) << to_string(c);
    out << '\n';
    for (const BenchReport& r : reports) {
        out << std::left << std::setw(static_cast<int>(name_w)) << r.method;
        for (AffineCategory c : kAllCategories) {
            const CategoryStats& s = r.stats(c);
            std::ostringstream cell;
            if (s.total)
                cell << std::fixed << std::setprecision(1) << 100.0 * s.accuracy();
            else
                cell << "-";
            out << "  " << std::right << std::setw(11) << cell.str();
        }
        out << '\n';
    }
    return out.str();
}

json reports_to_json(const std::vector<BenchReport>& reports) {
    json methods = json::array();
    for (const BenchReport& r : reports)
        methods.push_back(r.to_json());
    return json{{"metric", "homography_accuracy"}, {"threshold_px", kCornerThresholdPx}, {"methods", methods}};
}

json DragBenchSummary::to_json() const {
    json rows = json::array();
    for (const DragCaseOutcome& o : outcomes) {
        json row{{"name", o.name}, {"completed", o.completed}};
        if (!o.error.empty())
            row["error"] = o.error;
        if (o.result) {
            row["stop_reason"] = std::string(to_string(o.result->stop_reason));
            row["steps"] = o.steps;
            row["final_mean_distance"] = o.final_mean_distance;
            row["converged"] = o.converged;
        }
        rows.push_back(row);
    }
    return json{{"cases", rows},
                {"completed", completed},
                {"failed", failed},
                {"convergence_rate", convergence_rate},
                {"mean_final_distance", mean_final_distance},
                {"wall_seconds", wall_seconds}};
}

namespace {

DragBenchSummary run_cases(std::size_t n, const std::function<DragCase(std::size_t)>& load,
                           const std::function<std::string(std::size_t)>& fallback_name,
                           const DragBenchOptions& options) {
    if (n == 0)
        throw Error(ErrorCode::EmptyBenchmark, "no drag cases");
    const auto start = std::chrono::steady_clock::now();
    DragBenchSummary summary;
    summary.outcomes.resize(n);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            DragCaseOutcome& o = summary.outcomes[i];
            o.name = fallback_name(i);
            try {
                const DragCase c = load(i);
                o.name = c.name;
                const EngineOptions eo = resolve_options(c.options, options.overrides);
                Engine engine = make_engine(eo);
                DragConfig cfg = make_drag_config(c, eo);
                DragSession session(cfg, *engine.denoiser, *engine.backend);
                DragResult r = session.run();
                o.steps = static_cast<int>(r.trajectory.size()) - 1;
                o.final_mean_distance = r.trajectory.back().mean_dist_to_target;
                o.converged = r.stop_reason == StopReason::Converged;
                o.completed = r.stop_reason != StopReason::Aborted;
                if (!o.completed)
                    o.error = r.abort_detail;
                if (options.out_dir) {
                    std::ostringstream dir;
                    dir << std::setw(3) << std::setfill('0') << i << '_' << o.name;
                    write_run_outputs(*options.out_dir / dir.str(), cfg, r, eo);
                }
                o.result = std::move(r);
                o.config = std::move(cfg);
            } catch (const std::exception& e) {
                o.completed = false;
                o.error = e.what();
            }
        }
    };
    const int workers = std::clamp(options.workers, 1, static_cast<int>(n));
    {
        std::vector<std::jthread> pool;
        for (int w = 1; w < workers; ++w)
            pool.emplace_back(work);
        work();
    }

    double dist = 0.0;
    std::size_t converged = 0;
    for (const DragCaseOutcome& o : summary.outcomes) {
        if (!o.completed)
            continue;
        ++summary.completed;
        dist += o.final_mean_distance;
        converged += o.converged ? 1 : 0;
    }
    summary.failed = n - summary.completed;
    if (summary.completed) {
        summary.mean_final_distance = dist / summary.completed;
        summary.convergence_rate = static_cast<double>(converged) / summary.completed;
    }
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        std::ofstream f(*options.out_dir / "summary.json", std::ios::trunc);
        f << summary.to_json().dump(2) << '\n';
        if (!f)
            throw Error(ErrorCode::Io, "cannot write summary to " + options.out_dir->string());
    }
    return summary;
}

}  // namespace

DragBenchSummary run_drag_benchmark(const std::vector<DragCase>& cases, const DragBenchOptions& options) {
    return run_cases(
        cases.size(), [&](std::size_t i) { return cases[i]; }, [&](std::size_t i) { return cases[i].name; },
        options);
}

DragBenchSummary run_drag_benchmark_files(const std::vector<std::filesystem::path>& files,
                                          const DragBenchOptions& options) {
    return run_cases(
        files.size(), [&](std::size_t i) { return load_drag_case(files[i]); },
        [&](std::size_t i) { return files[i].stem().string(); }, options);
}

}  // namespace rotdrag
