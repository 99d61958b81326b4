// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "rotdrag/image_io.hpp"

namespace rotdrag::testing {

Image textured_image(int width, int height, std::uint64_t seed, int blobs) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(3, height, width);
    const double gx = 0.3 * (u(rng) - 0.5), gy = 0.3 * (u(rng) - 0.5);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img.at(c, y, x) = 0.5 + gx * (x - width / 2.0) / width + gy * (y - height / 2.0) / height;
    for (int b = 0; b < blobs; ++b) {
        const double cx = u(rng) * width, cy = u(rng) * height;
        const double sigma = 1.5 + 3.5 * u(rng);
        const double col[3] = {u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
        const int r = static_cast<int>(std::ceil(3 * sigma));
        for (int y = std::max(0, static_cast<int>(cy) - r); y < std::min(height, static_cast<int>(cy) + r + 1); ++y)
            for (int x = std::max(0, static_cast<int>(cx) - r); x < std::min(width, static_cast<int>(cx) + r + 1); ++x) {
                const double g = std::exp(-0.5 * ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (sigma * sigma));
                for (int c = 0; c < 3; ++c)
                    img.at(c, y, x) += 0.6 * col[c] * g;
            }
    }
    for (double& v : img.data)
        v = std::clamp(v, 0.0, 1.0);
    return img;
}

namespace {

bool well_inside(Point2 p) {
    return p.x >= 6.0 && p.y >= 6.0 && p.x <= kTrackingSize - 7.0 && p.y <= kTrackingSize - 7.0;
}

}  // namespace

TrackingTrial make_tracking_trial(double degrees, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double pi = std::numbers::pi;
    TrackingTrial t;
    t.angle = AngleRad::degrees(degrees);
    for (;;) {
        const Point2 centre{31.5 + 5.0 * u(rng), 31.5 + 5.0 * u(rng)};
        const double phi = pi * u(rng);
        const double cp = std::cos(phi), sp = std::sin(phi);
        const double ca = pi * u(rng);
        t.source = centre + Point2{cp * kDiskRadius, sp * kDiskRadius};
        t.axis = t.source + Point2{kAxisDistance * std::cos(ca), kAxisDistance * std::sin(ca)};
        t.truth = rotate_point(t.source, t.axis, t.angle);
        const Point2 far = rotate_point(t.source, t.axis, AngleRad::degrees(degrees + 40.0));
        if (!well_inside(t.axis) || !well_inside(t.truth) || !well_inside(far))
            continue;

        t.image = Image(3, kTrackingSize, kTrackingSize, 0.5);
        for (int y = 0; y < kTrackingSize; ++y)
            for (int x = 0; x < kTrackingSize; ++x) {
                const double dx = x - centre.x, dy = y - centre.y;
                const double a = cp * dx + sp * dy, b = -sp * dx + cp * dy;
                const double rim = 1.0 / (1.0 + std::exp(std::hypot(a, b) - kDiskRadius));
                const double da = a + 0.6 * kDiskRadius;
                const double dot = std::exp(-0.25 * (da * da + b * b));
                t.image.at(0, y, x) += 0.4 * rim;
                t.image.at(1, y, x) += -0.3 * dot - 0.2 * rim;
                t.image.at(2, y, x) += 0.12 * rim;
            }
        t.current = warp_image(t.image, Homography::rotation(t.angle, t.axis), kTrackingSize, kTrackingSize);
        t.start = {std::round(t.truth.x + u(rng)), std::round(t.truth.y + u(rng))};
        return t;
    }
}

Point2 track_trial(const TrackingTrial& trial, TemplateMode mode, Denoiser& denoiser, FeatureBackend& backend) {
    DragConfig cfg;
    cfg.image = trial.image;
    cfg.sources = {trial.source, trial.axis};
    cfg.targets = {rotate_point(trial.source, trial.axis, AngleRad(trial.angle.value() + 40.0 * kDegree)), trial.axis};
    cfg.mask = BinaryMask(kTrackingSize, kTrackingSize, true);
    cfg.stop_dist = 1e-3;
    DragSession session(cfg, denoiser, backend);
    session.latent() = ddim_invert(NoiseSchedule::scaled_linear(), LatentCode{trial.current, 0},
                                   session.edit_timestep(), denoiser, "", cfg.t_edit);
    session.set_handles({trial.start, trial.axis});
    session.set_template_mode(mode);
    return session.track_points().handles[0];
}

DragConfig make_arc_fixture(double degrees) {
    constexpr int n = 64;
    const Point2 pivot{24, 32};
    const double radii[3] = {6, 10, 14};
    DragConfig cfg;
    cfg.image = Image(3, n, n, 0.5);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double u = x - pivot.x, v = y - pivot.y;
            const double along = 1.0 / (1.0 + std::exp((u - 18.0) / 0.8)) / (1.0 + std::exp(-(u + 2.0) / 0.8));
            cfg.image.at(0, y, x) += 0.4 * along * std::exp(-0.5 * v * v / 6.25);
            for (int k = 0; k < 3; ++k) {
                const double du = u - radii[k];
                const double blob = std::exp(-0.25 * (du * du + v * v));
                cfg.image.at(1 + k % 2, y, x) += (k == 1 ? -0.24 : 0.24) * blob;
            }
        }
    cfg.mask = BinaryMask(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            cfg.mask.set(x, y, std::hypot(x - pivot.x, y - pivot.y) <= 22.0);
    cfg.sources.push_back(pivot);
    cfg.targets.push_back(pivot);
    for (double r : radii) {
        const Point2 s = pivot + Point2{r, 0};
        cfg.sources.push_back(s);
        cfg.targets.push_back(rotate_point(s, pivot, AngleRad::degrees(degrees)));
    }
    return cfg;
}

double oracle_alpha(int t) {
    double a = 1.0;
    const double lo = std::sqrt(0.00085), hi = std::sqrt(0.012);
    for (int i = 0; i < t; ++i) {
        const double root = lo + (hi - lo) * i / 999.0;
        a *= 1.0 - root * root;
    }
    return a;
}

double scalar_ddim_oracle(double x0, const std::vector<int>& timesteps, double gain) {
    double x = x0;
    for (std::size_t i = 1; i < timesteps.size(); ++i) {
        const double af = oracle_alpha(timesteps[i - 1]), at = oracle_alpha(timesteps[i]);
        const double eps = gain * x;
        x = std::sqrt(at / af) * x + (std::sqrt(1.0 - at) - std::sqrt(at * (1.0 - af) / af)) * eps;
    }
    return x;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    m_path = std::filesystem::temp_directory_path() /
             ("rotdrag_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(m_path);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(m_path, ec);
}

std::filesystem::path write_arc_case(const std::filesystem::path& dir, const std::string& name) {
    const DragConfig cfg = make_arc_fixture();
    write_png(dir / (name + ".png"), cfg.image);
    write_file(dir / (name + "_mask.png"), encode_mask_png(cfg.mask));
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.sources.size(); ++i)
        pts.push_back({{"source", {cfg.sources[i].x, cfg.sources[i].y}}, {"target", {cfg.targets[i].x, cfg.targets[i].y}}});
    nlohmann::json j{{"image", name + ".png"}, {"mask", name + "_mask.png"}, {"prompt", "rotate the bar"}, {"points", pts}};
    const auto path = dir / (name + ".json");
    std::ofstream(path) << j.dump(2);
    return path;
}

}  // namespace rotdrag::testing
