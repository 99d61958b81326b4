// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/drag_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "rotdrag/error.hpp"

namespace rotdrag {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool inside_image(Point2 p, int w, int h) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1 && p.y <= h - 1;
}

double sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

Point2 clamp_to_map(const FeatureMap& fm, Point2 p) {
    const double max_x = (fm.data.width - 1) / fm.scale;
    const double max_y = (fm.data.height - 1) / fm.scale;
    return {std::clamp(p.x, 0.0, max_x), std::clamp(p.y, 0.0, max_y)};
}

double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += std::abs(a[i] - b[i]);
    return acc;
}

}  // namespace

std::string_view to_string(StopReason r) {
    switch (r) {
    case StopReason::Converged: return "Converged";
    case StopReason::MaxSteps: return "MaxSteps";
    case StopReason::Aborted: return "Aborted";
    }
    return "Unknown";
}

void DragConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (image.empty())
        fail("image is empty");
    if (!image.all_finite())
        fail("image has non-finite pixels");
    if (sources.empty())
        fail("at least one (source, target) pair is required");
    if (sources.size() != targets.size())
        fail("sources and targets differ in length");
    if (r1 < 1 || r2 < r1)
        fail("radii must satisfy r2 >= r1 >= 1");
    if (mask.width != image.width || mask.height != image.height)
        fail("mask dimensions differ from the image");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (!inside_image(sources[i], image.width, image.height) || !inside_image(targets[i], image.width, image.height))
            fail("point pair " + std::to_string(i) + " lies outside the image");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr))
        fail("learning rate must be finite and non-negative");
    if (!(lambda_mask >= 0.0) || !std::isfinite(lambda_mask))
        fail("lambda must be finite and non-negative");
    if (max_steps < 0)
        fail("max_steps must be non-negative");
    if (!(stop_dist > 0.0))
        fail("stop_dist must be positive");
    if (n_ddim_steps < 1 || t_edit < 1 || t_edit > n_ddim_steps)
        fail("t_edit must lie in [1, n_ddim_steps]");
    if (!(angle_bin > 0.0))
        fail("angle_bin must be positive");
}

DragSession::DragSession(DragConfig config, Denoiser& denoiser, FeatureBackend& backend,
                         std::shared_ptr<const LatentCodec> codec, NoiseSchedule schedule)
    : m_config(std::move(config)), m_denoiser(denoiser), m_backend(backend), m_codec(std::move(codec)),
      m_schedule(std::move(schedule)) {
    m_config.validate();
    const auto start = Clock::now();

    const int total = m_schedule.total_steps();
    m_edit_t = static_cast<int>(std::lround(static_cast<double>(total) * m_config.t_edit / m_config.n_ddim_steps));
    m_prev_t = static_cast<int>(
        std::lround(static_cast<double>(total) * (m_config.t_edit - 1) / m_config.n_ddim_steps));
    if (m_edit_t < 1)
        throw Error(ErrorCode::InvalidArgument, "editing timestep rounds to zero");

    const double scale = m_codec->scale();
    const Tensor encoded = m_codec->encode(m_config.image);
    m_denoiser.prepare(encoded, m_config.prompt);
    m_original = ddim_invert(m_schedule, LatentCode{encoded, 0}, m_edit_t, m_denoiser, m_config.prompt,
                             m_config.t_edit);
    m_latent = m_original;
    m_original_prev = denoise_to_previous(m_original);

    for (std::size_t i = 0; i < m_config.sources.size(); ++i) {
        m_sources.push_back(m_config.sources[i] * scale);
        m_targets.push_back(m_config.targets[i] * scale);
    }

    const int lh = m_latent.data.height;
    const int lw = m_latent.data.width;
    m_keep = Tensor(1, lh, lw);
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            const int ix = std::clamp(static_cast<int>(std::lround(x / scale)), 0, m_config.mask.width - 1);
            const int iy = std::clamp(static_cast<int>(std::lround(y / scale)), 0, m_config.mask.height - 1);
            m_keep.at(0, y, x) = m_config.mask.at(ix, iy) ? 0.0 : 1.0;
        }

    Point2 axis;
    try {
        axis = select_rotation_axis(m_config.sources, m_config.targets, m_config.mask);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyMaskLine)
            throw;
        Point2 sum;
        std::size_t n = 0;
        for (int y = 0; y < m_config.mask.height; ++y)
            for (int x = 0; x < m_config.mask.width; ++x)
                if (m_config.mask.at(x, y)) {
                    sum = sum + Point2{static_cast<double>(x), static_cast<double>(y)};
                    ++n;
                }
        axis = n > 0 ? sum * (1.0 / n) : image_center(m_config.image.width, m_config.image.height);
    }
    m_state.axis = axis * scale;
    m_state.handles = m_sources;
    m_state.angles.assign(m_sources.size(), AngleRad(0.0));
    m_state.step = 0;
    m_last_degenerate.assign(m_sources.size(), false);

    m_adam_m = Tensor(m_latent.data.channels, lh, lw);
    m_adam_v = Tensor(m_latent.data.channels, lh, lw);
    refresh_frozen();
    m_inversion_seconds = seconds_since(start);
}

DragSession init_session(DragConfig config, Denoiser& denoiser, FeatureBackend& backend) {
    return DragSession(std::move(config), denoiser, backend);
}

LatentCode DragSession::denoise_to_previous(const LatentCode& z) {
    return ddim_step(m_schedule, z, m_prev_t, m_denoiser, m_config.prompt);
}

FeatureMap DragSession::features_of(const LatentCode& z) {
    FeatureMap fm = m_backend.extract(z, z.timestep, m_denoiser, m_config.prompt);
    if (fm.data.height <= 0 || fm.data.width <= 0 || !(fm.scale > 0.0))
        throw Error(ErrorCode::DenoiserFailure, "feature backend returned an empty map");
    return fm;
}

std::vector<Point2> DragSession::handles_image() const {
    std::vector<Point2> out;
    const double inv = 1.0 / m_codec->scale();
    for (const Point2& h : m_state.handles)
        out.push_back(h * inv);
    return out;
}

double DragSession::mean_distance_to_targets() const {
    const auto handles = handles_image();
    double total = 0.0;
    for (std::size_t i = 0; i < handles.size(); ++i)
        total += distance(handles[i], m_config.targets[i]);
    return total / static_cast<double>(handles.size());
}

void DragSession::refresh_frozen() {
    const auto handles = handles_image();
    m_frozen.resize(handles.size());
    for (std::size_t i = 0; i < handles.size(); ++i)
        m_frozen[i] = distance(handles[i], m_config.targets[i]) < m_config.stop_dist;
}

bool DragSession::all_converged() const {
    return std::all_of(m_frozen.begin(), m_frozen.end(), [](bool f) { return f; });
}

MotionLoss DragSession::motion_loss() {
    const bool any_moving = std::any_of(m_frozen.begin(), m_frozen.end(), [](bool f) { return !f; });
    if (!any_moving)
        throw Error(ErrorCode::AllHandlesConverged, "every handle is within the stop distance");

    const FeatureMap fm = features_of(m_latent);
    Tensor feature_grad(fm.data.channels, fm.data.height, fm.data.width);
    double loss = 0.0;
    const int r1 = m_config.r1;
    std::vector<double> upstream(fm.data.channels);
    for (std::size_t i = 0; i < m_state.handles.size(); ++i) {
        if (m_frozen[i])
            continue;
        const Point2 h = m_state.handles[i];
        const Point2 to_target = m_targets[i] - h;
        const double len = norm(to_target);
        if (len < 1e-12)
            continue;
        const Point2 d = to_target * (1.0 / len);
        for (int dy = -r1; dy <= r1; ++dy)
            for (int dx = -r1; dx <= r1; ++dx) {
                const Point2 q = h + Point2{static_cast<double>(dx), static_cast<double>(dy)};
                const Point2 shifted = q + d;
                if (!feature_in_bounds(fm, q) || !feature_in_bounds(fm, shifted))
                    continue;
                const auto tmpl = sample_feature(fm, q);
                const auto moved = sample_feature(fm, shifted);
                for (std::size_t c = 0; c < tmpl.size(); ++c) {
                    const double diff = moved[c] - tmpl[c];
                    loss += std::abs(diff);
                    upstream[c] = sign(diff);
                }
                sample_feature_adjoint(feature_grad, fm.scale, shifted, upstream);
            }
    }
    MotionLoss out{loss, m_backend.extract_vjp(m_latent, m_latent.timestep, m_denoiser, m_config.prompt, feature_grad)};

    if (m_config.lambda_mask > 0.0) {
        const LatentCode prev = denoise_to_previous(m_latent);
        Tensor upstream_latent(prev.data.channels, prev.data.height, prev.data.width);
        double preserve = 0.0;
        for (int c = 0; c < prev.data.channels; ++c)
            for (int y = 0; y < prev.data.height; ++y)
                for (int x = 0; x < prev.data.width; ++x) {
                    const double keep = m_keep.at(0, y, x);
                    const double diff = (prev.data.at(c, y, x) - m_original_prev.data.at(c, y, x)) * keep;
                    preserve += std::abs(diff);
                    upstream_latent.at(c, y, x) = sign(diff) * keep;
                }
        out.value += m_config.lambda_mask * preserve;
        const Tensor g = ddim_step_vjp(m_schedule, m_latent, m_prev_t, m_denoiser, m_config.prompt, upstream_latent);
        for (std::size_t k = 0; k < g.size(); ++k)
            out.gradient.data[k] += m_config.lambda_mask * g.data[k];
    }
    return out;
}

StepReport DragSession::optimize_step() {
    if (m_aborted)
        throw Error(ErrorCode::InvalidArgument, "session was aborted");
    if (!m_latent.data.all_finite()) {
        m_aborted = true;
        throw Error(ErrorCode::NonFiniteLoss, "latent contains non-finite values");
    }
    MotionLoss ml = motion_loss();
    if (!std::isfinite(ml.value) || !ml.gradient.all_finite()) {
        m_aborted = true;
        throw Error(ErrorCode::NonFiniteLoss, "motion supervision loss is not finite");
    }

    ++m_adam_t;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, m_adam_t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, m_adam_t);
    for (std::size_t k = 0; k < m_latent.data.size(); ++k) {
        const double g = ml.gradient.data[k];
        double& m = m_adam_m.data[k];
        double& v = m_adam_v.data[k];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
        m_latent.data.data[k] -= m_config.lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
    }
    ++m_state.step;
    return make_report(ml.value);
}

const RotatedReference& DragSession::rotated_reference(AngleRad angle, bool* hit) {
    const auto key = static_cast<std::int64_t>(std::llround(angle.value() / m_config.angle_bin));
    if (auto it = m_cache.find(key); it != m_cache.end()) {
        ++m_reference_hits;
        if (hit)
            *hit = true;
        return it->second;
    }
    if (hit)
        *hit = false;
    RotatedReference ref;
    ref.angle_key = key;
    ref.angle = AngleRad(static_cast<double>(key) * m_config.angle_bin);
    const Image rotated = rotate_image(m_config.image, ref.angle);
    ref.rotated_latent = ddim_invert(m_schedule, LatentCode{m_codec->encode(rotated), 0}, m_edit_t, m_denoiser,
                                     m_config.prompt, m_config.t_edit);
    ref.features = features_of(ref.rotated_latent);
    const double scale = m_codec->scale();
    const Point2 center = image_center(m_config.image.width, m_config.image.height);
    for (const Point2& s : m_config.sources)
        ref.rotated_sources.push_back(rotate_point(s, center, ref.angle) * scale);
    ++m_references_built;
    return m_cache.emplace(key, std::move(ref)).first->second;
}

TrackingState DragSession::track_points() {
    const FeatureMap current = features_of(m_latent);
    const int r2 = m_config.r2;
    bool all_hits = true;
    for (std::size_t i = 0; i < m_state.handles.size(); ++i) {
        if (m_frozen[i])
            continue;
        const Point2 h = m_state.handles[i];
        std::vector<double> tmpl;
        if (m_template_mode == TemplateMode::Fixed) {
            if (!m_fixed_template_features)
                m_fixed_template_features = features_of(m_original);
            tmpl = sample_feature(*m_fixed_template_features, clamp_to_map(*m_fixed_template_features, m_sources[i]));
            m_state.angles[i] = AngleRad(0.0);
            m_last_degenerate[i] = false;
        } else {
            AngleRad theta(0.0);
            try {
                theta = compute_rotation_angle(m_sources[i], h, m_state.axis);
                m_last_degenerate[i] = false;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DegenerateAxis)
                    throw;
                m_last_degenerate[i] = true;
            }
            m_state.angles[i] = theta;
            bool hit = false;
            const RotatedReference& ref = rotated_reference(theta, &hit);
            all_hits = all_hits && hit;
            tmpl = sample_feature(ref.features, clamp_to_map(ref.features, ref.rotated_sources[i]));
        }

        Point2 best = h;
        double best_cost = std::numeric_limits<double>::infinity();
        double best_offset = std::numeric_limits<double>::infinity();
        const int x_lo = static_cast<int>(std::ceil(h.x - r2 - 1e-9));
        const int x_hi = static_cast<int>(std::floor(h.x + r2 + 1e-9));
        const int y_lo = static_cast<int>(std::ceil(h.y - r2 - 1e-9));
        const int y_hi = static_cast<int>(std::floor(h.y + r2 + 1e-9));
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                const Point2 q{static_cast<double>(x), static_cast<double>(y)};
                if (!feature_in_bounds(current, q))
                    continue;
                const double cost = l1_distance(sample_feature(current, q), tmpl);
                const double offset = distance(q, h);
                // Scan order is (y, x), so later candidates only win on strict improvement.
                if (cost < best_cost - 1e-12 || (std::abs(cost - best_cost) <= 1e-12 && offset < best_offset - 1e-12)) {
                    best = q;
                    best_cost = cost;
                    best_offset = offset;
                }
            }
        m_state.handles[i] = best;
    }
    m_last_tracking_hit = all_hits;
    refresh_frozen();
    return m_state;
}

void DragSession::set_handles(const std::vector<Point2>& image_points) {
    if (image_points.size() != m_state.handles.size())
        throw Error(ErrorCode::InvalidArgument, "handle count differs from the number of point pairs");
    for (std::size_t i = 0; i < image_points.size(); ++i) {
        if (!inside_image(image_points[i], m_config.image.width, m_config.image.height))
            throw Error(ErrorCode::OutOfBounds, "handle lies outside the image");
        m_state.handles[i] = image_points[i] * m_codec->scale();
    }
    refresh_frozen();
}

StepReport DragSession::make_report(double loss) const {
    StepReport r;
    r.step = m_state.step;
    r.loss = loss;
    r.handle_positions = handles_image();
    r.mean_dist_to_target = mean_distance_to_targets();
    r.angle_used = m_state.angles;
    r.cache_hit = m_last_tracking_hit;
    r.degenerate_axis = m_last_degenerate;
    return r;
}

DragResult DragSession::run(const ProgressSink& progress, std::stop_token stop) {
    DragResult result;
    result.timing.inversion = m_inversion_seconds;
    auto emit = [&](StepReport r) {
        if (progress)
            progress(r);
        result.trajectory.push_back(std::move(r));
    };

    double initial_loss = 0.0;
    if (!all_converged()) {
        try {
            initial_loss = motion_loss().value;
        } catch (const Error&) {
            initial_loss = std::numeric_limits<double>::quiet_NaN();
        }
    }
    if (!std::isfinite(initial_loss)) {
        m_aborted = true;
        result.stop_reason = StopReason::Aborted;
        result.abort_detail = "NonFiniteLoss: initial motion supervision loss is not finite";
        StepReport r = make_report(0.0);
        emit(r);
        return result;
    }
    emit(make_report(initial_loss));

    if (all_converged()) {
        result.stop_reason = StopReason::Converged;
    } else {
        result.stop_reason = StopReason::MaxSteps;
        for (int k = 0; k < m_config.max_steps; ++k) {
            if (stop.stop_requested()) {
                result.stop_reason = StopReason::Aborted;
                result.abort_detail = "cancelled";
                break;
            }
            StepReport report;
            try {
                auto t0 = Clock::now();
                report = optimize_step();
                result.timing.optimization += seconds_since(t0);
                t0 = Clock::now();
                track_points();
                result.timing.tracking += seconds_since(t0);
            } catch (const Error& e) {
                m_aborted = true;
                result.stop_reason = StopReason::Aborted;
                result.abort_detail = e.what();
                break;
            }
            const double loss = report.loss;
            report = make_report(loss);
            emit(std::move(report));
            if (all_converged()) {
                result.stop_reason = StopReason::Converged;
                break;
            }
        }
    }

    result.references_built = m_references_built;
    result.reference_hits = m_reference_hits;
    if (result.stop_reason == StopReason::Aborted)
        return result;

    const auto t0 = Clock::now();
    const LatentCode clean = ddim_denoise(m_schedule, m_latent, m_denoiser, m_config.prompt, m_config.t_edit);
    result.image = m_codec->decode(clean.data);
    for (double& v : result.image.data)
        v = std::clamp(v, 0.0, 1.0);
    result.timing.denoise = seconds_since(t0);
    return result;
}

}  // namespace rotdrag
