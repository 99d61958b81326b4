// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "rotdrag/diffusion.hpp"
#include "rotdrag/features.hpp"
#include "rotdrag/geometry.hpp"
#include "rotdrag/tensor.hpp"

namespace rotdrag {

inline constexpr double kDegree = 0.017453292519943295;

/// One editing task plus the optimizer hyperparameters.
struct DragConfig {
    Image image;
    std::vector<Point2> sources;
    std::vector<Point2> targets;
    BinaryMask mask;
    std::string prompt;

    int r1 = 1;                   ///< motion-supervision patch radius
    int r2 = 3;                   ///< tracking search radius
    double lambda_mask = 0.1;     ///< weight of the out-of-mask preservation term
    double lr = 0.01;
    int max_steps = 160;
    double stop_dist = 2.0;       ///< pixels
    int t_edit = 35;              ///< inversion depth, in steps of the n_ddim_steps trajectory
    int n_ddim_steps = 50;
    double angle_bin = kDegree;   ///< width of the rotated-reference cache bins

    /// Throws InvalidArgument describing the first violated invariant.
    void validate() const;
};

/// Maps images to the space the denoiser works in. `scale` is latent pixels per image pixel.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual Tensor encode(const Image& image) const = 0;
    virtual Image decode(const Tensor& latent) const = 0;
    virtual double scale() const = 0;
};

/// The analytic backends work directly on image pixels.
class IdentityCodec final : public LatentCodec {
public:
    Tensor encode(const Image& image) const override { return image; }
    Image decode(const Tensor& latent) const override { return latent; }
    double scale() const override { return 1.0; }
};

struct TrackingState {
    std::vector<Point2> handles;  ///< latent coordinates
    Point2 axis;                  ///< latent coordinates
    std::vector<AngleRad> angles;
    int step = 0;
};

struct RotatedReference {
    std::int64_t angle_key = 0;
    AngleRad angle;
    LatentCode rotated_latent;
    std::vector<Point2> rotated_sources;  ///< latent coordinates
    FeatureMap features;
};

struct StepReport {
    int step = 0;
    double loss = 0.0;
    std::vector<Point2> handle_positions;  ///< image coordinates
    double mean_dist_to_target = 0.0;      ///< image pixels
    std::vector<AngleRad> angle_used;
    bool cache_hit = false;
    std::vector<bool> degenerate_axis;
};

enum class StopReason { Converged, MaxSteps, Aborted };

std::string_view to_string(StopReason r);

struct PhaseTiming {
    double inversion = 0.0;
    double optimization = 0.0;
    double tracking = 0.0;
    double denoise = 0.0;
};

struct DragResult {
    Image image;
    std::vector<StepReport> trajectory;
    StopReason stop_reason = StopReason::MaxSteps;
    std::string abort_detail;
    PhaseTiming timing;
    std::size_t references_built = 0;
    std::size_t reference_hits = 0;
};

struct MotionLoss {
    double value = 0.0;
    Tensor gradient;  ///< with respect to the current latent
};

using ProgressSink = std::function<void(const StepReport&)>;

/// Tracking variants. Fixed-template tracking skips rotated-reference lookup and matches the
/// unrotated source features, as plain drag editing does.
enum class TemplateMode { Rotated, Fixed };

/// State of one drag edit: inverted latent, tracked handles, optimizer moments and the
/// rotated-reference cache. Single-threaded; the denoiser and backend must outlive it.
class DragSession {
public:
    DragSession(DragConfig config, Denoiser& denoiser, FeatureBackend& backend,
                std::shared_ptr<const LatentCodec> codec = std::make_shared<IdentityCodec>(),
                NoiseSchedule schedule = NoiseSchedule::scaled_linear());

    const DragConfig& config() const { return m_config; }
    const TrackingState& tracking() const { return m_state; }
    const LatentCode& latent() const { return m_latent; }
    LatentCode& latent() { return m_latent; }
    const LatentCode& original_latent() const { return m_original; }
    int edit_timestep() const { return m_edit_t; }

    /// Handle positions mapped back to image coordinates.
    std::vector<Point2> handles_image() const;
    double mean_distance_to_targets() const;
    bool all_converged() const;
    const std::vector<bool>& frozen() const { return m_frozen; }

    /// Motion supervision with its gradient; the unshifted template term is held constant.
    /// Throws AllHandlesConverged when no handle is still moving.
    MotionLoss motion_loss();

    /// One Adam update of the full latent. Throws NonFiniteLoss (and marks the session aborted)
    /// when the loss or latent stops being finite.
    StepReport optimize_step();

    /// Nearest-neighbour relocation of every moving handle inside its r2 window.
    TrackingState track_points();

    DragResult run(const ProgressSink& progress = {}, std::stop_token stop = {});

    void set_template_mode(TemplateMode mode) { m_template_mode = mode; }

    /// Moves the tracked handles (image coordinates) without touching the latent.
    void set_handles(const std::vector<Point2>& image_points);

    /// Fetches or builds the rotated reference for the bin containing `angle`.
    const RotatedReference& rotated_reference(AngleRad angle, bool* hit = nullptr);
    std::size_t references_built() const { return m_references_built; }
    std::size_t reference_hits() const { return m_reference_hits; }

    bool aborted() const { return m_aborted; }

private:
    StepReport make_report(double loss) const;
    void refresh_frozen();
    LatentCode denoise_to_previous(const LatentCode& z);
    FeatureMap features_of(const LatentCode& z);

    DragConfig m_config;
    Denoiser& m_denoiser;
    FeatureBackend& m_backend;
    std::shared_ptr<const LatentCodec> m_codec;
    NoiseSchedule m_schedule;

    int m_edit_t = 0;
    int m_prev_t = 0;
    LatentCode m_latent;
    LatentCode m_original;
    LatentCode m_original_prev;  ///< one denoise step of the original inverted latent
    std::vector<Point2> m_sources;  ///< latent coordinates
    std::vector<Point2> m_targets;  ///< latent coordinates
    Tensor m_keep;                  ///< 1 - M at latent resolution, one plane
    TrackingState m_state;
    std::vector<bool> m_frozen;

    Tensor m_adam_m;
    Tensor m_adam_v;
    int m_adam_t = 0;

    std::map<std::int64_t, RotatedReference> m_cache;
    std::size_t m_references_built = 0;
    std::size_t m_reference_hits = 0;
    bool m_last_tracking_hit = false;
    std::vector<bool> m_last_degenerate;
    std::optional<FeatureMap> m_fixed_template_features;
    TemplateMode m_template_mode = TemplateMode::Rotated;
    bool m_aborted = false;
    double m_inversion_seconds = 0.0;
};

/// Validates the config, inverts the image and selects the rotation axis.
DragSession init_session(DragConfig config, Denoiser& denoiser, FeatureBackend& backend);

}  // namespace rotdrag
