// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rotdrag/diffusion.hpp"
#include "rotdrag/geometry.hpp"
#include "rotdrag/tensor.hpp"

namespace rotdrag {

/// Dense per-pixel features. `scale` converts latent-space positions to feature-space ones.
struct FeatureMap {
    Tensor data;
    double scale = 1.0;
};

/// Feature extraction over a latent. Implementations are deterministic; `extract_vjp` pulls a
/// gradient on the feature map back onto the latent.
class FeatureBackend {
public:
    virtual ~FeatureBackend() = default;

    virtual FeatureMap extract(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt) = 0;

    virtual Tensor extract_vjp(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt,
                               const Tensor& feature_grad) = 0;

    virtual std::string name() const = 0;
};

inline constexpr double kReferenceSigmas[] = {1.0, 2.0, 4.0};
inline constexpr double kReferenceDerivativeSigma = 2.0;
/// Derivative channels are multiplied by sigma^2 so orientation weighs on par with intensity.
inline constexpr double kDerivativeGain = kReferenceDerivativeSigma * kReferenceDerivativeSigma;

/// Analytic features: the input smoothed at sigma 1, 2, 4 followed by x and y central
/// differences of the sigma-2 map (times kDerivativeGain). 5 * C channels, same resolution,
/// scale 1.
FeatureMap extract_reference_features(const LatentCode& latent);

/// Adjoint of extract_reference_features (the map is linear in the latent).
Tensor reference_features_adjoint(const Tensor& feature_grad, int latent_channels);

class ReferenceFeatureBackend final : public FeatureBackend {
public:
    FeatureMap extract(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt) override;
    Tensor extract_vjp(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt,
                       const Tensor& feature_grad) override;
    std::string name() const override { return "reference"; }
};

/// Denoisers that can expose intermediate decoder activations (e.g. a UNet runtime).
class DecoderFeatureTap {
public:
    virtual ~DecoderFeatureTap() = default;

    /// Output of the `ordinal`-th (1-based) upsampling block during one evaluation at t.
    virtual Tensor upsampling_block_output(const LatentCode& latent, int t, std::string_view prompt, int ordinal) = 0;

    virtual Tensor upsampling_block_vjp(const LatentCode& latent, int t, std::string_view prompt, int ordinal,
                                        const Tensor& upstream) = 0;
};

/// Uses the 3rd upsampling block of a tapped denoiser, bilinearly upsampled to the latent
/// resolution. Features are used raw, without channel normalization.
class UnetFeatureAdapter final : public FeatureBackend {
public:
    static constexpr int kBlockOrdinal = 3;

    FeatureMap extract(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt) override;
    Tensor extract_vjp(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt,
                       const Tensor& feature_grad) override;
    std::string name() const override { return "unet-adapter"; }
};

/// Bilinear sample of every channel at p * scale. Throws OutOfBounds outside the map.
std::vector<double> sample_feature(const FeatureMap& fm, Point2 p);

/// Accumulates `upstream` (one value per channel) into `grad` with the bilinear weights
/// sample_feature uses at p.
void sample_feature_adjoint(Tensor& grad, double scale, Point2 p, const std::vector<double>& upstream);

bool feature_in_bounds(const FeatureMap& fm, Point2 p);

/// Align-corners bilinear resize; identical data when the size already matches.
FeatureMap upsample_features(const FeatureMap& fm, int target_h, int target_w);

Tensor upsample_adjoint(const Tensor& grad, int source_h, int source_w);

std::unique_ptr<FeatureBackend> make_feature_backend(std::string_view name);

}  // namespace rotdrag
