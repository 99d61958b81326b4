// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rotdrag/tensor.hpp"

namespace rotdrag {

/// Cumulative signal coefficients alpha_t for t = 1..T; alpha_0 is 1 by convention.
class NoiseSchedule {
public:
    /// Throws InvalidArgument unless values are in (0, 1] and strictly decreasing.
    explicit NoiseSchedule(std::vector<double> alphas);

    /// Betas spaced linearly in sqrt-space, the usual latent-diffusion deployment.
    static NoiseSchedule scaled_linear(int steps = 1000, double beta_start = 0.00085, double beta_end = 0.012);

    int total_steps() const { return static_cast<int>(m_alphas.size()); }
    double alpha(int t) const;

private:
    std::vector<double> m_alphas;
};

struct LatentCode {
    Tensor data;
    int timestep = 0;
};

/// Noise predictor the DDIM machinery runs over. Implementations must be deterministic in
/// (latent, t, prompt). One instance is used sequentially; callers serialize access.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual Tensor predict_noise(const LatentCode& latent, int t, std::string_view prompt) = 0;

    /// Vector-Jacobian product of predict_noise with respect to the latent.
    virtual Tensor predict_noise_vjp(const LatentCode& latent, int t, std::string_view prompt,
                                     const Tensor& upstream) = 0;

    /// Hook for per-image adaptation (e.g. low-rank fine-tuning) before editing starts.
    virtual void prepare(const Tensor& /*image_latent*/, std::string_view /*prompt*/) {}

    virtual std::string name() const = 0;
};

/// eps(z) = gain * z. gain == 0 is the zero-noise predictor, which makes every DDIM step an
/// exact rescaling.
class LinearDenoiser final : public Denoiser {
public:
    explicit LinearDenoiser(double gain = 0.0) : m_gain(gain) {}

    Tensor predict_noise(const LatentCode& latent, int t, std::string_view prompt) override;
    Tensor predict_noise_vjp(const LatentCode& latent, int t, std::string_view prompt,
                             const Tensor& upstream) override;
    std::string name() const override;

    double gain() const { return m_gain; }

private:
    double m_gain;
};

LatentCode forward_diffuse(const NoiseSchedule& schedule, const LatentCode& x0, int t, const Tensor& noise);

/// Uniformly spaced integer timesteps 0 = t_0 < ... < t_n = t_end (duplicates removed).
std::vector<int> ddim_timesteps(int t_end, int n_steps);

/// One deterministic DDIM transition from latent.timestep to t_to (either direction), using
/// the noise predicted at the current latent.
LatentCode ddim_step(const NoiseSchedule& schedule, const LatentCode& latent, int t_to, Denoiser& denoiser,
                     std::string_view prompt);

/// Vector-Jacobian product of ddim_step with respect to the input latent.
Tensor ddim_step_vjp(const NoiseSchedule& schedule, const LatentCode& latent, int t_to, Denoiser& denoiser,
                     std::string_view prompt, const Tensor& upstream);

LatentCode ddim_invert(const NoiseSchedule& schedule, const LatentCode& x0, int t_target, Denoiser& denoiser,
                       std::string_view prompt, int n_steps);

LatentCode ddim_denoise(const NoiseSchedule& schedule, const LatentCode& z, Denoiser& denoiser,
                        std::string_view prompt, int n_steps);

}  // namespace rotdrag
