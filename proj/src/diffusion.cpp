// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rotdrag/error.hpp"

namespace rotdrag {

NoiseSchedule::NoiseSchedule(std::vector<double> alphas) : m_alphas(std::move(alphas)) {
    if (m_alphas.empty())
        throw Error(ErrorCode::InvalidArgument, "noise schedule needs at least one timestep");
    for (std::size_t i = 0; i < m_alphas.size(); ++i) {
        const double a = m_alphas[i];
        if (!(a > 0.0 && a <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "schedule coefficients must lie in (0, 1]");
        if (i > 0 && !(a < m_alphas[i - 1]))
            throw Error(ErrorCode::InvalidArgument, "schedule coefficients must strictly decrease");
    }
}

NoiseSchedule NoiseSchedule::scaled_linear(int steps, double beta_start, double beta_end) {
    if (steps < 1)
        throw Error(ErrorCode::InvalidArgument, "schedule needs at least one step");
    std::vector<double> alphas(steps);
    const double lo = std::sqrt(beta_start);
    const double hi = std::sqrt(beta_end);
    double cumulative = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double root = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
        cumulative *= 1.0 - root * root;
        alphas[i] = cumulative;
    }
    return NoiseSchedule(std::move(alphas));
}

double NoiseSchedule::alpha(int t) const {
    if (t == 0)
        return 1.0;
    if (t < 0 || t > total_steps())
        throw Error(ErrorCode::OutOfBounds, "timestep " + std::to_string(t) + " outside schedule");
    return m_alphas[t - 1];
}

Tensor LinearDenoiser::predict_noise(const LatentCode& latent, int, std::string_view) {
    Tensor out = latent.data;
    for (double& v : out.data)
        v *= m_gain;
    return out;
}

Tensor LinearDenoiser::predict_noise_vjp(const LatentCode&, int, std::string_view, const Tensor& upstream) {
    Tensor out = upstream;
    for (double& v : out.data)
        v *= m_gain;
    return out;
}

std::string LinearDenoiser::name() const {
    std::ostringstream os;
    os << "linear(gain=" << m_gain << ")";
    return os.str();
}

LatentCode forward_diffuse(const NoiseSchedule& schedule, const LatentCode& x0, int t, const Tensor& noise) {
    if (x0.timestep != 0)
        throw Error(ErrorCode::InvalidArgument, "forward_diffuse expects a clean latent");
    if (!x0.data.same_shape(noise))
        throw Error(ErrorCode::ShapeMismatch, "noise shape differs from latent shape");
    if (t < 1 || t > schedule.total_steps())
        throw Error(ErrorCode::OutOfBounds, "timestep outside [1, T]");
    const double a = schedule.alpha(t);
    const double signal = std::sqrt(a);
    const double sigma = std::sqrt(1.0 - a);
    LatentCode out{Tensor(x0.data.channels, x0.data.height, x0.data.width), t};
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data.data[i] = signal * x0.data.data[i] + sigma * noise.data[i];
    return out;
}

std::vector<int> ddim_timesteps(int t_end, int n_steps) {
    if (n_steps < 1)
        throw Error(ErrorCode::InvalidArgument, "DDIM trajectory needs at least one step");
    std::vector<int> ts;
    ts.reserve(n_steps + 1);
    for (int k = 0; k <= n_steps; ++k) {
        const int t = static_cast<int>(std::lround(static_cast<double>(t_end) * k / n_steps));
        if (ts.empty() || ts.back() != t)
            ts.push_back(t);
    }
    return ts;
}

namespace {

Tensor checked_noise(Denoiser& denoiser, const LatentCode& latent, std::string_view prompt) {
    Tensor eps = denoiser.predict_noise(latent, latent.timestep, prompt);
    if (!eps.same_shape(latent.data))
        throw Error(ErrorCode::DenoiserFailure, denoiser.name() + " returned a prediction of the wrong shape");
    if (!eps.all_finite())
        throw Error(ErrorCode::DenoiserFailure, denoiser.name() + " returned a non-finite prediction");
    return eps;
}

struct StepCoefficients {
    double latent;
    double noise;
};

StepCoefficients step_coefficients(const NoiseSchedule& schedule, int t_from, int t_to) {
    const double a_from = schedule.alpha(t_from);
    const double a_to = schedule.alpha(t_to);
    const double ratio = std::sqrt(a_to / a_from);
    return {ratio, std::sqrt(1.0 - a_to) - ratio * std::sqrt(1.0 - a_from)};
}

}  // namespace

LatentCode ddim_step(const NoiseSchedule& schedule, const LatentCode& latent, int t_to, Denoiser& denoiser,
                     std::string_view prompt) {
    const auto k = step_coefficients(schedule, latent.timestep, t_to);
    const Tensor eps = checked_noise(denoiser, latent, prompt);
    LatentCode out{latent.data, t_to};
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data.data[i] = k.latent * latent.data.data[i] + k.noise * eps.data[i];
    return out;
}

Tensor ddim_step_vjp(const NoiseSchedule& schedule, const LatentCode& latent, int t_to, Denoiser& denoiser,
                     std::string_view prompt, const Tensor& upstream) {
    if (!upstream.same_shape(latent.data))
        throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape differs from latent");
    const auto k = step_coefficients(schedule, latent.timestep, t_to);
    Tensor grad = denoiser.predict_noise_vjp(latent, latent.timestep, prompt, upstream);
    if (!grad.same_shape(latent.data))
        throw Error(ErrorCode::DenoiserFailure, denoiser.name() + " returned a gradient of the wrong shape");
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad.data[i] = k.latent * upstream.data[i] + k.noise * grad.data[i];
    return grad;
}

LatentCode ddim_invert(const NoiseSchedule& schedule, const LatentCode& x0, int t_target, Denoiser& denoiser,
                       std::string_view prompt, int n_steps) {
    if (x0.timestep != 0)
        throw Error(ErrorCode::InvalidArgument, "ddim_invert expects a clean latent");
    if (t_target < 1 || t_target > schedule.total_steps())
        throw Error(ErrorCode::OutOfBounds, "inversion target outside [1, T]");
    const std::vector<int> ts = ddim_timesteps(t_target, n_steps);
    LatentCode z = x0;
    for (std::size_t i = 1; i < ts.size(); ++i)
        z = ddim_step(schedule, z, ts[i], denoiser, prompt);
    return z;
}

LatentCode ddim_denoise(const NoiseSchedule& schedule, const LatentCode& z, Denoiser& denoiser,
                        std::string_view prompt, int n_steps) {
    if (z.timestep < 1)
        throw Error(ErrorCode::InvalidArgument, "ddim_denoise expects a noisy latent (timestep >= 1)");
    std::vector<int> ts = ddim_timesteps(z.timestep, n_steps);
    std::reverse(ts.begin(), ts.end());
    LatentCode x = z;
    for (std::size_t i = 1; i < ts.size(); ++i)
        x = ddim_step(schedule, x, ts[i], denoiser, prompt);
    return x;
}

}  // namespace rotdrag
