// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/features.hpp"

#include <algorithm>
#include <cmath>

#include "rotdrag/error.hpp"

namespace rotdrag {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k)
        v /= sum;
    return k;
}

int clamp_index(int i, int n) {
    return std::clamp(i, 0, n - 1);
}

// Separable convolution of one plane with border replication. `adjoint` applies the transpose.
void convolve_plane(std::span<const double> in, std::span<double> out, int h, int w, const std::vector<double>& k,
                    bool adjoint) {
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w, 0.0);
    std::fill(out.begin(), out.end(), 0.0);
    if (!adjoint) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j)
                    acc += k[j + r] * in[y * w + clamp_index(x + j, w)];
                tmp[y * w + x] = acc;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j)
                    acc += k[j + r] * tmp[clamp_index(y + j, h) * w + x];
                out[y * w + x] = acc;
            }
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double g = in[y * w + x];
                for (int j = -r; j <= r; ++j)
                    tmp[clamp_index(y + j, h) * w + x] += k[j + r] * g;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double g = tmp[y * w + x];
                for (int j = -r; j <= r; ++j)
                    out[y * w + clamp_index(x + j, w)] += k[j + r] * g;
            }
    }
}

// Central differences with replicated borders: d/dx at x is (f(x+1) - f(x-1)) / 2.
void gradient_plane(std::span<const double> in, std::span<double> dx, std::span<double> dy, int h, int w) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            dx[y * w + x] = kDerivativeGain * 0.5 * (in[y * w + clamp_index(x + 1, w)] - in[y * w + clamp_index(x - 1, w)]);
            dy[y * w + x] = kDerivativeGain * 0.5 * (in[clamp_index(y + 1, h) * w + x] - in[clamp_index(y - 1, h) * w + x]);
        }
}

void gradient_plane_adjoint(std::span<const double> gdx, std::span<const double> gdy, std::span<double> out, int h,
                            int w) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double a = kDerivativeGain * 0.5 * gdx[y * w + x];
            out[y * w + clamp_index(x + 1, w)] += a;
            out[y * w + clamp_index(x - 1, w)] -= a;
            const double b = kDerivativeGain * 0.5 * gdy[y * w + x];
            out[clamp_index(y + 1, h) * w + x] += b;
            out[clamp_index(y - 1, h) * w + x] -= b;
        }
}

constexpr int kSmoothedBlocks = 3;
constexpr int kDerivativeBlock = 1;  // index of sigma 2 in kReferenceSigmas

}  // namespace

FeatureMap extract_reference_features(const LatentCode& latent) {
    const Tensor& in = latent.data;
    if (!in.all_finite())
        throw Error(ErrorCode::InvalidArgument, "feature extraction on a non-finite latent");
    const int c = in.channels;
    const int h = in.height;
    const int w = in.width;
    FeatureMap fm{Tensor(5 * c, h, w), 1.0};
    for (int b = 0; b < kSmoothedBlocks; ++b) {
        const auto k = gaussian_kernel(kReferenceSigmas[b]);
        for (int ch = 0; ch < c; ++ch)
            convolve_plane(in.plane(ch), fm.data.plane(b * c + ch), h, w, k, false);
    }
    for (int ch = 0; ch < c; ++ch)
        gradient_plane(fm.data.plane(kDerivativeBlock * c + ch), fm.data.plane(3 * c + ch), fm.data.plane(4 * c + ch),
                       h, w);
    return fm;
}

Tensor reference_features_adjoint(const Tensor& feature_grad, int latent_channels) {
    const int c = latent_channels;
    if (feature_grad.channels != 5 * c)
        throw Error(ErrorCode::ShapeMismatch, "feature gradient does not match the reference layout");
    const int h = feature_grad.height;
    const int w = feature_grad.width;
    Tensor out(c, h, w);
    std::vector<double> smoothed_grad(static_cast<std::size_t>(h) * w);
    std::vector<double> back(static_cast<std::size_t>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
        for (int b = 0; b < kSmoothedBlocks; ++b) {
            auto src = feature_grad.plane(b * c + ch);
            std::copy(src.begin(), src.end(), smoothed_grad.begin());
            if (b == kDerivativeBlock)
                gradient_plane_adjoint(feature_grad.plane(3 * c + ch), feature_grad.plane(4 * c + ch), smoothed_grad,
                                       h, w);
            convolve_plane(smoothed_grad, back, h, w, gaussian_kernel(kReferenceSigmas[b]), true);
            auto dst = out.plane(ch);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += back[i];
        }
    }
    return out;
}

FeatureMap ReferenceFeatureBackend::extract(const LatentCode& latent, int, Denoiser&, std::string_view) {
    return extract_reference_features(latent);
}

Tensor ReferenceFeatureBackend::extract_vjp(const LatentCode& latent, int, Denoiser&, std::string_view,
                                            const Tensor& feature_grad) {
    return reference_features_adjoint(feature_grad, latent.data.channels);
}

namespace {

DecoderFeatureTap& require_tap(Denoiser& denoiser) {
    auto* tap = dynamic_cast<DecoderFeatureTap*>(&denoiser);
    if (tap == nullptr)
        throw Error(ErrorCode::Unavailable,
                    "denoiser '" + denoiser.name() + "' does not expose upsampling-block features");
    return *tap;
}

}  // namespace

FeatureMap UnetFeatureAdapter::extract(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt) {
    Tensor block = require_tap(denoiser).upsampling_block_output(latent, t, prompt, kBlockOrdinal);
    if (block.empty() || !block.all_finite())
        throw Error(ErrorCode::DenoiserFailure, "upsampling block produced no usable features");
    const double scale = latent.data.width > 1 ? static_cast<double>(block.width - 1) / (latent.data.width - 1) : 1.0;
    return upsample_features(FeatureMap{std::move(block), scale}, latent.data.height, latent.data.width);
}

Tensor UnetFeatureAdapter::extract_vjp(const LatentCode& latent, int t, Denoiser& denoiser, std::string_view prompt,
                                       const Tensor& feature_grad) {
    DecoderFeatureTap& tap = require_tap(denoiser);
    const Tensor block = tap.upsampling_block_output(latent, t, prompt, kBlockOrdinal);
    return tap.upsampling_block_vjp(latent, t, prompt, kBlockOrdinal,
                                    upsample_adjoint(feature_grad, block.height, block.width));
}

bool feature_in_bounds(const FeatureMap& fm, Point2 p) {
    constexpr double eps = 1e-9;
    const double x = p.x * fm.scale;
    const double y = p.y * fm.scale;
    return std::isfinite(x) && std::isfinite(y) && x >= -eps && y >= -eps && x <= fm.data.width - 1 + eps &&
           y <= fm.data.height - 1 + eps;
}

namespace {

struct BilinearTap {
    int x0, y0, x1, y1;
    double fx, fy;
};

BilinearTap bilinear_tap(int w, int h, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    BilinearTap t{};
    t.x0 = static_cast<int>(std::floor(x));
    t.y0 = static_cast<int>(std::floor(y));
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.fx = x - t.x0;
    t.fy = y - t.y0;
    return t;
}

}  // namespace

std::vector<double> sample_feature(const FeatureMap& fm, Point2 p) {
    if (!feature_in_bounds(fm, p))
        throw Error(ErrorCode::OutOfBounds, "feature sample outside the map");
    const Tensor& d = fm.data;
    const BilinearTap t = bilinear_tap(d.width, d.height, p.x * fm.scale, p.y * fm.scale);
    std::vector<double> out(d.channels);
    for (int c = 0; c < d.channels; ++c) {
        const double top = d.at(c, t.y0, t.x0) * (1.0 - t.fx) + d.at(c, t.y0, t.x1) * t.fx;
        const double bottom = d.at(c, t.y1, t.x0) * (1.0 - t.fx) + d.at(c, t.y1, t.x1) * t.fx;
        out[c] = top * (1.0 - t.fy) + bottom * t.fy;
    }
    return out;
}

void sample_feature_adjoint(Tensor& grad, double scale, Point2 p, const std::vector<double>& upstream) {
    const BilinearTap t = bilinear_tap(grad.width, grad.height, p.x * scale, p.y * scale);
    const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
    const double w01 = t.fx * (1.0 - t.fy);
    const double w10 = (1.0 - t.fx) * t.fy;
    const double w11 = t.fx * t.fy;
    for (int c = 0; c < grad.channels; ++c) {
        const double g = upstream[c];
        grad.at(c, t.y0, t.x0) += w00 * g;
        grad.at(c, t.y0, t.x1) += w01 * g;
        grad.at(c, t.y1, t.x0) += w10 * g;
        grad.at(c, t.y1, t.x1) += w11 * g;
    }
}

namespace {

double source_coord(int dst, int dst_n, int src_n) {
    return dst_n > 1 ? static_cast<double>(dst) * (src_n - 1) / (dst_n - 1) : 0.0;
}

}  // namespace

FeatureMap upsample_features(const FeatureMap& fm, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1)
        throw Error(ErrorCode::InvalidArgument, "upsample target must be positive");
    const Tensor& src = fm.data;
    if (src.height == target_h && src.width == target_w)
        return fm;
    FeatureMap out{Tensor(src.channels, target_h, target_w), fm.scale};
    out.scale = src.width > 1 ? fm.scale * (target_w - 1) / (src.width - 1)
                              : fm.scale * static_cast<double>(target_w) / src.width;
    for (int y = 0; y < target_h; ++y) {
        const double sy = source_coord(y, target_h, src.height);
        for (int x = 0; x < target_w; ++x) {
            const double sx = source_coord(x, target_w, src.width);
            for (int c = 0; c < src.channels; ++c)
                out.data.at(c, y, x) = sample_clamped(src, c, sx, sy);
        }
    }
    return out;
}

Tensor upsample_adjoint(const Tensor& grad, int source_h, int source_w) {
    if (grad.height == source_h && grad.width == source_w)
        return grad;
    Tensor out(grad.channels, source_h, source_w);
    std::vector<double> upstream(grad.channels);
    for (int y = 0; y < grad.height; ++y) {
        const double sy = source_coord(y, grad.height, source_h);
        for (int x = 0; x < grad.width; ++x) {
            const double sx = source_coord(x, grad.width, source_w);
            for (int c = 0; c < grad.channels; ++c)
                upstream[c] = grad.at(c, y, x);
            sample_feature_adjoint(out, 1.0, {sx, sy}, upstream);
        }
    }
    return out;
}

std::unique_ptr<FeatureBackend> make_feature_backend(std::string_view name) {
    if (name == "reference")
        return std::make_unique<ReferenceFeatureBackend>();
    if (name == "unet-adapter")
        return std::make_unique<UnetFeatureAdapter>();
    throw Error(ErrorCode::Config, "unknown feature backend '" + std::string(name) + "'");
}

}  // namespace rotdrag
