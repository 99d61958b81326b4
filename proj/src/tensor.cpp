// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "rotdrag/error.hpp"

namespace rotdrag {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DegenerateAxis: return "DegenerateAxis";
    case ErrorCode::EmptyMaskLine: return "EmptyMaskLine";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DenoiserFailure: return "DenoiserFailure";
    case ErrorCode::AllHandlesConverged: return "AllHandlesConverged";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::UnsatisfiableCrop: return "UnsatisfiableCrop";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::EmptyBenchmark: return "EmptyBenchmark";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Unavailable: return "Unavailable";
    case ErrorCode::Decode: return "Decode";
    }
    return "Unknown";
}

Tensor::Tensor(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
    if (c < 0 || h < 0 || w < 0)
        throw Error(ErrorCode::InvalidArgument, "negative tensor dimension");
    data.assign(static_cast<std::size_t>(c) * h * w, fill);
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

bool BinaryMask::any() const {
    return std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::ShapeMismatch, "max_abs_diff on tensors of different shape");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace rotdrag
