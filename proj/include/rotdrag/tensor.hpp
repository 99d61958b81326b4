// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rotdrag {

/// Dense (channels, height, width) tensor of doubles, planar layout.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

    bool same_shape(const Tensor& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }
    bool all_finite() const;
};

/// Image values live in [0, 1]; 1 or 3 channels.
using Image = Tensor;

/// Single-channel editability mask: nonzero marks the editable region.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    bool any() const;
    std::size_t count() const;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace rotdrag
