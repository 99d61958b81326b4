// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rotdrag/tensor.hpp"

namespace rotdrag {

using Bytes = std::vector<std::uint8_t>;

/// PNG or JPEG (sniffed from the signature) to a 3-channel image in [0, 1].
/// Throws Decode for anything else or a corrupt stream.
Image decode_image(std::span<const std::uint8_t> bytes);

/// Nonzero luminance marks the editable region.
BinaryMask decode_mask(std::span<const std::uint8_t> bytes);

/// 8-bit PNG; 1 channel is written as gray, 3 as RGB. Values are clamped to [0, 1].
Bytes encode_png(const Image& image);
Bytes encode_mask_png(const BinaryMask& mask);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Image read_image(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

bool is_image_file(const std::filesystem::path& path);

}  // namespace rotdrag
