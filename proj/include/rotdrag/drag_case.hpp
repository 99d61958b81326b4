// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rotdrag/drag_engine.hpp"
#include "rotdrag/geometry.hpp"
#include "rotdrag/options.hpp"

namespace rotdrag {

struct PointPair {
    Point2 source;
    Point2 target;
    friend bool operator==(const PointPair&, const PointPair&) = default;
};

/// One drag configuration file:
///   {"image": "a.png", "mask": "a_mask.png", "prompt": "...",
///    "points": [{"source": [x, y], "target": [x, y]}, ...],
///    "options": {...}, "expected": {...}}
/// Paths are relative to the file's directory.
struct DragCase {
    std::string name;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
    std::string prompt;
    std::vector<PointPair> points;
    OptionLayer options;
    nlohmann::json expected;
};

/// Throws Config with a "where:line:col" or field path diagnostic.
DragCase parse_drag_case(const std::string& text, const std::filesystem::path& base_dir,
                         const std::string& where = "config");
DragCase load_drag_case(const std::filesystem::path& path);

/// Parses a "points" array. `where` prefixes field diagnostics.
std::vector<PointPair> parse_points(const nlohmann::json& j, const std::string& where);
nlohmann::json points_to_json(const std::vector<PointPair>& points);

/// Reads the image and mask and fills a DragConfig with the resolved options applied.
/// Throws InvalidArgument when points fall outside the image or the mask size differs.
DragConfig make_drag_config(const DragCase& c, const EngineOptions& options);

bool points_inside(const std::vector<PointPair>& points, int width, int height);

/// Case files in a directory (*.json), sorted by name.
std::vector<std::filesystem::path> list_case_files(const std::filesystem::path& dir);

}  // namespace rotdrag
