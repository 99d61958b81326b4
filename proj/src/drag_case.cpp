// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/drag_case.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rotdrag/error.hpp"
#include "rotdrag/image_io.hpp"

namespace rotdrag {
namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& where, const std::string& field, const std::string& what) {
    throw Error(ErrorCode::Config, where + ": field '" + field + "': " + what);
}

Point2 parse_xy(const json& v, const std::string& where, const std::string& field) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        bad_field(where, field, "expected [x, y] numbers");
    const Point2 p{v[0].get<double>(), v[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
        bad_field(where, field, "coordinates must be finite");
    return p;
}

std::string required_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key))
        bad_field(where, key, "missing");
    if (!j[key].is_string())
        bad_field(where, key, "expected a string");
    return j[key].get<std::string>();
}

// 1-based line and column of a byte offset.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

std::vector<PointPair> parse_points(const json& j, const std::string& where) {
    if (!j.is_array())
        bad_field(where, "points", "expected an array");
    std::vector<PointPair> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string f = "points[" + std::to_string(i) + "]";
        const json& e = j[i];
        if (!e.is_object())
            bad_field(where, f, "expected {source, target}");
        for (const auto& [k, v] : e.items())
            if (k != "source" && k != "target")
                bad_field(where, f + "." + k, "unknown field");
        if (!e.contains("source"))
            bad_field(where, f + ".source", "missing");
        if (!e.contains("target"))
            bad_field(where, f + ".target", "missing");
        out.push_back({parse_xy(e["source"], where, f + ".source"), parse_xy(e["target"], where, f + ".target")});
    }
    return out;
}

json points_to_json(const std::vector<PointPair>& points) {
    json arr = json::array();
    for (const PointPair& p : points)
        arr.push_back({{"source", {p.source.x, p.source.y}}, {"target", {p.target.x, p.target.y}}});
    return arr;
}

DragCase parse_drag_case(const std::string& text, const std::filesystem::path& base_dir, const std::string& where) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::ostringstream msg;
        msg << where << ":" << line << ":" << col << ": malformed JSON";
        throw Error(ErrorCode::Config, msg.str());
    }
    if (!j.is_object())
        throw Error(ErrorCode::Config, where + ":1:1: expected a JSON object");

    static const char* known[] = {"image", "mask", "prompt", "points", "options", "expected", "name"};
    for (const auto& [k, v] : j.items())
        if (std::find(std::begin(known), std::end(known), k) == std::end(known))
            bad_field(where, k, "unknown field");

    DragCase c;
    c.image_path = base_dir / required_string(j, "image", where);
    c.mask_path = base_dir / required_string(j, "mask", where);
    c.prompt = j.contains("prompt") ? required_string(j, "prompt", where) : std::string();
    if (!j.contains("points"))
        bad_field(where, "points", "missing");
    c.points = parse_points(j["points"], where);
    if (c.points.empty())
        bad_field(where, "points", "at least one pair is required");
    if (j.contains("options"))
        c.options = OptionLayer::from_json(j["options"], where + ": options");
    if (j.contains("expected"))
        c.expected = j["expected"];
    c.name = j.contains("name") ? required_string(j, "name", where) : c.image_path.stem().string();
    return c;
}

DragCase load_drag_case(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Config, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    DragCase c = parse_drag_case(ss.str(), path.parent_path(), path.string());
    if (c.name.empty())
        c.name = path.stem().string();
    return c;
}

bool points_inside(const std::vector<PointPair>& points, int width, int height) {
    auto in = [&](Point2 p) { return p.x >= 0.0 && p.y >= 0.0 && p.x <= width - 1.0 && p.y <= height - 1.0; };
    return std::all_of(points.begin(), points.end(), [&](const PointPair& p) { return in(p.source) && in(p.target); });
}

DragConfig make_drag_config(const DragCase& c, const EngineOptions& options) {
    DragConfig cfg;
    cfg.image = read_image(c.image_path);
    cfg.mask = read_mask(c.mask_path);
    if (cfg.mask.width != cfg.image.width || cfg.mask.height != cfg.image.height)
        throw Error(ErrorCode::InvalidArgument, "mask " + c.mask_path.string() + " differs in size from the image");
    if (!points_inside(c.points, cfg.image.width, cfg.image.height))
        throw Error(ErrorCode::InvalidArgument, "point coordinates fall outside the image");
    cfg.prompt = c.prompt;
    for (const PointPair& p : c.points) {
        cfg.sources.push_back(p.source);
        cfg.targets.push_back(p.target);
    }
    options.apply_to(cfg);
    return cfg;
}

std::vector<std::filesystem::path> list_case_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ".json")
            out.push_back(e.path());
    if (ec)
        throw Error(ErrorCode::Io, "cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace rotdrag
