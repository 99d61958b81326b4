// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/options.hpp"

#include <cmath>
#include <sstream>

#include "rotdrag/error.hpp"

namespace rotdrag {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& key, const std::string& what) {
    throw Error(ErrorCode::Config, where + "." + key + ": " + what);
}

int get_int(const json& v, const std::string& where, const std::string& key) {
    if (!v.is_number_integer()) bad(where, key, "expected an integer");
    return v.get<int>();
}

double get_double(const json& v, const std::string& where, const std::string& key) {
    if (!v.is_number()) bad(where, key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(where, key, "must be finite");
    return d;
}

template <class T>
void take(std::optional<T>& dst, const std::optional<T>& src) {
    if (src) dst = src;
}

}  // namespace

void EngineOptions::apply_to(DragConfig& config) const {
    config.r1 = r1;
    config.r2 = r2;
    config.lambda_mask = lambda;
    config.lr = lr;
    config.max_steps = max_steps;
    config.stop_dist = stop_dist;
    config.t_edit = t_edit;
    config.n_ddim_steps = n_ddim_steps;
    config.angle_bin = angle_bin * kDegree;
}

nlohmann::json EngineOptions::to_json() const {
    json cats = json::array();
    for (AffineCategory c : categories) cats.push_back(std::string(to_string(c)));
    return json{{"backend", backend},     {"max_steps", max_steps},
                {"lr", lr},               {"r1", r1},
                {"r2", r2},               {"lambda", lambda},
                {"stop_dist", stop_dist}, {"angle_bin", angle_bin},
                {"seed", seed},           {"workers", workers},
                {"t_edit", t_edit},       {"n_ddim_steps", n_ddim_steps},
                {"denoiser_gain", denoiser_gain}, {"count", count},
                {"categories", cats},     {"keypoint_grid", keypoint_grid},
                {"max_rotation", max_rotation}, {"scale_min", scale_min},
                {"scale_max", scale_max}, {"max_translation", max_translation},
                {"max_perspective", max_perspective}};
}

std::vector<AffineCategory> parse_categories(const std::string& list) {
    std::vector<AffineCategory> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        const std::string name = item.substr(b, e - b + 1);
        const auto c = parse_category(name);
        if (!c) throw Error(ErrorCode::Config, "unknown category '" + name + "'");
        out.push_back(*c);
    }
    if (out.empty()) throw Error(ErrorCode::Config, "empty category list");
    return out;
}

OptionLayer OptionLayer::from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::Config, where + ": expected an object");
    OptionLayer o;
    for (const auto& [key, v] : j.items()) {
        if (key == "backend") {
            if (!v.is_string()) bad(where, key, "expected a string");
            o.backend = v.get<std::string>();
        } else if (key == "max_steps") {
            o.max_steps = get_int(v, where, key);
        } else if (key == "lr") {
            o.lr = get_double(v, where, key);
        } else if (key == "r1") {
            o.r1 = get_int(v, where, key);
        } else if (key == "r2") {
            o.r2 = get_int(v, where, key);
        } else if (key == "lambda") {
            o.lambda = get_double(v, where, key);
        } else if (key == "stop_dist") {
            o.stop_dist = get_double(v, where, key);
        } else if (key == "angle_bin") {
            o.angle_bin = get_double(v, where, key);
        } else if (key == "seed") {
            if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                bad(where, key, "expected a non-negative integer");
            o.seed = v.get<std::uint64_t>();
        } else if (key == "workers") {
            o.workers = get_int(v, where, key);
        } else if (key == "t_edit") {
            o.t_edit = get_int(v, where, key);
        } else if (key == "n_ddim_steps") {
            o.n_ddim_steps = get_int(v, where, key);
        } else if (key == "denoiser_gain") {
            o.denoiser_gain = get_double(v, where, key);
        } else if (key == "count") {
            o.count = get_int(v, where, key);
        } else if (key == "keypoint_grid") {
            o.keypoint_grid = get_int(v, where, key);
        } else if (key == "max_rotation") {
            o.max_rotation = get_double(v, where, key);
        } else if (key == "scale_min") {
            o.scale_min = get_double(v, where, key);
        } else if (key == "scale_max") {
            o.scale_max = get_double(v, where, key);
        } else if (key == "max_translation") {
            o.max_translation = get_double(v, where, key);
        } else if (key == "max_perspective") {
            o.max_perspective = get_double(v, where, key);
        } else if (key == "categories") {
            if (v.is_string()) {
                o.categories = parse_categories(v.get<std::string>());
            } else if (v.is_array()) {
                std::string joined;
                for (const auto& e : v) {
                    if (!e.is_string()) bad(where, key, "expected category names");
                    joined += e.get<std::string>() + ",";
                }
                o.categories = parse_categories(joined);
            } else {
                bad(where, key, "expected a list of category names");
            }
        } else {
            bad(where, key, "unknown option");
        }
    }
    return o;
}

OptionLayer merge(const OptionLayer& base, const OptionLayer& over) {
    OptionLayer o = base;
    take(o.backend, over.backend);
    take(o.max_steps, over.max_steps);
    take(o.lr, over.lr);
    take(o.r1, over.r1);
    take(o.r2, over.r2);
    take(o.lambda, over.lambda);
    take(o.stop_dist, over.stop_dist);
    take(o.angle_bin, over.angle_bin);
    take(o.seed, over.seed);
    take(o.workers, over.workers);
    take(o.t_edit, over.t_edit);
    take(o.n_ddim_steps, over.n_ddim_steps);
    take(o.denoiser_gain, over.denoiser_gain);
    take(o.count, over.count);
    take(o.categories, over.categories);
    take(o.keypoint_grid, over.keypoint_grid);
    take(o.max_rotation, over.max_rotation);
    take(o.scale_min, over.scale_min);
    take(o.scale_max, over.scale_max);
    take(o.max_translation, over.max_translation);
    take(o.max_perspective, over.max_perspective);
    return o;
}

EngineOptions resolve_options(const OptionLayer& file, const OptionLayer& flags) {
    const OptionLayer l = merge(file, flags);
    EngineOptions o;
    o.backend = l.backend.value_or(o.backend);
    o.max_steps = l.max_steps.value_or(o.max_steps);
    o.lr = l.lr.value_or(o.lr);
    o.r1 = l.r1.value_or(o.r1);
    o.r2 = l.r2.value_or(o.r2);
    o.lambda = l.lambda.value_or(o.lambda);
    o.stop_dist = l.stop_dist.value_or(o.stop_dist);
    o.angle_bin = l.angle_bin.value_or(o.angle_bin);
    o.seed = l.seed.value_or(o.seed);
    o.workers = l.workers.value_or(o.workers);
    o.t_edit = l.t_edit.value_or(o.t_edit);
    o.n_ddim_steps = l.n_ddim_steps.value_or(o.n_ddim_steps);
    o.denoiser_gain = l.denoiser_gain.value_or(o.denoiser_gain);
    o.count = l.count.value_or(o.count);
    o.categories = l.categories.value_or(o.categories);
    o.keypoint_grid = l.keypoint_grid.value_or(o.keypoint_grid);
    o.max_rotation = l.max_rotation.value_or(o.max_rotation);
    o.scale_min = l.scale_min.value_or(o.scale_min);
    o.scale_max = l.scale_max.value_or(o.scale_max);
    o.max_translation = l.max_translation.value_or(o.max_translation);
    o.max_perspective = l.max_perspective.value_or(o.max_perspective);

    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
    if (o.backend != "reference" && o.backend != "unet-adapter")
        fail("backend must be 'reference' or 'unet-adapter', got '" + o.backend + "'");
    if (o.max_steps < 0) fail("max_steps must be >= 0");
    if (!(o.lr >= 0.0)) fail("lr must be >= 0");
    if (o.r1 < 1) fail("r1 must be >= 1");
    if (o.r2 < o.r1) fail("r2 must be >= r1");
    if (!(o.lambda >= 0.0)) fail("lambda must be >= 0");
    if (!(o.stop_dist > 0.0)) fail("stop_dist must be > 0");
    if (!(o.angle_bin > 0.0)) fail("angle_bin must be > 0");
    if (o.workers < 1) fail("workers must be >= 1");
    if (o.n_ddim_steps < 1) fail("n_ddim_steps must be >= 1");
    if (o.t_edit < 1 || o.t_edit > o.n_ddim_steps) fail("t_edit must lie in [1, n_ddim_steps]");
    if (o.count < 0) fail("count must be >= 0");
    if (o.keypoint_grid < 2) fail("keypoint_grid must be >= 2");
    if (!(o.max_rotation >= 0.0 && o.max_rotation <= 180.0)) fail("max_rotation must lie in [0, 180]");
    if (!(o.scale_min > 0.0 && o.scale_max >= o.scale_min)) fail("scale range must satisfy 0 < scale_min <= scale_max");
    if (!(o.max_translation >= 0.0)) fail("max_translation must be >= 0");
    if (!(o.max_perspective >= 0.0)) fail("max_perspective must be >= 0");
    return o;
}

}  // namespace rotdrag
