// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotdrag/drag_engine.hpp"
#include "rotdrag/geometry.hpp"

namespace rotdrag {

/// Every tunable the CLI, the config files and the service accept. Keys in JSON match the
/// flag names with '-' replaced by '_' ("max_steps", "stop_dist", ...).
struct EngineOptions {
    std::string backend = "reference";
    int max_steps = 160;
    double lr = 0.01;
    int r1 = 1;
    int r2 = 3;
    double lambda = 0.1;
    double stop_dist = 2.0;
    double angle_bin = 1.0;  ///< degrees
    std::uint64_t seed = 0;
    int workers = 1;
    int t_edit = 35;
    int n_ddim_steps = 50;
    double denoiser_gain = 0.0;

    // affine bench
    int count = 20;
    std::vector<AffineCategory> categories{kAllCategories.begin(), kAllCategories.end()};
    int keypoint_grid = 8;
    double max_rotation = 60.0;      ///< degrees, sampled in [-max, max]
    double scale_min = 0.7;
    double scale_max = 1.4;
    double max_translation = 7.0;    ///< pixels per axis
    double max_perspective = 1.5e-3; ///< bottom-row magnitude

    void apply_to(DragConfig& config) const;
    nlohmann::json to_json() const;
};

/// A partial set of options from one source (a file or the command line).
struct OptionLayer {
    std::optional<std::string> backend;
    std::optional<int> max_steps;
    std::optional<double> lr;
    std::optional<int> r1;
    std::optional<int> r2;
    std::optional<double> lambda;
    std::optional<double> stop_dist;
    std::optional<double> angle_bin;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> t_edit;
    std::optional<int> n_ddim_steps;
    std::optional<double> denoiser_gain;
    std::optional<int> count;
    std::optional<std::vector<AffineCategory>> categories;
    std::optional<int> keypoint_grid;
    std::optional<double> max_rotation;
    std::optional<double> scale_min;
    std::optional<double> scale_max;
    std::optional<double> max_translation;
    std::optional<double> max_perspective;

    /// Throws Config naming the offending key; unknown keys are rejected. `where` prefixes
    /// diagnostics (e.g. "case.json: options").
    static OptionLayer from_json(const nlohmann::json& j, const std::string& where);
};

/// Fields set in `over` replace those of `base`.
OptionLayer merge(const OptionLayer& base, const OptionLayer& over);

/// Defaults, then the file layer, then the flag layer. Throws Config on out-of-range values.
EngineOptions resolve_options(const OptionLayer& file, const OptionLayer& flags);

/// Comma separated, case-insensitive category names. Throws Config on unknown names.
std::vector<AffineCategory> parse_categories(const std::string& list);

}  // namespace rotdrag
