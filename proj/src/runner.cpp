// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/runner.hpp"

#include <cstdlib>
#include <fstream>

#include "rotdrag/error.hpp"
#include "rotdrag/image_io.hpp"

namespace rotdrag {

using nlohmann::json;

Engine make_engine(const EngineOptions& options) {
    if (options.backend == "reference") {
        Engine e;
        e.denoiser = std::make_unique<LinearDenoiser>(options.denoiser_gain);
        e.backend = make_feature_backend("reference");
        return e;
    }
    if (options.backend == "unet-adapter") {
        const char* root = std::getenv(kModelRootEnv);
        if (!root || !*root)
            throw Error(ErrorCode::Unavailable, std::string("unet-adapter needs diffusion weights; set ") +
                                                    kModelRootEnv + " to the weights directory");
        if (!std::filesystem::is_directory(root))
            throw Error(ErrorCode::Unavailable, std::string(kModelRootEnv) + "=" + root + " is not a directory");
        throw Error(ErrorCode::Unavailable, std::string("weights found under ") + root +
                                                " but this build has no UNet runtime; supply a Denoiser "
                                                "implementing DecoderFeatureTap through the library API");
    }
    throw Error(ErrorCode::Config, "unknown backend '" + options.backend + "'");
}

json step_to_json(const StepReport& r) {
    json handles = json::array();
    for (const Point2& p : r.handle_positions)
        handles.push_back({p.x, p.y});
    json angles = json::array();
    for (const AngleRad& a : r.angle_used)
        angles.push_back(a.value());
    json degenerate = json::array();
    for (bool d : r.degenerate_axis)
        degenerate.push_back(d);
    return json{{"step", r.step},
                {"loss", r.loss},
                {"handles", handles},
                {"mean_dist_to_target", r.mean_dist_to_target},
                {"angles", angles},
                {"cache_hit", r.cache_hit},
                {"degenerate_axis", degenerate}};
}

json result_metadata(const DragConfig& config, const DragResult& result, const EngineOptions& options) {
    const StepReport& last = result.trajectory.back();
    json distances = json::array();
    for (std::size_t i = 0; i < config.targets.size() && i < last.handle_positions.size(); ++i)
        distances.push_back(distance(last.handle_positions[i], config.targets[i]));
    json angles = json::array();
    for (const AngleRad& a : last.angle_used)
        angles.push_back(a.value());
    json m{{"stop_reason", std::string(to_string(result.stop_reason))},
           {"steps", static_cast<int>(result.trajectory.size()) - 1},
           {"final_mean_distance", last.mean_dist_to_target},
           {"final_distances", distances},
           {"final_angles", angles},
           {"options", options.to_json()},
           {"prompt", config.prompt},
           {"cache", {{"references_built", result.references_built}, {"reference_hits", result.reference_hits}}},
           {"timing",
            {{"inversion", result.timing.inversion},
             {"optimization", result.timing.optimization},
             {"tracking", result.timing.tracking},
             {"denoise", result.timing.denoise}}}};
    if (!result.abort_detail.empty())
        m["abort_detail"] = result.abort_detail;
    return m;
}

void write_run_outputs(const std::filesystem::path& dir, const DragConfig& config, const DragResult& result,
                       const EngineOptions& options) {
    std::filesystem::create_directories(dir);
    if (!result.image.empty())
        write_png(dir / "result.png", result.image);
    std::ofstream traj(dir / "trajectory.ndjson", std::ios::trunc);
    for (const StepReport& r : result.trajectory)
        traj << step_to_json(r).dump() << '\n';
    std::ofstream meta(dir / "metadata.json", std::ios::trunc);
    meta << result_metadata(config, result, options).dump(2) << '\n';
    if (!traj || !meta)
        throw Error(ErrorCode::Io, "cannot write run outputs to " + dir.string());
}

}  // namespace rotdrag
