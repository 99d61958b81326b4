// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "rotdrag/diffusion.hpp"
#include "rotdrag/drag_engine.hpp"
#include "rotdrag/features.hpp"
#include "rotdrag/options.hpp"

namespace rotdrag {

/// Directory holding diffusion weights for the unet-adapter backend.
inline constexpr const char* kModelRootEnv = "ROTDRAG_MODEL_ROOT";

/// A denoiser and feature backend pair owned by one worker.
struct Engine {
    std::unique_ptr<Denoiser> denoiser;
    std::unique_ptr<FeatureBackend> backend;
};

/// Throws Unavailable for the unet-adapter backend: this build carries no UNet runtime, and
/// the message says whether the weights directory is missing.
Engine make_engine(const EngineOptions& options);

nlohmann::json step_to_json(const StepReport& report);

/// Hyperparameters, stop reason, final distances, angles used, cache statistics and timing.
nlohmann::json result_metadata(const DragConfig& config, const DragResult& result, const EngineOptions& options);

/// Writes result.png (when an image was produced), trajectory.ndjson and metadata.json.
void write_run_outputs(const std::filesystem::path& dir, const DragConfig& config, const DragResult& result,
                       const EngineOptions& options);

}  // namespace rotdrag
