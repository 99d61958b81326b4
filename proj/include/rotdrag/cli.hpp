// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rotdrag/options.hpp"

namespace rotdrag {

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

struct EditArgs {
    std::filesystem::path config;
    std::filesystem::path out = "out";
    OptionLayer flags;
    bool follow = false;  ///< stream step records to `out` as line-delimited JSON
};

struct BenchAffineArgs {
    std::filesystem::path images;
    std::filesystem::path out = "out";
    std::optional<std::filesystem::path> config;
    OptionLayer flags;
};

struct BenchDragArgs {
    std::filesystem::path cases;
    std::filesystem::path out = "out";
    std::optional<std::filesystem::path> config;
    OptionLayer flags;
};

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data = "rotdrag_data";
    std::size_t max_upload = 16u << 20;
    std::optional<std::filesystem::path> config;
    OptionLayer flags;
};

int cmd_edit(const EditArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench_affine(const BenchAffineArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench_drag(const BenchDragArgs& args, std::ostream& out, std::ostream& err);
int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err);

/// Parses the command line and dispatches to one subcommand.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Options file for the bench and serve commands: either {"options": {...}} or the options
/// object itself.
OptionLayer load_options_file(const std::filesystem::path& path);

}  // namespace rotdrag
