// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "rotdrag/bench.hpp"
#include "rotdrag/drag_case.hpp"
#include "rotdrag/error.hpp"
#include "rotdrag/image_io.hpp"
#include "rotdrag/runner.hpp"
#include "rotdrag/service.hpp"

namespace rotdrag {

using nlohmann::json;

namespace {

int usage_error(std::ostream& err, const std::string& msg) {
    err << "error: " << msg << '\n';
    return kExitUsage;
}

int runtime_error(std::ostream& err, const std::string& msg) {
    err << "error: " << msg << '\n';
    return kExitRuntime;
}

void add_engine_flags(CLI::App* app, OptionLayer& l) {
    app->add_option_function<int>("--max-steps", [&l](const int& v) { l.max_steps = v; }, "optimization step limit");
    app->add_option_function<double>("--lr", [&l](const double& v) { l.lr = v; }, "Adam learning rate");
    app->add_option_function<int>("--r1", [&l](const int& v) { l.r1 = v; }, "motion supervision radius");
    app->add_option_function<int>("--r2", [&l](const int& v) { l.r2 = v; }, "tracking search radius");
    app->add_option_function<double>("--lambda", [&l](const double& v) { l.lambda = v; }, "preservation weight");
    app->add_option_function<double>("--stop-dist", [&l](const double& v) { l.stop_dist = v; },
                                     "convergence distance in pixels");
    app->add_option_function<double>("--angle-bin", [&l](const double& v) { l.angle_bin = v; },
                                     "rotated-reference cache bin in degrees");
    app->add_option_function<int>("--t-edit", [&l](const int& v) { l.t_edit = v; }, "inversion depth in DDIM steps");
    app->add_option_function<int>("--n-ddim-steps", [&l](const int& v) { l.n_ddim_steps = v; },
                                  "length of the DDIM trajectory");
    app->add_option_function<double>("--denoiser-gain", [&l](const double& v) { l.denoiser_gain = v; },
                                     "gain of the reference linear denoiser");
}

void add_common_flags(CLI::App* app, OptionLayer& l) {
    app->add_option_function<std::string>("--backend", [&l](const std::string& v) { l.backend = v; },
                                          "feature backend")
        ->check(CLI::IsMember({"reference", "unet-adapter"}));
    app->add_option_function<std::uint64_t>("--seed", [&l](const std::uint64_t& v) { l.seed = v; }, "random seed");
    app->add_option_function<int>("--workers", [&l](const int& v) { l.workers = v; }, "worker threads");
}

void add_affine_flags(CLI::App* app, OptionLayer& l, std::string& categories) {
    app->add_option("--categories", categories, "comma separated: Scaling,Rotation,Perspective,Translation");
    app->add_option_function<int>("--count", [&l](const int& v) { l.count = v; }, "cases per category");
    app->add_option_function<int>("--keypoint-grid", [&l](const int& v) { l.keypoint_grid = v; },
                                  "keypoints per side");
    app->add_option_function<double>("--max-rotation", [&l](const double& v) { l.max_rotation = v; }, "degrees");
    app->add_option_function<double>("--scale-min", [&l](const double& v) { l.scale_min = v; });
    app->add_option_function<double>("--scale-max", [&l](const double& v) { l.scale_max = v; });
    app->add_option_function<double>("--max-translation", [&l](const double& v) { l.max_translation = v; },
                                     "pixels per axis");
    app->add_option_function<double>("--max-perspective", [&l](const double& v) { l.max_perspective = v; });
}

}  // namespace

OptionLayer load_options_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Config, "cannot read config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
    }
    if (j.is_object() && j.contains("options"))
        return OptionLayer::from_json(j["options"], path.string() + ": options");
    return OptionLayer::from_json(j, path.string());
}

int cmd_edit(const EditArgs& args, std::ostream& out, std::ostream& err) {
    DragCase c;
    EngineOptions options;
    DragConfig cfg;
    try {
        c = load_drag_case(args.config);
        options = resolve_options(c.options, args.flags);
        cfg = make_drag_config(c, options);
        cfg.validate();
    } catch (const Error& e) {
        return usage_error(err, e.what());
    }

    try {
        Engine engine = make_engine(options);
        DragSession session(cfg, *engine.denoiser, *engine.backend);
        ProgressSink sink;
        if (args.follow)
            sink = [&out](const StepReport& r) {
                json line = step_to_json(r);
                line["type"] = "step";
                out << line.dump() << '\n' << std::flush;
            };
        const DragResult result = session.run(sink);
        write_run_outputs(args.out, cfg, result, options);
        out << "stop_reason=" << to_string(result.stop_reason) << " steps=" << result.trajectory.size() - 1
            << " mean_distance=" << result.trajectory.back().mean_dist_to_target << " out=" << args.out.string()
            << '\n';
        if (result.stop_reason == StopReason::Aborted)
            return runtime_error(err, "edit aborted: " + result.abort_detail);
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_error(err, e.what());
    }
}

int cmd_bench_affine(const BenchAffineArgs& args, std::ostream& out, std::ostream& err) {
    EngineOptions options;
    std::vector<Image> images;
    try {
        const OptionLayer file = args.config ? load_options_file(*args.config) : OptionLayer{};
        options = resolve_options(file, args.flags);
        if (options.count == 0)
            throw Error(ErrorCode::EmptyBenchmark, "count is 0");
        if (!std::filesystem::is_directory(args.images))
            throw Error(ErrorCode::Config, "image directory " + args.images.string() + " does not exist");
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(args.images))
            if (e.is_regular_file() && is_image_file(e.path()))
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw Error(ErrorCode::EmptyBenchmark, "no PNG or JPEG images in " + args.images.string());
        for (const auto& f : files)
            images.push_back(read_image(f));
    } catch (const Error& e) {
        return usage_error(err, e.what());
    }

    try {
        const AffineParamRanges ranges = affine_ranges(options);
        const auto& cats = options.categories;
        std::vector<BenchReport> partial(cats.size());
        std::vector<std::string> failures(cats.size());
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < cats.size(); i = next++) {
                try {
                    Engine engine = make_engine(options);
                    const auto cases = curate_affine_cases(images, cats[i], options.count, options.seed, ranges);
                    EvalOptions eo;
                    eo.seed = options.seed;
                    eo.denoiser = engine.denoiser.get();
                    partial[i] = evaluate_method(cases, *engine.backend, options.keypoint_grid, eo);
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            }
        };
        {
            std::vector<std::jthread> pool;
            for (int w = 1; w < std::min<int>(options.workers, static_cast<int>(cats.size())); ++w)
                pool.emplace_back(work);
            work();
        }
        for (const std::string& f : failures)
            if (!f.empty())
                return runtime_error(err, f);

        BenchReport merged;
        merged.method = partial.front().method;
        for (const BenchReport& r : partial) {
            for (std::size_t k = 0; k < merged.per_category.size(); ++k) {
                merged.per_category[k].total += r.per_category[k].total;
                merged.per_category[k].correct += r.per_category[k].correct;
            }
            merged.cases.insert(merged.cases.end(), r.cases.begin(), r.cases.end());
        }
        json report = reports_to_json({merged});
        json config = options.to_json();
        config.erase("workers");
        report["config"] = config;
        const std::string table = format_table({merged});
        std::filesystem::create_directories(args.out);
        std::ofstream(args.out / "bench_affine.json", std::ios::trunc) << report.dump(2) << '\n';
        std::ofstream(args.out / "bench_affine.txt", std::ios::trunc) << table;
        out << table;
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_error(err, e.what());
    }
}

int cmd_bench_drag(const BenchDragArgs& args, std::ostream& out, std::ostream& err) {
    DragBenchOptions bo;
    std::vector<std::filesystem::path> files;
    try {
        const OptionLayer file = args.config ? load_options_file(*args.config) : OptionLayer{};
        bo.overrides = merge(file, args.flags);
        bo.workers = resolve_options({}, bo.overrides).workers;
        if (!std::filesystem::is_directory(args.cases))
            throw Error(ErrorCode::Config, "case directory " + args.cases.string() + " does not exist");
        files = list_case_files(args.cases);
        if (files.empty())
            throw Error(ErrorCode::EmptyBenchmark, "no *.json case files in " + args.cases.string());
    } catch (const Error& e) {
        return usage_error(err, e.what());
    }
    bo.out_dir = args.out;
    try {
        const DragBenchSummary s = run_drag_benchmark_files(files, bo);
        for (const DragCaseOutcome& o : s.outcomes) {
            if (o.completed)
                out << o.name << ": " << to_string(o.result->stop_reason) << " steps=" << o.steps
                    << " mean_distance=" << o.final_mean_distance << '\n';
            else
                out << o.name << ": FAILED " << o.error << '\n';
        }
        out << "completed=" << s.completed << " failed=" << s.failed << " convergence_rate=" << s.convergence_rate
            << " mean_final_distance=" << s.mean_final_distance << '\n';
        if (s.completed == 0)
            return runtime_error(err, "every case failed");
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_error(err, e.what());
    }
}

int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err) {
    ServiceConfig sc;
    try {
        const OptionLayer file = args.config ? load_options_file(*args.config) : OptionLayer{};
        sc.defaults = merge(file, args.flags);
        sc.workers = resolve_options({}, sc.defaults).workers;
    } catch (const Error& e) {
        return usage_error(err, e.what());
    }
    sc.root = args.data;
    sc.max_upload_bytes = args.max_upload;
    try {
        Service service(sc);
        httplib::Server server;
        service.mount(server);
        out << "listening on http://" << args.host << ":" << args.port << '\n' << std::flush;
        if (!server.listen(args.host, args.port))
            return runtime_error(err, "cannot listen on " + args.host + ":" + std::to_string(args.port));
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_error(err, e.what());
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"rotation-aware drag editing engine and evaluation harness", "rotdrag"};
    app.require_subcommand(1);

    EditArgs edit;
    auto* edit_cmd = app.add_subcommand("edit", "run one drag edit from a case file");
    edit_cmd->add_option("--config", edit.config, "drag case JSON")->required();
    edit_cmd->add_option("--out", edit.out, "output directory");
    edit_cmd->add_flag("--follow", edit.follow, "print step records as line-delimited JSON");
    add_engine_flags(edit_cmd, edit.flags);
    add_common_flags(edit_cmd, edit.flags);

    BenchAffineArgs affine;
    std::string affine_categories;
    std::string affine_config;
    auto* affine_cmd = app.add_subcommand("bench-affine", "homography accuracy of a feature backend");
    affine_cmd->add_option("--images", affine.images, "directory of source images")->required();
    affine_cmd->add_option("--out", affine.out, "output directory");
    affine_cmd->add_option("--config", affine_config, "options JSON");
    add_affine_flags(affine_cmd, affine.flags, affine_categories);
    add_common_flags(affine_cmd, affine.flags);

    BenchDragArgs drag;
    std::string drag_config;
    auto* drag_cmd = app.add_subcommand("bench-drag", "run every drag case in a directory");
    drag_cmd->add_option("--cases", drag.cases, "directory of drag case JSON files")->required();
    drag_cmd->add_option("--out", drag.out, "output directory");
    drag_cmd->add_option("--config", drag_config, "options JSON");
    add_engine_flags(drag_cmd, drag.flags);
    add_common_flags(drag_cmd, drag.flags);

    ServeArgs serve;
    std::string serve_config;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP editing service");
    serve_cmd->add_option("--host", serve.host);
    serve_cmd->add_option("--port", serve.port);
    serve_cmd->add_option("--data", serve.data, "session and object store directory");
    serve_cmd->add_option("--max-upload", serve.max_upload, "upload limit in bytes");
    serve_cmd->add_option("--config", serve_config, "options JSON");
    add_engine_flags(serve_cmd, serve.flags);
    add_common_flags(serve_cmd, serve.flags);

    try {
        app.parse(argc, argv);
        if (!affine_categories.empty())
            affine.flags.categories = parse_categories(affine_categories);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitUsage;
    } catch (const Error& e) {
        return usage_error(err, e.what());
    }
    if (!affine_config.empty())
        affine.config = affine_config;
    if (!drag_config.empty())
        drag.config = drag_config;
    if (!serve_config.empty())
        serve.config = serve_config;

    if (*edit_cmd)
        return cmd_edit(edit, out, err);
    if (*affine_cmd)
        return cmd_bench_affine(affine, out, err);
    if (*drag_cmd)
        return cmd_bench_drag(drag, out, err);
    return cmd_serve(serve, out, err);
}

}  // namespace rotdrag
