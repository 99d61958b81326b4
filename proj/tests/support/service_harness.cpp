// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "service_harness.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <sstream>

#include "rotdrag/image_io.hpp"

namespace rotdrag::testing {

using nlohmann::json;

TestServer::TestServer(ServiceConfig config) {
    m_service = std::make_unique<Service>(std::move(config));
    m_service->mount(m_server);
    m_port = m_server.bind_to_any_port("127.0.0.1");
    m_thread = std::thread([this] { m_server.listen_after_bind(); });
    m_server.wait_until_ready();
}

TestServer::~TestServer() {
    m_server.stop();
    if (m_thread.joinable())
        m_thread.join();
    m_service.reset();
}

httplib::Client TestServer::client() const {
    httplib::Client cli("127.0.0.1", m_port);
    cli.set_read_timeout(60, 0);
    cli.set_write_timeout(60, 0);
    return cli;
}

std::string png_body(const Image& img) {
    const Bytes b = encode_png(img);
    return {b.begin(), b.end()};
}

std::string mask_body(const BinaryMask& mask) {
    const Bytes b = encode_mask_png(mask);
    return {b.begin(), b.end()};
}

StreamRead read_stream(httplib::Client& cli, const std::string& job_id, std::size_t stop_after) {
    StreamRead out;
    std::string body;
    auto res = cli.Get("/jobs/" + job_id + "/progress", [&](const char* data, std::size_t len) {
        body.append(data, len);
        return static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n')) < stop_after;
    });
    if (!res && res.error() != httplib::Error::Canceled)
        return out;
    out.status = res ? res->status : 200;
    if (out.status != 200)
        return out;
    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty())
            out.records.push_back(json::parse(line));
    return out;
}

std::string check_stream(const StreamRead& s) {
    if (s.status != 200)
        return "stream status " + std::to_string(s.status);
    if (s.records.empty())
        return "empty stream";
    for (std::size_t i = 0; i + 1 < s.records.size(); ++i) {
        const json& r = s.records[i];
        if (r.value("type", "") != "step")
            return "record " + std::to_string(i) + " is not a step";
        if (r.value("step", -1) != static_cast<int>(i))
            return "step index " + std::to_string(r.value("step", -1)) + " at position " + std::to_string(i);
    }
    const json& fin = s.records.back();
    if (fin.value("type", "") != "final")
        return "stream does not end with a final record";
    const std::string st = fin.value("state", "");
    if (st != "Done" && st != "Failed" && st != "Cancelled")
        return "final state " + st + " is not terminal";
    if (fin.value("steps", -1) != static_cast<int>(s.records.size()) - 1)
        return "final step count disagrees with the stream";
    return {};
}

namespace {

int rank_of(const std::string& state) {
    if (state == "Queued")
        return 0;
    if (state == "Running")
        return 1;
    return 2;
}

bool terminal(const std::string& state) { return rank_of(state) == 2; }

struct JobTrack {
    std::string id;
    std::vector<std::string> history;
    std::size_t steps_seen = 0;
    bool running_cancel = false;

    bool known_terminal() const { return !history.empty() && terminal(history.back()); }
};

class Sequencer {
public:
    Sequencer(httplib::Client& cli, std::mt19937_64& rng, PropertyOutcome& out) : m_cli(cli), m_rng(rng), m_out(out) {}

    bool fail(const std::string& what) {
        if (m_out.ok) {
            m_out.ok = false;
            m_out.failure = what;
        }
        return false;
    }

    bool observe(JobTrack& j, const std::string& state, const std::string& where) {
        if (state.empty())
            return fail(where + ": missing state for " + j.id);
        if (!j.history.empty()) {
            const std::string& last = j.history.back();
            if (rank_of(state) < rank_of(last))
                return fail(where + ": " + j.id + " regressed from " + last + " to " + state);
            if (terminal(last) && state != last)
                return fail(where + ": " + j.id + " changed terminal state " + last + " to " + state);
        }
        j.history.push_back(state);
        return true;
    }

    httplib::Result req(const std::string& method, const std::string& path, const std::string& body = {},
                        const std::string& type = "application/json") {
        ++m_out.requests;
        if (method == "GET")
            return m_cli.Get(path);
        if (method == "PUT")
            return m_cli.Put(path, body, type);
        return m_cli.Post(path, body, type);
    }

    bool get_job(JobTrack& j, const std::string& where) {
        auto r = req("GET", "/jobs/" + j.id);
        if (!r || r->status != 200)
            return fail(where + ": GET job failed");
        const json b = json::parse(r->body);
        const std::size_t steps = b.value("steps", std::size_t{0});
        if (steps < j.steps_seen)
            return fail(where + ": step count shrank for " + j.id);
        j.steps_seen = steps;
        return observe(j, b.value("state", ""), where);
    }

    bool stream_job(JobTrack& j, const std::string& where) {
        ++m_out.requests;
        const StreamRead s = read_stream(m_cli, j.id);
        const std::string problem = check_stream(s);
        if (!problem.empty())
            return fail(where + ": " + j.id + ": " + problem);
        if (s.records.size() - 1 < j.steps_seen)
            return fail(where + ": stream shorter than reported steps");
        j.steps_seen = s.records.size() - 1;
        return observe(j, s.records.back().value("state", ""), where);
    }

    bool run(int index);

private:
    httplib::Client& m_cli;
    std::mt19937_64& m_rng;
    PropertyOutcome& m_out;
};

bool Sequencer::run(int index) {
    constexpr int n = 24;
    const std::string tag = "sequence " + std::to_string(index);
    auto pick = [&](int k) { return static_cast<int>(std::uniform_int_distribution<int>(0, k - 1)(m_rng)); };
    auto coord = [&] { return std::uniform_real_distribution<double>(0.0, n - 1.0)(m_rng); };

    const Image img = textured_image(n, n, 5000 + index, 12);
    auto created = req("POST", "/sessions", png_body(img), "image/png");
    if (!created || created->status != 201)
        return fail(tag + ": session creation failed");
    const std::string sid = json::parse(created->body).at("id");
    const std::string base = "/sessions/" + sid;

    BinaryMask mask(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            mask.set(x, y, std::hypot(x - 11.5, y - 11.5) < 10.0);

    bool has_points = false, has_mask = false;
    json points_model;
    std::vector<JobTrack> jobs;
    const int ops = 4 + pick(8);
    for (int k = 0; k < ops; ++k) {
        const std::string where = tag + " op " + std::to_string(k);
        JobTrack* last = jobs.empty() ? nullptr : &jobs.back();
        switch (pick(11)) {
        case 0: {
            json pts = json::array();
            const int pairs = 1 + pick(3);
            for (int p = 0; p < pairs; ++p)
                pts.push_back({{"source", {coord(), coord()}}, {"target", {coord(), coord()}}});
            auto r = req("PUT", base + "/points", json{{"points", pts}}.dump());
            if (!r || r->status != 200)
                return fail(where + ": valid points rejected");
            const json echoed = json::parse(r->body).at("points");
            for (std::size_t p = 0; p < pts.size(); ++p)
                if (echoed[p]["source"] != pts[p]["source"] || echoed[p]["target"] != pts[p]["target"])
                    return fail(where + ": points echo differs");
            has_points = true;
            points_model = echoed;
            break;
        }
        case 1: {
            json pts = json::array({{{"source", {-1.0, 5.0}}, {"target", {3.0, 3.0}}}});
            if (pick(2))
                pts = json::array({{{"source", {3.0, 3.0}}, {"target", {3.0, n + 0.5}}}});
            auto r = req("PUT", base + "/points", json{{"points", pts}}.dump());
            if (!r || r->status != 422)
                return fail(where + ": out-of-bounds points not rejected with 422");
            break;
        }
        case 2: {
            auto r = req("PUT", base + "/mask", mask_body(mask), "image/png");
            if (!r || r->status != 200)
                return fail(where + ": valid mask rejected");
            has_mask = true;
            break;
        }
        case 3: {
            if (pick(2)) {
                auto r = req("PUT", base + "/mask", mask_body(BinaryMask(n - 4, n, true)), "image/png");
                if (!r || r->status != 422)
                    return fail(where + ": wrong-size mask not rejected with 422");
            } else {
                auto r = req("PUT", base + "/mask", "not a png", "image/png");
                if (!r || r->status != 415)
                    return fail(where + ": garbage mask not rejected with 415");
            }
            break;
        }
        case 4: {
            const int steps[] = {0, 3, 40};
            const json body{{"options", {{"max_steps", steps[pick(3)]}, {"t_edit", 5}, {"n_ddim_steps", 10},
                                         {"stop_dist", 0.5}}}};
            const bool prev_terminal = !last || last->known_terminal();
            auto r = req("POST", base + "/edit", body.dump());
            if (!r)
                return fail(where + ": edit request failed");
            if (!has_points || !has_mask) {
                if (r->status != 422)
                    return fail(where + ": incomplete session got " + std::to_string(r->status));
                break;
            }
            if (r->status == 202) {
                if (last && !prev_terminal) {
                    if (!get_job(*last, where))
                        return false;
                    if (!last->known_terminal())
                        return fail(where + ": second job accepted while " + last->id + " is active");
                }
                JobTrack j;
                j.id = json::parse(r->body).at("job");
                jobs.push_back(j);
                ++m_out.jobs;
                if (!observe(jobs.back(), "Queued", where))
                    return false;
            } else if (r->status == 409) {
                if (prev_terminal)
                    return fail(where + ": 409 although the previous job had finished");
            } else {
                return fail(where + ": edit returned " + std::to_string(r->status));
            }
            break;
        }
        case 5: {
            if (!last) {
                auto r = req("POST", "/jobs/job-missing/cancel");
                if (!r || r->status != 404)
                    return fail(where + ": cancel of unknown job not 404");
                break;
            }
            const bool was_terminal = last->known_terminal();
            auto r = req("POST", "/jobs/" + last->id + "/cancel");
            if (!r)
                return fail(where + ": cancel failed");
            if (r->status == 200) {
                if (!observe(*last, json::parse(r->body).value("state", ""), where))
                    return false;
                if (last->history.back() != "Cancelled")
                    return fail(where + ": 200 cancel without Cancelled state");
            } else if (r->status == 202) {
                if (!observe(*last, json::parse(r->body).value("state", ""), where))
                    return false;
                last->running_cancel = true;
                ++m_out.cancelled_running;
            } else if (r->status == 409) {
                if (!get_job(*last, where))
                    return false;
                if (!last->known_terminal())
                    return fail(where + ": cancel 409 on a live job");
            } else {
                return fail(where + ": cancel returned " + std::to_string(r->status));
            }
            if (was_terminal && r->status != 409)
                return fail(where + ": cancel accepted on a finished job");
            break;
        }
        case 6:
            if (last && !get_job(*last, where))
                return false;
            break;
        case 7: {
            if (!last)
                break;
            const bool done_before = !last->history.empty() && last->history.back() == "Done";
            auto r = req("GET", "/jobs/" + last->id + "/result");
            if (!r)
                return fail(where + ": result request failed");
            if (r->status == 200) {
                if (!observe(*last, "Done", where))
                    return false;
                const Image out = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()),
                                                         r->body.size()));
                if (out.width != n || out.height != n)
                    return fail(where + ": result image has the wrong size");
                if (!r->has_header("X-Rotdrag-Metadata"))
                    return fail(where + ": result lacks metadata");
            } else if (r->status == 409) {
                if (done_before)
                    return fail(where + ": result 409 for a Done job");
            } else {
                return fail(where + ": result returned " + std::to_string(r->status));
            }
            break;
        }
        case 8:
            if (last && !stream_job(*last, where))
                return false;
            break;
        case 9: {
            auto r = req("GET", base);
            if (!r || r->status != 200)
                return fail(where + ": session lookup failed");
            const json b = json::parse(r->body);
            if (has_points && b.at("points") != points_model)
                return fail(where + ": stored points differ from the last write");
            if (has_mask == b.at("mask").is_null())
                return fail(where + ": stored mask presence differs");
            break;
        }
        default: {
            auto r = req("GET", "/jobs/job-unknown-" + std::to_string(index));
            if (!r || r->status != 404)
                return fail(where + ": unknown job not 404");
            break;
        }
        }
    }
    for (JobTrack& j : jobs) {
        if (!stream_job(j, tag + " drain"))
            return false;
        if (!get_job(j, tag + " drain"))
            return false;
        if (j.history.back() == "Done") {
            auto r = req("GET", "/jobs/" + j.id + "/result");
            if (!r || r->status != 200)
                return fail(tag + ": Done job without a result");
        } else {
            auto r = req("GET", "/jobs/" + j.id + "/result");
            if (!r || r->status != 409)
                return fail(tag + ": unfinished job served a result");
        }
    }
    return true;
}

}  // namespace

PropertyOutcome run_job_property_suite(int sequences, std::uint64_t seed) {
    TempDir dir("props");
    ServiceConfig cfg;
    cfg.root = dir.path();
    cfg.workers = 2;
    TestServer server(cfg);
    httplib::Client cli = server.client();
    std::mt19937_64 rng(seed);
    PropertyOutcome out;
    Sequencer seq(cli, rng, out);
    for (int i = 0; i < sequences && out.ok; ++i) {
        seq.run(i);
        ++out.sequences;
    }
    return out;
}

std::vector<EndpointCheck> check_endpoint_codes() {
    std::vector<EndpointCheck> checks;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = {}) {
        checks.push_back({name, ok, detail});
    };
    auto status = [](const httplib::Result& r) { return r ? r->status : -1; };

    TempDir dir("endpoints");
    ServiceConfig cfg;
    cfg.root = dir.path();
    cfg.max_upload_bytes = 64 * 1024;
    cfg.workers = 2;
    std::string sid;
    {
        TestServer server(cfg);
        httplib::Client cli = server.client();

        const Image img = textured_image(64, 64, 11);
        auto r = cli.Post("/sessions", png_body(img), "image/png");
        check("POST /sessions 64x64 PNG -> 201", status(r) == 201 && json::parse(r->body).contains("id"));
        sid = json::parse(r->body).at("id");
        const std::string base = "/sessions/" + sid;

        check("POST /sessions garbage -> 415", status(cli.Post("/sessions", "0123456789", "image/png")) == 415);
        check("POST /sessions oversize -> 413",
              status(cli.Post("/sessions", std::string(100 * 1024, 'x'), "image/png")) == 413);
        check("GET /sessions/{unknown} -> 404", status(cli.Get("/sessions/nope")) == 404);
        check("GET /sessions/{id} -> 200", status(cli.Get(base)) == 200);

        const json bad_pts{{"points", {{{"source", {-1.0, 5.0}}, {"target", {10.0, 10.0}}}}}};
        check("PUT points (-1, 5) -> 422", status(cli.Put(base + "/points", bad_pts.dump(), "application/json")) == 422);
        check("PUT points unknown session -> 404",
              status(cli.Put("/sessions/nope/points", bad_pts.dump(), "application/json")) == 404);
        check("PUT mask wrong size -> 422",
              status(cli.Put(base + "/mask", mask_body(BinaryMask(32, 32, true)), "image/png")) == 422);
        check("PUT mask unknown session -> 404",
              status(cli.Put("/sessions/nope/mask", mask_body(BinaryMask(64, 64, true)), "image/png")) == 404);

        const json pts{{"points", {{{"source", {20, 32}}, {"target", {44.0, 30.0}}}}}};
        r = cli.Put(base + "/points", pts.dump(), "application/json");
        const bool echoed = status(r) == 200 && json::parse(r->body).at("points") == pts.at("points");
        check("PUT points valid -> 200 echoed", echoed);
        r = cli.Put(base + "/points", pts.dump(), "application/json");
        check("PUT points idempotent", status(r) == 200 && json::parse(r->body).at("points") == pts.at("points"));

        check("POST edit without mask -> 422", status(cli.Post(base + "/edit", "{}", "application/json")) == 422);
        check("POST edit unknown session -> 404", status(cli.Post("/sessions/nope/edit", "{}", "application/json")) == 404);

        BinaryMask mask(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                mask.set(x, y, std::hypot(x - 32.0, y - 32.0) < 24.0);
        check("PUT mask valid -> 200", status(cli.Put(base + "/mask", mask_body(mask), "image/png")) == 200);

        const json long_run{{"options", {{"max_steps", 160}, {"stop_dist", 1e-6}}}};
        r = cli.Post(base + "/edit", long_run.dump(), "application/json");
        check("POST edit complete session -> 202", status(r) == 202);
        const std::string job = json::parse(r->body).at("job");
        check("POST edit while active -> 409", status(cli.Post(base + "/edit", "{}", "application/json")) == 409);

        // Wait until it is running with some steps, then poke the running-state endpoints.
        for (int i = 0; i < 400; ++i) {
            const auto snap = server.service().jobs().snapshot(job);
            if (snap && snap->state == JobState::Running && snap->steps >= 2)
                break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        check("GET result while running -> 409", status(cli.Get("/jobs/" + job + "/result")) == 409);
        check("GET /jobs/{id} -> 200", status(cli.Get("/jobs/" + job)) == 200);
        const StreamRead mid = read_stream(cli, job, 2);
        bool prefix = mid.records.size() >= 2;
        for (std::size_t i = 0; prefix && i < mid.records.size(); ++i)
            prefix = mid.records[i].value("step", -1) == static_cast<int>(i);
        check("progress mid-run -> gap-free prefix", prefix);
        r = cli.Post("/jobs/" + job + "/cancel");
        const int cancel_status = status(r);
        check("POST cancel running -> 202 (or 409 once finished)", cancel_status == 202 || cancel_status == 409,
              std::to_string(cancel_status));
        const auto fin = server.service().jobs().wait(job, std::chrono::seconds(30));
        check("cancelled job ends Cancelled", fin && (fin->state == JobState::Cancelled || cancel_status == 409));
        check("POST cancel terminal -> 409", status(cli.Post("/jobs/" + job + "/cancel")) == 409);
        check("POST cancel unknown -> 404", status(cli.Post("/jobs/nope/cancel")) == 404);
        check("GET result cancelled -> 409", status(cli.Get("/jobs/" + job + "/result")) == 409);
        check("GET /jobs/{unknown} -> 404", status(cli.Get("/jobs/nope")) == 404);
        check("GET progress unknown -> 404", read_stream(cli, "nope").status == 404);

        const json quick{{"options", {{"max_steps", 20}, {"t_edit", 10}, {"n_ddim_steps", 20}}}};
        r = cli.Post(base + "/edit", quick.dump(), "application/json");
        const std::string done_job = status(r) == 202 ? json::parse(r->body).at("job").get<std::string>() : "";
        server.service().jobs().wait(done_job, std::chrono::seconds(60));
        r = cli.Get("/jobs/" + done_job + "/result");
        bool png_ok = status(r) == 200 && r->get_header_value("Content-Type") == "image/png" &&
                      r->has_header("X-Rotdrag-Metadata");
        if (png_ok) {
            const Image out =
                decode_image(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()), r->body.size()));
            png_ok = out.width == 64 && out.height == 64;
        }
        check("GET result Done -> 200 PNG", png_ok);
        const StreamRead late = read_stream(cli, done_job);
        const std::string problem = check_stream(late);
        check("progress after Done -> backlog then final", problem.empty() && late.records.size() >= 2, problem);

        const json failing{{"options", {{"lr", 1e308}, {"max_steps", 5}}}};
        r = cli.Post(base + "/edit", failing.dump(), "application/json");
        const std::string failed_job = status(r) == 202 ? json::parse(r->body).at("job").get<std::string>() : "";
        const auto failed = server.service().jobs().wait(failed_job, std::chrono::seconds(60));
        r = cli.Get("/jobs/" + failed_job + "/result");
        const bool detail = status(r) == 409 && r->body.find("Failed") != std::string::npos &&
                            json::parse(r->body).at("detail").get<std::string>().size() > 10;
        check("GET result Failed -> 409 with detail", failed && failed->state == JobState::Failed && detail,
              r ? r->body : "");

        check("POST edit bad options -> 422",
              status(cli.Post(base + "/edit", R"({"options":{"r1":0}})", "application/json")) == 422);
    }
    {
        TestServer restarted(cfg);
        httplib::Client cli = restarted.client();
        auto r = cli.Get("/sessions/" + sid);
        check("session survives restart", status(r) == 200 && json::parse(r->body).at("mask").is_string());
    }
    return checks;
}

}  // namespace rotdrag::testing
