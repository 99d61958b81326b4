// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/service.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <httplib.h>

#include "rotdrag/error.hpp"
#include "rotdrag/runner.hpp"

namespace rotdrag {

using nlohmann::json;

namespace {

std::string now_iso() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void send_error(httplib::Response& res, int status, const std::string& error, const std::string& detail) {
    res.status = status;
    res.set_content(json{{"error", error}, {"detail", detail}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

std::string content_hash(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return hex64(h);
}

FileStore::FileStore(std::filesystem::path root) : m_root(std::move(root)) {
    std::filesystem::create_directories(m_root);
}

std::string FileStore::put(std::span<const std::uint8_t> bytes) {
    const std::string h = content_hash(bytes);
    const auto path = m_root / h;
    if (!std::filesystem::exists(path)) {
        const auto tmp = m_root / (h + ".tmp" + hex64(reinterpret_cast<std::uintptr_t>(&bytes)));
        write_file(tmp, bytes);
        std::filesystem::rename(tmp, path);
    }
    return h;
}

Bytes FileStore::get(const std::string& hash) const { return read_file(m_root / hash); }

bool FileStore::contains(const std::string& hash) const { return std::filesystem::exists(m_root / hash); }

json SessionRecord::to_json() const {
    return json{{"id", id},
                {"image", image_ref},
                {"width", width},
                {"height", height},
                {"points", points_to_json(points)},
                {"mask", mask_ref ? json(*mask_ref) : json(nullptr)},
                {"created", created},
                {"updated", updated}};
}

SessionRecord SessionRecord::from_json(const json& j) {
    SessionRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_ref = j.at("image").get<std::string>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.points = parse_points(j.at("points"), "session " + r.id);
    if (!j.at("mask").is_null())
        r.mask_ref = j.at("mask").get<std::string>();
    r.created = j.at("created").get<std::string>();
    r.updated = j.at("updated").get<std::string>();
    return r;
}

SessionStore::SessionStore(std::filesystem::path root) : m_root(std::move(root)) {
    std::filesystem::create_directories(m_root);
    for (const auto& e : std::filesystem::directory_iterator(m_root)) {
        if (e.path().extension() != ".json")
            continue;
        try {
            std::ifstream in(e.path());
            SessionRecord r = SessionRecord::from_json(json::parse(in));
            m_sessions[r.id] = std::move(r);
        } catch (const std::exception&) {
            // A half-written or foreign file is skipped rather than blocking startup.
        }
    }
}

void SessionStore::persist(const SessionRecord& r) const {
    const auto tmp = m_root / (r.id + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << r.to_json().dump(2);
        if (!out)
            throw Error(ErrorCode::Io, "cannot persist session " + r.id);
    }
    std::filesystem::rename(tmp, m_root / (r.id + ".json"));
}

SessionRecord SessionStore::create(const std::string& image_ref, int width, int height) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m_mutex);
    SessionRecord r;
    do {
        r.id = hex64(rng() ^ ++m_counter);
    } while (m_sessions.count(r.id));
    r.image_ref = image_ref;
    r.width = width;
    r.height = height;
    r.created = r.updated = now_iso();
    persist(r);
    m_sessions[r.id] = r;
    return r;
}

std::optional<SessionRecord> SessionStore::get(const std::string& id) const {
    std::lock_guard lock(m_mutex);
    const auto it = m_sessions.find(id);
    if (it == m_sessions.end())
        return std::nullopt;
    return it->second;
}

std::optional<SessionRecord> SessionStore::set_points(const std::string& id, std::vector<PointPair> points) {
    std::lock_guard lock(m_mutex);
    const auto it = m_sessions.find(id);
    if (it == m_sessions.end())
        return std::nullopt;
    if (it->second.points != points) {
        SessionRecord next = it->second;
        next.points = std::move(points);
        next.updated = now_iso();
        persist(next);
        it->second = std::move(next);
    }
    return it->second;
}

std::optional<SessionRecord> SessionStore::set_mask(const std::string& id, const std::string& mask_ref) {
    std::lock_guard lock(m_mutex);
    const auto it = m_sessions.find(id);
    if (it == m_sessions.end())
        return std::nullopt;
    if (it->second.mask_ref != mask_ref) {
        SessionRecord next = it->second;
        next.mask_ref = mask_ref;
        next.updated = now_iso();
        persist(next);
        it->second = std::move(next);
    }
    return it->second;
}

std::string_view to_string(JobState s) {
    switch (s) {
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Done: return "Done";
    case JobState::Failed: return "Failed";
    case JobState::Cancelled: return "Cancelled";
    }
    return "Unknown";
}

bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed || s == JobState::Cancelled; }

json JobSnapshot::to_json() const {
    json j{{"id", id},
           {"session", session_id},
           {"state", std::string(to_string(state))},
           {"steps", steps},
           {"cancel_requested", cancel_requested}};
    if (!detail.empty())
        j["detail"] = detail;
    if (!metadata.is_null())
        j["metadata"] = metadata;
    return j;
}

struct JobManager::Job {
    std::string id;
    std::string session_id;
    JobState state = JobState::Queued;
    std::vector<StepReport> reports;
    std::string detail;
    json metadata;
    Bytes png;
    std::stop_source stop;
    bool cancel_requested = false;
    DragConfig config;
    EngineOptions options;

    JobSnapshot snapshot() const {
        return {id, session_id, state, reports.size(), cancel_requested, detail, metadata};
    }
};

JobManager::JobManager(int workers) {
    for (int i = 0; i < std::max(1, workers); ++i)
        m_workers.emplace_back([this](std::stop_token st) { worker_loop(st); });
}

JobManager::~JobManager() {
    {
        std::lock_guard lock(m_mutex);
        for (auto& [id, job] : m_jobs) {
            if (job->state == JobState::Queued) {
                job->state = JobState::Cancelled;
                job->detail = "service shutting down";
            } else if (job->state == JobState::Running) {
                job->stop.request_stop();
            }
        }
        m_queue.clear();
    }
    m_changed.notify_all();
    for (auto& w : m_workers)
        w.request_stop();
    m_workers.clear();
}

SubmitStatus JobManager::submit(const std::string& session_id, DragConfig config, EngineOptions options,
                                std::string& job_id) {
    {
        std::lock_guard lock(m_mutex);
        if (m_active_by_session.count(session_id))
            return SubmitStatus::Conflict;
        auto job = std::make_shared<Job>();
        job->id = "job-" + hex64(++m_counter).substr(8);
        job->session_id = session_id;
        job->config = std::move(config);
        job->options = std::move(options);
        m_jobs[job->id] = job;
        m_active_by_session[session_id] = job->id;
        m_queue.push_back(job);
        job_id = job->id;
    }
    m_changed.notify_all();
    return SubmitStatus::Accepted;
}

CancelStatus JobManager::cancel(const std::string& job_id) {
    CancelStatus status;
    {
        std::lock_guard lock(m_mutex);
        const auto it = m_jobs.find(job_id);
        if (it == m_jobs.end())
            return CancelStatus::NotFound;
        Job& job = *it->second;
        if (is_terminal(job.state))
            return CancelStatus::AlreadyTerminal;
        job.cancel_requested = true;
        if (job.state == JobState::Queued) {
            job.state = JobState::Cancelled;
            job.detail = "cancelled";
            m_active_by_session.erase(job.session_id);
            std::erase_if(m_queue, [&](const std::shared_ptr<Job>& j) { return j->id == job_id; });
            status = CancelStatus::Cancelled;
        } else {
            job.stop.request_stop();
            status = CancelStatus::Requested;
        }
    }
    m_changed.notify_all();
    return status;
}

std::optional<JobSnapshot> JobManager::snapshot(const std::string& job_id) const {
    std::lock_guard lock(m_mutex);
    const auto it = m_jobs.find(job_id);
    if (it == m_jobs.end())
        return std::nullopt;
    return it->second->snapshot();
}

std::optional<ProgressChunk> JobManager::read_progress(const std::string& job_id, std::size_t from,
                                                       std::chrono::milliseconds wait) const {
    std::unique_lock lock(m_mutex);
    const auto it = m_jobs.find(job_id);
    if (it == m_jobs.end())
        return std::nullopt;
    const std::shared_ptr<Job> job = it->second;
    m_changed.wait_for(lock, wait, [&] { return job->reports.size() > from || is_terminal(job->state); });
    ProgressChunk chunk;
    if (job->reports.size() > from)
        chunk.reports.assign(job->reports.begin() + static_cast<std::ptrdiff_t>(from), job->reports.end());
    chunk.state = job->state;
    chunk.detail = job->detail;
    return chunk;
}

std::optional<Bytes> JobManager::result_png(const std::string& job_id) const {
    std::lock_guard lock(m_mutex);
    const auto it = m_jobs.find(job_id);
    if (it == m_jobs.end() || it->second->state != JobState::Done)
        return std::nullopt;
    return it->second->png;
}

std::optional<JobSnapshot> JobManager::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(m_mutex);
    const auto it = m_jobs.find(job_id);
    if (it == m_jobs.end())
        return std::nullopt;
    const std::shared_ptr<Job> job = it->second;
    m_changed.wait_for(lock, timeout, [&] { return is_terminal(job->state); });
    return job->snapshot();
}

void JobManager::worker_loop(std::stop_token stop) {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(m_mutex);
            if (!m_changed.wait(lock, stop, [&] { return !m_queue.empty(); }))
                return;
            job = m_queue.front();
            m_queue.pop_front();
            if (job->state != JobState::Queued)
                continue;
            job->state = JobState::Running;
        }
        m_changed.notify_all();
        execute(job);
    }
}

void JobManager::execute(const std::shared_ptr<Job>& job) {
    std::optional<DragResult> result;
    std::string failure;
    try {
        Engine engine = make_engine(job->options);
        DragSession session(job->config, *engine.denoiser, *engine.backend);
        auto sink = [&](const StepReport& r) {
            {
                std::lock_guard lock(m_mutex);
                job->reports.push_back(r);
            }
            m_changed.notify_all();
        };
        result = session.run(sink, job->stop.get_token());
    } catch (const std::exception& e) {
        failure = e.what();
    }

    Bytes png;
    json metadata;
    if (result && result->stop_reason != StopReason::Aborted) {
        try {
            png = encode_png(result->image);
            metadata = result_metadata(job->config, *result, job->options);
        } catch (const std::exception& e) {
            failure = e.what();
            result.reset();
        }
    }

    {
        std::lock_guard lock(m_mutex);
        if (!result) {
            job->state = JobState::Failed;
            job->detail = failure;
        } else if (result->stop_reason == StopReason::Aborted) {
            const bool cancelled = job->stop.stop_requested();
            job->state = cancelled ? JobState::Cancelled : JobState::Failed;
            job->detail = result->abort_detail;
        } else {
            job->state = JobState::Done;
            job->png = std::move(png);
            job->metadata = std::move(metadata);
        }
        job->config = DragConfig{};
        m_active_by_session.erase(job->session_id);
    }
    m_changed.notify_all();
}

Service::Service(ServiceConfig config)
    : m_config(std::move(config)),
      m_files(m_config.root / "objects"),
      m_sessions(m_config.root / "sessions"),
      m_jobs(m_config.workers) {}

Service::~Service() = default;

void Service::mount(httplib::Server& server) {
    server.set_payload_max_length(m_config.max_upload_bytes);

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        if (req.body.size() > m_config.max_upload_bytes)
            return send_error(res, 413, "PayloadTooLarge", "upload exceeds the configured limit");
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(req.body.data()),
                                                  req.body.size());
        Image img;
        try {
            img = decode_image(bytes);
        } catch (const Error& e) {
            return send_error(res, 415, "UnsupportedMediaType", e.what());
        }
        const std::string ref = m_files.put(bytes);
        send_json(res, 201, m_sessions.create(ref, img.width, img.height).to_json());
    });

    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = m_sessions.get(req.matches[1]);
        if (!s)
            return send_error(res, 404, "NotFound", "unknown session");
        send_json(res, 200, s->to_json());
    });

    server.Put(R"(/sessions/([^/]+)/points)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto s = m_sessions.get(id);
        if (!s)
            return send_error(res, 404, "NotFound", "unknown session");
        std::vector<PointPair> points;
        try {
            const json j = json::parse(req.body);
            points = parse_points(j.is_object() && j.contains("points") ? j["points"] : j, "points");
        } catch (const std::exception& e) {
            return send_error(res, 422, "InvalidPoints", e.what());
        }
        if (!points_inside(points, s->width, s->height))
            return send_error(res, 422, "OutOfBounds", "points must lie inside the image");
        const auto updated = m_sessions.set_points(id, std::move(points));
        send_json(res, 200, json{{"points", points_to_json(updated->points)}});
    });

    server.Put(R"(/sessions/([^/]+)/mask)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto s = m_sessions.get(id);
        if (!s)
            return send_error(res, 404, "NotFound", "unknown session");
        BinaryMask mask;
        try {
            mask = decode_mask(std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
        } catch (const Error& e) {
            return send_error(res, 415, "UnsupportedMediaType", e.what());
        }
        if (mask.width != s->width || mask.height != s->height)
            return send_error(res, 422, "ShapeMismatch", "mask dimensions differ from the image");
        const std::string ref = m_files.put(encode_mask_png(mask));
        send_json(res, 200, m_sessions.set_mask(id, ref)->to_json());
    });

    server.Post(R"(/sessions/([^/]+)/edit)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto s = m_sessions.get(id);
        if (!s)
            return send_error(res, 404, "NotFound", "unknown session");
        if (s->points.empty())
            return send_error(res, 422, "IncompleteSession", "no point pairs set");
        if (!s->mask_ref)
            return send_error(res, 422, "IncompleteSession", "no mask set");

        DragConfig cfg;
        EngineOptions options;
        try {
            OptionLayer layer;
            if (!req.body.empty()) {
                const json j = json::parse(req.body);
                if (!j.is_object())
                    throw Error(ErrorCode::Config, "edit body must be an object");
                for (const auto& [k, v] : j.items())
                    if (k != "options" && k != "prompt")
                        throw Error(ErrorCode::Config, "unknown field '" + k + "'");
                if (j.contains("options"))
                    layer = OptionLayer::from_json(j["options"], "options");
                if (j.contains("prompt")) {
                    if (!j["prompt"].is_string())
                        throw Error(ErrorCode::Config, "prompt must be a string");
                    cfg.prompt = j["prompt"].get<std::string>();
                }
            }
            options = resolve_options(m_config.defaults, layer);
            make_engine(options);
            cfg.image = decode_image(m_files.get(s->image_ref));
            cfg.mask = decode_mask(m_files.get(*s->mask_ref));
            if (!cfg.mask.any())
                throw Error(ErrorCode::InvalidArgument, "mask selects no editable pixel");
            for (const PointPair& p : s->points) {
                cfg.sources.push_back(p.source);
                cfg.targets.push_back(p.target);
            }
            options.apply_to(cfg);
            cfg.validate();
        } catch (const std::exception& e) {
            return send_error(res, 422, "InvalidEdit", e.what());
        }
        std::string job_id;
        if (m_jobs.submit(id, std::move(cfg), options, job_id) == SubmitStatus::Conflict)
            return send_error(res, 409, "Conflict", "session already has an active job");
        send_json(res, 202, json{{"job", job_id}, {"state", "Queued"}});
    });

    server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto snap = m_jobs.snapshot(req.matches[1]);
        if (!snap)
            return send_error(res, 404, "NotFound", "unknown job");
        send_json(res, 200, snap->to_json());
    });

    server.Get(R"(/jobs/([^/]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!m_jobs.snapshot(id))
            return send_error(res, 404, "NotFound", "unknown job");
        auto offset = std::make_shared<std::size_t>(0);
        res.set_chunked_content_provider("application/x-ndjson", [this, id, offset](std::size_t,
                                                                                     httplib::DataSink& sink) {
            if (!sink.is_writable())
                return false;
            const auto chunk = m_jobs.read_progress(id, *offset, std::chrono::milliseconds(200));
            if (!chunk) {
                sink.done();
                return true;
            }
            std::string out;
            for (const StepReport& r : chunk->reports) {
                json line = step_to_json(r);
                line["type"] = "step";
                out += line.dump() + "\n";
                ++*offset;
            }
            if (is_terminal(chunk->state)) {
                json fin{{"type", "final"}, {"state", std::string(to_string(chunk->state))}, {"steps", *offset}};
                if (!chunk->detail.empty())
                    fin["detail"] = chunk->detail;
                out += fin.dump() + "\n";
            }
            if (!out.empty() && !sink.write(out.data(), out.size()))
                return false;
            if (is_terminal(chunk->state))
                sink.done();
            return true;
        });
    });

    server.Post(R"(/jobs/([^/]+)/cancel)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        switch (m_jobs.cancel(id)) {
        case CancelStatus::NotFound:
            return send_error(res, 404, "NotFound", "unknown job");
        case CancelStatus::AlreadyTerminal:
            return send_error(res, 409, "Conflict", "job already finished");
        case CancelStatus::Cancelled:
            return send_json(res, 200, m_jobs.snapshot(id)->to_json());
        case CancelStatus::Requested:
            return send_json(res, 202, m_jobs.snapshot(id)->to_json());
        }
    });

    server.Get(R"(/jobs/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto snap = m_jobs.snapshot(id);
        if (!snap)
            return send_error(res, 404, "NotFound", "unknown job");
        if (snap->state != JobState::Done)
            return send_error(res, 409, "NotDone",
                              "job is " + std::string(to_string(snap->state)) +
                                  (snap->detail.empty() ? std::string() : ": " + snap->detail));
        const auto png = m_jobs.result_png(id);
        res.status = 200;
        res.set_header("X-Rotdrag-Metadata", snap->metadata.dump());
        res.set_content(std::string(png->begin(), png->end()), "image/png");
    });
}

}  // namespace rotdrag
