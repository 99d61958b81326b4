// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rotdrag/drag_case.hpp"
#include "rotdrag/drag_engine.hpp"
#include "rotdrag/image_io.hpp"
#include "rotdrag/options.hpp"

namespace httplib {
class Server;
}

namespace rotdrag {

/// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::span<const std::uint8_t> bytes);

/// Blobs addressed by their content hash under `root`.
class FileStore {
public:
    explicit FileStore(std::filesystem::path root);
    std::string put(std::span<const std::uint8_t> bytes);
    Bytes get(const std::string& hash) const;
    bool contains(const std::string& hash) const;

private:
    std::filesystem::path m_root;
};

struct SessionRecord {
    std::string id;
    std::string image_ref;
    int width = 0;
    int height = 0;
    std::vector<PointPair> points;
    std::optional<std::string> mask_ref;
    std::string created;
    std::string updated;

    nlohmann::json to_json() const;
    static SessionRecord from_json(const nlohmann::json& j);
};

/// Session records kept in memory and mirrored to one JSON file each, so a restart reloads them.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    SessionRecord create(const std::string& image_ref, int width, int height);
    std::optional<SessionRecord> get(const std::string& id) const;
    /// Returns nullopt for an unknown id.
    std::optional<SessionRecord> set_points(const std::string& id, std::vector<PointPair> points);
    std::optional<SessionRecord> set_mask(const std::string& id, const std::string& mask_ref);

private:
    void persist(const SessionRecord& r) const;

    std::filesystem::path m_root;
    mutable std::mutex m_mutex;
    std::map<std::string, SessionRecord> m_sessions;
    std::uint64_t m_counter = 0;
};

enum class JobState { Queued, Running, Done, Failed, Cancelled };

std::string_view to_string(JobState s);
bool is_terminal(JobState s);

struct JobSnapshot {
    std::string id;
    std::string session_id;
    JobState state = JobState::Queued;
    std::size_t steps = 0;  ///< progress records so far
    bool cancel_requested = false;
    std::string detail;
    nlohmann::json metadata;  ///< set when Done

    nlohmann::json to_json() const;
};

/// Progress records from `from` onward plus the job state at the time of the read.
struct ProgressChunk {
    std::vector<StepReport> reports;
    JobState state = JobState::Queued;
    std::string detail;
};

enum class SubmitStatus { Accepted, Conflict };
enum class CancelStatus { Cancelled, Requested, AlreadyTerminal, NotFound };

/// Edit jobs on a bounded worker pool. Each job owns its engine instance; at most one job per
/// session is active (Queued or Running) at a time.
class JobManager {
public:
    explicit JobManager(int workers);
    ~JobManager();
    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    /// On Accepted, `job_id` receives the new id.
    SubmitStatus submit(const std::string& session_id, DragConfig config, EngineOptions options,
                        std::string& job_id);
    CancelStatus cancel(const std::string& job_id);
    std::optional<JobSnapshot> snapshot(const std::string& job_id) const;

    /// Waits up to `wait` for records past `from` or a terminal state.
    std::optional<ProgressChunk> read_progress(const std::string& job_id, std::size_t from,
                                               std::chrono::milliseconds wait) const;

    /// PNG bytes of a Done job.
    std::optional<Bytes> result_png(const std::string& job_id) const;

    /// Blocks until the job is terminal or `timeout` passes. Returns the final snapshot.
    std::optional<JobSnapshot> wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

private:
    struct Job;
    void worker_loop(std::stop_token stop);
    void execute(const std::shared_ptr<Job>& job);

    mutable std::mutex m_mutex;
    mutable std::condition_variable_any m_changed;
    std::map<std::string, std::shared_ptr<Job>> m_jobs;
    std::map<std::string, std::string> m_active_by_session;
    std::deque<std::shared_ptr<Job>> m_queue;
    std::uint64_t m_counter = 0;
    std::vector<std::jthread> m_workers;
};

struct ServiceConfig {
    std::filesystem::path root = "rotdrag_data";
    std::size_t max_upload_bytes = 16u << 20;
    int workers = 2;
    OptionLayer defaults;  ///< engine options under any per-request overrides
};

/// HTTP facade over the stores and the job manager.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();

    /// Registers every endpoint on `server` and applies the payload limit.
    void mount(httplib::Server& server);

    JobManager& jobs() { return m_jobs; }
    SessionStore& sessions() { return m_sessions; }

private:
    ServiceConfig m_config;
    FileStore m_files;
    SessionStore m_sessions;
    JobManager m_jobs;
};

}  // namespace rotdrag
