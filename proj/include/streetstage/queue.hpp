#pragma once

// Render queue: a pure event-sourced state machine plus a worker that drives
// jobs through a backend and appends every transition to a JSONL log.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "streetstage/genbackend.hpp"

namespace streetstage::queue {

namespace fs = std::filesystem;

enum class JobState { pending, running, done, failed };
enum class SubJobState { pending, running, done, failed };

std::string to_string(JobState s);
std::string to_string(SubJobState s);

struct RenderJob {
  std::string job_id;
  std::string bundle_id;
  std::string bundle_path;
  std::uint64_t seq = 0;  // submission order
  JobState state = JobState::pending;
  std::vector<SubJobState> subjobs;
  std::vector<std::string> subjob_outputs;  // empty until that sub-job is done
  int attempts = 0;                          // failed backend probes while pending
  std::int64_t not_before_ms = 0;            // backoff deadline, ms since epoch
  std::optional<std::string> result;         // frame directory of the final output
  std::optional<std::string> error;
};

nlohmann::json to_json(const RenderJob& job);

enum class EventType {
  submitted,       // job_id, bundle_id, bundle_path, masks
  attempt_failed,  // job_id, error, not_before_ms
  started,         // job_id
  resumed,         // job_id; running sub-jobs go back to pending
  subjob_started,  // job_id, index
  subjob_done,     // job_id, index, output
  subjob_failed,   // job_id, index, error
  done,            // job_id, result
  failed,          // job_id, error
};

struct Event {
  EventType type = EventType::submitted;
  std::string job_id;
  std::string bundle_id;
  std::string bundle_path;
  int masks = 0;
  int index = -1;
  std::string output;
  std::string error;
  std::int64_t not_before_ms = 0;
  std::int64_t ts_ms = 0;  // wall clock; informational
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Legal transitions only: job pending -> running -> done | failed, sub-jobs
/// pending -> running -> done | failed in mask order. Anything else throws
/// IllegalTransition and leaves the state untouched.
class QueueState {
 public:
  void apply(const Event& e);

  const std::map<std::string, RenderJob>& jobs() const { return jobs_; }
  const RenderJob* find(const std::string& job_id) const;
  /// Live (pending or running) job for this bundle, else the latest one.
  const RenderJob* find_bundle(const std::string& bundle_id) const;
  /// Pending and running jobs in submission order.
  std::vector<const RenderJob*> unfinished() const;
  std::uint64_t next_seq() const { return next_seq_; }

 private:
  std::map<std::string, RenderJob> jobs_;
  std::map<std::string, std::vector<std::string>> by_bundle_;
  std::uint64_t next_seq_ = 1;
};

struct QueueOptions {
  fs::path dir;  // events.jsonl and jobs/<job_id>/ outputs
  int max_attempts = 5;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{30000};
  bool start_worker = true;
};

/// Delay before retry n (1-based): initial * 2^(n-1), capped.
std::chrono::milliseconds backoff_delay(const QueueOptions& options, int attempt);

class RenderQueue {
 public:
  /// Replays the event log found in options.dir, resuming unfinished jobs.
  RenderQueue(std::shared_ptr<genbackend::BackendClient> backend, QueueOptions options);
  ~RenderQueue();
  RenderQueue(const RenderQueue&) = delete;
  RenderQueue& operator=(const RenderQueue&) = delete;

  /// Idempotent by bundle_id: a bundle with a pending, running or done job
  /// returns that job's id. The bundle manifest must already be written.
  std::string submit(const fs::path& bundle_manifest);

  std::optional<RenderJob> poll(const std::string& job_id) const;
  std::vector<RenderJob> jobs() const;

  /// Blocks until the job is done or failed, or the timeout elapses.
  RenderJob wait(const std::string& job_id, std::chrono::milliseconds timeout);

  /// Runs one scheduling step on the caller's thread (worker disabled only).
  /// Returns false when nothing was runnable.
  bool step();

  /// Stops the worker after the current sub-job. With `abandon`, no further
  /// events are written, leaving the log as a crash would.
  void stop(bool abandon = false);

  const fs::path& log_path() const { return log_path_; }

 private:
  void worker_loop();
  bool run_next(std::unique_lock<std::mutex>& lock);
  void emit(Event e);  // requires mu_ held
  void publish();      // requires mu_ held
  void release_lock();

  std::shared_ptr<genbackend::BackendClient> backend_;
  QueueOptions options_;
  fs::path log_path_;
  std::FILE* log_ = nullptr;
  int lock_fd_ = -1;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  QueueState state_;
  bool stopping_ = false;
  bool abandoned_ = false;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const std::map<std::string, RenderJob>> snapshot_;

  std::thread worker_;
};

/// Reads a log; a torn final line (crash mid-append) is ignored.
std::vector<Event> read_log(const fs::path& path);

}  // namespace streetstage::queue
