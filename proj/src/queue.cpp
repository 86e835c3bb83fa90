#include "streetstage/queue.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "streetstage/error.hpp"

namespace streetstage::queue {

using nlohmann::json;

namespace {

constexpr std::pair<EventType, const char*> kEventNames[] = {
    {EventType::submitted, "submitted"},     {EventType::attempt_failed, "attempt_failed"},
    {EventType::started, "started"},         {EventType::resumed, "resumed"},
    {EventType::subjob_started, "subjob_started"}, {EventType::subjob_done, "subjob_done"},
    {EventType::subjob_failed, "subjob_failed"},   {EventType::done, "done"},
    {EventType::failed, "failed"},
};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

[[noreturn]] void illegal(const Event& e, const std::string& why) {
  std::string name = "?";
  for (const auto& [t, n] : kEventNames) {
    if (t == e.type) name = n;
  }
  throw Error(ErrorCode::IllegalTransition, name + " for job '" + e.job_id + "': " + why);
}

bool terminal(JobState s) { return s == JobState::done || s == JobState::failed; }

}  // namespace

std::string to_string(JobState s) {
  switch (s) {
    case JobState::pending: return "pending";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "?";
}

std::string to_string(SubJobState s) { return to_string(static_cast<JobState>(s)); }

json to_json(const RenderJob& job) {
  json subs = json::array();
  for (std::size_t i = 0; i < job.subjobs.size(); ++i) {
    json s{{"index", i}, {"state", to_string(job.subjobs[i])}};
    if (!job.subjob_outputs[i].empty()) s["output"] = job.subjob_outputs[i];
    subs.push_back(std::move(s));
  }
  json j{{"job_id", job.job_id},     {"bundle_id", job.bundle_id}, {"bundle_path", job.bundle_path},
         {"seq", job.seq},           {"state", to_string(job.state)}, {"subjobs", subs},
         {"attempts", job.attempts}, {"result", nullptr},          {"error", nullptr}};
  if (job.result) j["result"] = *job.result;
  if (job.error) j["error"] = *job.error;
  return j;
}

json to_json(const Event& e) {
  json j;
  for (const auto& [t, n] : kEventNames) {
    if (t == e.type) j["type"] = n;
  }
  j["job_id"] = e.job_id;
  j["ts_ms"] = e.ts_ms;
  switch (e.type) {
    case EventType::submitted:
      j["bundle_id"] = e.bundle_id;
      j["bundle_path"] = e.bundle_path;
      j["masks"] = e.masks;
      break;
    case EventType::attempt_failed:
      j["error"] = e.error;
      j["not_before_ms"] = e.not_before_ms;
      break;
    case EventType::subjob_started: j["index"] = e.index; break;
    case EventType::subjob_done:
      j["index"] = e.index;
      j["output"] = e.output;
      break;
    case EventType::subjob_failed:
      j["index"] = e.index;
      j["error"] = e.error;
      break;
    case EventType::done: j["output"] = e.output; break;
    case EventType::failed: j["error"] = e.error; break;
    default: break;
  }
  return j;
}

Event event_from_json(const json& j) {
  Event e;
  const auto type = j.at("type").get<std::string>();
  bool known = false;
  for (const auto& [t, n] : kEventNames) {
    if (type == n) {
      e.type = t;
      known = true;
    }
  }
  if (!known) throw Error(ErrorCode::InvalidArgument, "unknown queue event type '" + type + "'");
  e.job_id = j.at("job_id").get<std::string>();
  e.bundle_id = j.value("bundle_id", "");
  e.bundle_path = j.value("bundle_path", "");
  e.masks = j.value("masks", 0);
  e.index = j.value("index", -1);
  e.output = j.value("output", "");
  e.error = j.value("error", "");
  e.not_before_ms = j.value("not_before_ms", std::int64_t{0});
  e.ts_ms = j.value("ts_ms", std::int64_t{0});
  return e;
}

// ---- state machine ----

void QueueState::apply(const Event& e) {
  if (e.type == EventType::submitted) {
    if (e.job_id.empty()) illegal(e, "empty job id");
    if (jobs_.count(e.job_id)) illegal(e, "job id already exists");
    if (e.masks < 1) illegal(e, "a job needs at least one mask");
    RenderJob job;
    job.job_id = e.job_id;
    job.bundle_id = e.bundle_id;
    job.bundle_path = e.bundle_path;
    job.seq = next_seq_++;
    job.subjobs.assign(e.masks, SubJobState::pending);
    job.subjob_outputs.assign(e.masks, "");
    by_bundle_[e.bundle_id].push_back(e.job_id);
    jobs_.emplace(e.job_id, std::move(job));
    return;
  }
  auto it = jobs_.find(e.job_id);
  if (it == jobs_.end()) illegal(e, "unknown job");
  RenderJob& job = it->second;
  if (terminal(job.state)) illegal(e, "job already " + to_string(job.state));
  const auto n = static_cast<int>(job.subjobs.size());
  const auto any_running = std::any_of(job.subjobs.begin(), job.subjobs.end(),
                                       [](SubJobState s) { return s == SubJobState::running; });

  switch (e.type) {
    case EventType::attempt_failed:
      if (job.state != JobState::pending) illegal(e, "job is not pending");
      ++job.attempts;
      job.not_before_ms = e.not_before_ms;
      job.error = e.error;
      return;
    case EventType::started:
      if (job.state != JobState::pending) illegal(e, "job is not pending");
      job.state = JobState::running;
      job.error.reset();
      return;
    case EventType::resumed:
      if (job.state != JobState::running) illegal(e, "job is not running");
      for (auto& s : job.subjobs) {
        if (s == SubJobState::running) s = SubJobState::pending;
      }
      return;
    case EventType::subjob_started: {
      if (job.state != JobState::running) illegal(e, "job is not running");
      if (e.index < 0 || e.index >= n) illegal(e, "sub-job index out of range");
      if (job.subjobs[e.index] != SubJobState::pending) illegal(e, "sub-job is not pending");
      if (any_running) illegal(e, "another sub-job is running");
      for (int i = 0; i < e.index; ++i) {
        if (job.subjobs[i] != SubJobState::done) illegal(e, "earlier sub-jobs are not done");
      }
      job.subjobs[e.index] = SubJobState::running;
      return;
    }
    case EventType::subjob_done:
    case EventType::subjob_failed:
      if (job.state != JobState::running) illegal(e, "job is not running");
      if (e.index < 0 || e.index >= n) illegal(e, "sub-job index out of range");
      if (job.subjobs[e.index] != SubJobState::running) illegal(e, "sub-job is not running");
      if (e.type == EventType::subjob_done) {
        job.subjobs[e.index] = SubJobState::done;
        job.subjob_outputs[e.index] = e.output;
      } else {
        job.subjobs[e.index] = SubJobState::failed;
      }
      return;
    case EventType::done:
      if (job.state != JobState::running) illegal(e, "job is not running");
      for (auto s : job.subjobs) {
        if (s != SubJobState::done) illegal(e, "not every sub-job is done");
      }
      if (e.output.empty()) illegal(e, "no result");
      job.state = JobState::done;
      job.result = e.output;
      return;
    case EventType::failed:
      if (job.state != JobState::running) illegal(e, "job is not running");
      if (any_running) illegal(e, "a sub-job is still running");
      job.state = JobState::failed;
      job.error = e.error;
      return;
    case EventType::submitted: break;
  }
  illegal(e, "unhandled event");
}

const RenderJob* QueueState::find(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  return it == jobs_.end() ? nullptr : &it->second;
}

const RenderJob* QueueState::find_bundle(const std::string& bundle_id) const {
  auto it = by_bundle_.find(bundle_id);
  if (it == by_bundle_.end()) return nullptr;
  const RenderJob* latest = nullptr;
  for (const auto& id : it->second) {
    const auto* job = find(id);
    if (job->state != JobState::failed) return job;
    latest = job;
  }
  return latest;
}

std::vector<const RenderJob*> QueueState::unfinished() const {
  std::vector<const RenderJob*> out;
  for (const auto& [id, job] : jobs_) {
    if (!terminal(job.state)) out.push_back(&job);
  }
  std::sort(out.begin(), out.end(), [](const RenderJob* a, const RenderJob* b) { return a->seq < b->seq; });
  return out;
}

// ---- log ----

std::vector<Event> read_log(const fs::path& path) {
  std::vector<Event> events;
  std::ifstream in(path, std::ios::binary);
  if (!in) return events;
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no trailing newline: torn append
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::IoError, "corrupt queue log line in " + path.string());
    events.push_back(event_from_json(j));
  }
  return events;
}

std::chrono::milliseconds backoff_delay(const QueueOptions& o, int attempt) {
  auto d = o.backoff_initial;
  for (int i = 1; i < attempt && d < o.backoff_max; ++i) d *= 2;
  return std::min(d, o.backoff_max);
}

// ---- queue ----

RenderQueue::RenderQueue(std::shared_ptr<genbackend::BackendClient> backend, QueueOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "render queue needs a backend");
  if (options_.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be positive");
  fs::create_directories(options_.dir);
  log_path_ = options_.dir / "events.jsonl";

  // One writer per queue directory, across processes.
  lock_fd_ = ::open((options_.dir / "lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw Error(ErrorCode::IoError, "cannot open queue lock in " + options_.dir.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw Error(ErrorCode::Conflict, "queue directory in use by another process: " + options_.dir.string());
  }

  if (fs::exists(log_path_)) {
    for (const auto& e : read_log(log_path_)) {
      try {
        state_.apply(e);
      } catch (const Error& err) {
        throw Error(ErrorCode::IoError, "queue log replay failed: " + std::string(err.what()));
      }
    }
    // Drop a torn tail so new appends start on a fresh line.
    std::ifstream in(log_path_, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto last_nl = all.rfind('\n');
    const std::uintmax_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != all.size()) fs::resize_file(log_path_, keep);
  }
  log_ = std::fopen(log_path_.c_str(), "ab");
  if (!log_) throw Error(ErrorCode::IoError, "cannot open queue log " + log_path_.string());

  std::lock_guard lock(mu_);
  for (const auto* job : state_.unfinished()) {
    const bool interrupted = std::any_of(job->subjobs.begin(), job->subjobs.end(),
                                         [](SubJobState s) { return s == SubJobState::running; });
    if (interrupted) {
      Event e;
      e.type = EventType::resumed;
      e.job_id = job->job_id;
      emit(e);
    }
  }
  publish();
  if (options_.start_worker) worker_ = std::thread([this] { worker_loop(); });
}

RenderQueue::~RenderQueue() {
  stop(false);
  if (log_) std::fclose(log_);
  release_lock();
}

void RenderQueue::release_lock() {
  if (lock_fd_ >= 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
  }
}

void RenderQueue::stop(bool abandon) {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    abandoned_ = abandoned_ || abandon;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  // A crashed process holds no lock.
  if (abandon) release_lock();
}

void RenderQueue::emit(Event e) {
  if (abandoned_) return;
  e.ts_ms = now_ms();
  state_.apply(e);
  const auto line = to_json(e).dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0) {
    throw Error(ErrorCode::IoError, "cannot append to queue log");
  }
  ::fsync(::fileno(log_));
  publish();
  cv_.notify_all();
}

void RenderQueue::publish() {
  auto snap = std::make_shared<const std::map<std::string, RenderJob>>(state_.jobs());
  std::lock_guard lock(snapshot_mu_);
  snapshot_ = std::move(snap);
}

std::string RenderQueue::submit(const fs::path& bundle_manifest) {
  const auto bundle = genbackend::load_bundle(bundle_manifest);
  std::lock_guard lock(mu_);
  if (const auto* existing = state_.find_bundle(bundle.bundle_id);
      existing && existing->state != JobState::failed) {
    return existing->job_id;
  }
  char id[32];
  std::snprintf(id, sizeof(id), "job-%06llu", static_cast<unsigned long long>(state_.next_seq()));
  Event e;
  e.type = EventType::submitted;
  e.job_id = id;
  e.bundle_id = bundle.bundle_id;
  e.bundle_path = fs::absolute(bundle_manifest).string();
  e.masks = static_cast<int>(bundle.masks.size());
  emit(e);
  return id;
}

std::optional<RenderJob> RenderQueue::poll(const std::string& job_id) const {
  std::shared_ptr<const std::map<std::string, RenderJob>> snap;
  {
    std::lock_guard lock(snapshot_mu_);
    snap = snapshot_;
  }
  auto it = snap->find(job_id);
  if (it == snap->end()) return std::nullopt;
  return it->second;
}

std::vector<RenderJob> RenderQueue::jobs() const {
  std::shared_ptr<const std::map<std::string, RenderJob>> snap;
  {
    std::lock_guard lock(snapshot_mu_);
    snap = snapshot_;
  }
  std::vector<RenderJob> out;
  for (const auto& [id, job] : *snap) out.push_back(job);
  std::sort(out.begin(), out.end(), [](const RenderJob& a, const RenderJob& b) { return a.seq < b.seq; });
  return out;
}

RenderJob RenderQueue::wait(const std::string& job_id, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  const auto* job = state_.find(job_id);
  if (!job) throw Error(ErrorCode::NotFound, "no job '" + job_id + "'");
  cv_.wait_for(lock, timeout, [&] { return terminal(state_.find(job_id)->state) || stopping_; });
  return *state_.find(job_id);
}

bool RenderQueue::step() {
  if (options_.start_worker) throw Error(ErrorCode::InvalidArgument, "step() needs the worker disabled");
  std::unique_lock lock(mu_);
  return run_next(lock);
}

void RenderQueue::worker_loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    bool progressed = false;
    try {
      progressed = run_next(lock);
    } catch (const std::exception&) {
      // Log write failures leave the queue unusable; stop rather than spin.
      stopping_ = true;
      break;
    }
    if (progressed) continue;
    const auto pending = state_.unfinished();
    if (!pending.empty() && pending.front()->state == JobState::pending) {
      const auto wake = std::chrono::system_clock::time_point(std::chrono::milliseconds(pending.front()->not_before_ms));
      cv_.wait_until(lock, wake);
    } else {
      cv_.wait(lock, [&] { return stopping_ || !state_.unfinished().empty(); });
    }
  }
}

bool RenderQueue::run_next(std::unique_lock<std::mutex>& lock) {
  const auto unfinished = state_.unfinished();
  if (unfinished.empty() || stopping_) return false;
  const RenderJob job = *unfinished.front();  // strict FIFO
  const auto fail = [&](const std::string& msg) {
    Event f;
    f.type = EventType::failed;
    f.job_id = job.job_id;
    f.error = msg;
    emit(f);
  };

  if (job.state == JobState::pending) {
    if (now_ms() < job.not_before_ms) return false;
    std::string unreachable;
    std::string fatal;
    lock.unlock();
    try {
      backend_->probe();
    } catch (const Error& e) {
      (e.code() == ErrorCode::BackendUnreachable ? unreachable : fatal) = e.what();
    } catch (const std::exception& e) {
      fatal = e.what();
    }
    lock.lock();
    if (stopping_) return false;
    if (!unreachable.empty() && job.attempts + 1 < options_.max_attempts) {
      Event e;
      e.type = EventType::attempt_failed;
      e.job_id = job.job_id;
      e.error = unreachable;
      e.not_before_ms = now_ms() + backoff_delay(options_, job.attempts + 1).count();
      emit(e);
      return true;
    }
    Event s;
    s.type = EventType::started;
    s.job_id = job.job_id;
    emit(s);
    if (!unreachable.empty()) {
      fail("backend unreachable after " + std::to_string(options_.max_attempts) + " attempts: " + unreachable);
    } else if (!fatal.empty()) {
      fail(fatal);
    }
    return true;
  }

  // Running: do the first sub-job that is not done.
  std::size_t i = 0;
  while (i < job.subjobs.size() && job.subjobs[i] == SubJobState::done) ++i;
  if (i == job.subjobs.size()) {
    Event d;
    d.type = EventType::done;
    d.job_id = job.job_id;
    d.output = job.subjob_outputs.back();
    emit(d);
    return true;
  }

  Event st;
  st.type = EventType::subjob_started;
  st.job_id = job.job_id;
  st.index = static_cast<int>(i);
  emit(st);

  char sub[32];
  std::snprintf(sub, sizeof(sub), "sub_%02zu", i);
  const auto out_dir = options_.dir / "jobs" / job.job_id / sub;
  std::string error;
  genbackend::SequenceRef ref;
  lock.unlock();
  try {
    const auto bundle = genbackend::load_bundle(job.bundle_path);
    const fs::path input = i == 0 ? bundle.background.dir : fs::path(job.subjob_outputs[i - 1]);
    fs::remove_all(out_dir);
    ref = backend_->generate_mask(bundle, i, input, out_dir);
  } catch (const std::exception& e) {
    error = e.what();
  }
  lock.lock();
  if (abandoned_) return false;

  Event fin;
  fin.job_id = job.job_id;
  fin.index = static_cast<int>(i);
  if (error.empty()) {
    fin.type = EventType::subjob_done;
    fin.output = ref.dir.string();
    emit(fin);
    if (i + 1 == job.subjobs.size()) {
      Event d;
      d.type = EventType::done;
      d.job_id = job.job_id;
      d.output = fin.output;
      emit(d);
    }
  } else {
    fin.type = EventType::subjob_failed;
    fin.error = error;
    emit(fin);
    fail("mask " + std::to_string(i) + ": " + error);
  }
  return true;
}

}  // namespace streetstage::queue
