#include "pmuidx/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <map>
#include <shared_mutex>
#include <thread>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "pmuidx/ingest.hpp"

namespace pmuidx {

using json = nlohmann::json;

namespace {

json flag_json(const EventFlag& f) {
  return json{{"kind", std::string(event_kind_name(f.kind))},
              {"pmu", f.pmu},
              {"window_length", f.window_length},
              {"start_ts", format_timestamp(f.start_ts)},
              {"last_ts", format_timestamp(f.last_ts)},
              {"detected_ts", format_timestamp(f.detected_ts)},
              {"active", f.active}};
}

EventKind parse_event_kind(const std::string& s) {
  for (const EventKind k : {EventKind::DataDrop, EventKind::Misread, EventKind::PowerEvent}) {
    if (s == event_kind_name(k)) return k;
  }
  throw ParseError("unknown event kind '" + s + "'", 0);
}

EventFlag flag_from_json(const json& j) {
  EventFlag f;
  f.kind = parse_event_kind(j.at("kind").get<std::string>());
  f.pmu = j.at("pmu").get<std::size_t>();
  f.window_length = j.at("window_length").get<std::size_t>();
  f.start_ts = parse_timestamp(j.at("start_ts").get<std::string>());
  f.last_ts = parse_timestamp(j.at("last_ts").get<std::string>());
  f.detected_ts = parse_timestamp(j.at("detected_ts").get<std::string>());
  f.active = j.at("active").get<bool>();
  return f;
}

json row_json(const ArchivedRow& r) {
  json v = json::array();
  json phi = json::array();
  for (const auto& s : r.frame.samples) {
    v.push_back(s.v);
    phi.push_back(s.phi);
  }
  return json{{"row", r.row}, {"ts", format_timestamp(r.frame.ts)}, {"v", v}, {"phi", phi}};
}

json report_json(const QueryReport& r) {
  return json{{"predicate", r.predicate},
              {"path", std::string(query_path_name(r.path))},
              {"candidates", r.candidates},
              {"returned", r.returned},
              {"wall_ms", r.wall_ms},
              {"bytes_read", r.bytes_read},
              {"file_opens", r.file_opens},
              {"bins_touched", r.bins_touched},
              {"candidacy_checked", r.candidacy_checked}};
}

json status_json(const ReplayStatus& s) {
  json j{{"id", s.id},
         {"from", format_timestamp(s.from)},
         {"to", format_timestamp(s.to)},
         {"speed", s.speed},
         {"state", std::string(replay_state_name(s.state))},
         {"total_frames", s.total_frames},
         {"frames_sent", s.frames_sent},
         {"cursor", nullptr}};
  if (s.cursor) j["cursor"] = format_timestamp(*s.cursor);
  return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg,
                std::optional<std::size_t> offset = std::nullopt) {
  json body{{"error", msg}};
  if (offset) body["offset"] = *offset;
  send_json(res, status, body);
}

// Runs a handler and maps library errors onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    send_error(res, 400, e.what(), e.offset());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("bad request body: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

MatrixFrameMsg make_matrix_msg(const CorrelationTriangle& triangle,
                               std::span<const std::size_t> order, std::vector<EventFlag> flags,
                               std::optional<std::uint64_t> session, std::uint64_t seq) {
  const OrderedTriangle o = snapshot_ordered(triangle, order);
  MatrixFrameMsg m;
  m.seq = seq;
  m.session = session;
  m.ts = triangle.ts;
  m.window_length = triangle.window_length;
  m.samples = triangle.samples;
  m.order = o.order;
  for (const std::size_t id : o.order) m.labels.push_back("PMU" + std::to_string(id));
  m.cells = o.cells;
  m.flags = std::move(flags);
  return m;
}

std::string to_json(const MatrixFrameMsg& m) {
  json cells = json::array();
  for (const auto& c : m.cells) {
    if (c) {
      cells.push_back(*c);
    } else {
      cells.push_back(nullptr);
    }
  }
  json flags = json::array();
  for (const auto& f : m.flags) flags.push_back(flag_json(f));
  json j{{"type", "matrix"},
         {"seq", m.seq},
         {"source", m.session ? "replay" : "live"},
         {"session", nullptr},
         {"ts", format_timestamp(m.ts)},
         {"window_length", m.window_length},
         {"samples", m.samples},
         {"order", m.order},
         {"labels", m.labels},
         {"cells", cells},
         {"flags", flags}};
  if (m.session) j["session"] = *m.session;
  return j.dump();
}

MatrixFrameMsg parse_matrix_msg(std::string_view text) {
  try {
    const json j = json::parse(text);
    MatrixFrameMsg m;
    m.seq = j.at("seq").get<std::uint64_t>();
    if (!j.at("session").is_null()) m.session = j.at("session").get<std::uint64_t>();
    m.ts = parse_timestamp(j.at("ts").get<std::string>());
    m.window_length = j.at("window_length").get<std::size_t>();
    m.samples = j.at("samples").get<std::size_t>();
    m.order = j.at("order").get<std::vector<std::size_t>>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      m.cells.push_back(c.is_null() ? std::nullopt : std::optional<double>(c.get<double>()));
    }
    for (const auto& f : j.at("flags")) m.flags.push_back(flag_from_json(f));
    const std::size_t p = m.order.size();
    if (m.cells.size() != p * (p - (p > 0 ? 1 : 0)) / 2) {
      throw ParseError("cell count does not match the PMU count", 0);
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed matrix message: ") + e.what(), 0);
  }
}

// ---------------------------------------------------------------------------

std::optional<MatrixFrameMsg> MatrixHub::Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  MatrixFrameMsg m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::uint64_t MatrixHub::Subscription::dropped() const {
  std::lock_guard lk(mu_);
  return dropped_;
}

bool MatrixHub::Subscription::closed() const {
  std::lock_guard lk(mu_);
  return closed_;
}

MatrixHub::MatrixHub(std::vector<std::size_t> order, Options opts)
    : order_(std::move(order)), opts_(opts) {}

void MatrixHub::set_windows(std::vector<std::size_t> windows) {
  std::lock_guard lk(mu_);
  windows_ = std::move(windows);
  latest_.assign(windows_.size(), std::nullopt);
}

std::shared_ptr<MatrixHub::Subscription> MatrixHub::subscribe(std::size_t window) {
  std::lock_guard lk(mu_);
  const auto it = std::find(windows_.begin(), windows_.end(), window);
  if (it == windows_.end()) {
    throw ValidationError("window " + std::to_string(window) + " is not computed by the engine");
  }
  auto sub = std::shared_ptr<Subscription>(new Subscription(window));
  if (closed_) {
    sub->closed_ = true;
    return sub;
  }
  const auto& latest = latest_[static_cast<std::size_t>(it - windows_.begin())];
  if (latest) {
    enqueue(*sub,
            make_matrix_msg(latest->triangle, order_, latest->flags, latest->session, latest->seq),
            std::chrono::steady_clock::now());
  }
  subs_.push_back(sub);
  return sub;
}

void MatrixHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lk(mu_);
  subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
}

void MatrixHub::enqueue(Subscription& s, MatrixFrameMsg msg,
                        std::chrono::steady_clock::time_point now) {
  {
    std::lock_guard lk(s.mu_);
    if (s.queue_.size() >= opts_.queue_capacity) {
      s.queue_.pop_front();
      ++s.dropped_;
    }
    s.queue_.push_back(std::move(msg));
    s.last_enqueue_ = now;
    s.any_enqueued_ = true;
  }
  s.cv_.notify_one();
}

void MatrixHub::publish(std::span<const CorrelationTriangle> triangles,
                        const std::vector<EventFlag>& flags, std::optional<std::uint64_t> session) {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lk(mu_);
  if (closed_) return;
  for (const auto& t : triangles) {
    const auto it = std::find(windows_.begin(), windows_.end(), t.window_length);
    if (it == windows_.end()) continue;
    const std::uint64_t seq = ++seq_;
    latest_[static_cast<std::size_t>(it - windows_.begin())] = Latest{t, flags, session, seq};
    for (const auto& sub : subs_) {
      if (sub->window_ != t.window_length) continue;
      bool due = false;
      {
        std::lock_guard sl(sub->mu_);
        due = !sub->any_enqueued_ || now - sub->last_enqueue_ >= opts_.min_interval;
      }
      if (due) enqueue(*sub, make_matrix_msg(t, order_, flags, session, seq), now);
    }
  }
}

void MatrixHub::close() {
  std::lock_guard lk(mu_);
  closed_ = true;
  for (const auto& sub : subs_) {
    {
      std::lock_guard sl(sub->mu_);
      sub->closed_ = true;
    }
    sub->cv_.notify_all();
  }
}

std::size_t MatrixHub::subscriber_count() const {
  std::lock_guard lk(mu_);
  return subs_.size();
}

std::uint64_t MatrixHub::published() const {
  std::lock_guard lk(mu_);
  return seq_;
}

std::string_view replay_state_name(ReplayState s) {
  switch (s) {
    case ReplayState::Running: return "running";
    case ReplayState::Paused: return "paused";
    case ReplayState::Done: return "done";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

struct Service::Impl {
  Impl(Archive a, ServiceOptions o)
      : opts(std::move(o)),
        archive(std::move(a)),
        config(archive.config()),
        order(config.electrical_order()),
        hub(order, opts.stream),
        engine(config),
        classifier(config) {
    hub.set_windows(config.window_lengths);
  }

  struct Replay {
    std::uint64_t id = 0;
    std::uint64_t first_row = 0;
    std::vector<FrameRecord> buffer;
    std::size_t buffer_pos = 0;
    std::uint64_t buffer_first = 0;  // frame number of buffer[0] within the session
    Pacer pacer{1.0};
    bool reset_engine = true;
    bool rebase = false;
  };

  ServiceOptions opts;
  mutable std::shared_mutex archive_mu;
  Archive archive;
  EngineConfig config;
  std::vector<std::size_t> order;
  MatrixHub hub;

  // Ingest thread only.
  CorrelationEngine engine;
  EventClassifier classifier;
  std::size_t known_flags = 0;

  mutable std::mutex mu;  // guards everything below
  std::condition_variable cv;
  mutable std::condition_variable done_cv;
  std::deque<std::vector<FrameRecord>> live_q;
  bool busy = false;
  bool stopping = false;
  std::optional<Replay> replay;
  std::map<std::uint64_t, ReplayStatus> sessions;
  std::uint64_t next_session = 1;

  mutable std::mutex ev_mu;
  std::deque<EventFlag> events;
  std::atomic<std::uint64_t> rejected{0};

  std::thread ingest;
  httplib::Server server;
  std::thread http;
  int bound_port = -1;
  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;

  void reset_engine() {
    engine.reset();
    classifier.reset();
    known_flags = 0;
  }

  void process(const FrameRecord& f, std::optional<std::uint64_t> session) {
    const auto triangles = engine.push(f);
    const auto active = classifier.observe(f, triangles);
    const auto& history = classifier.history();
    if (history.size() > known_flags) {
      std::lock_guard lk(ev_mu);
      for (std::size_t i = known_flags; i < history.size(); ++i) {
        events.push_back(history[i]);
        if (events.size() > opts.event_log_capacity) events.pop_front();
      }
      known_flags = history.size();
    }
    hub.publish(triangles, active, session);
  }

  void archive_live(const std::vector<FrameRecord>& batch, bool feed) {
    for (const auto& f : batch) {
      try {
        std::unique_lock lk(archive_mu);
        archive.append_frames(std::span<const FrameRecord>(&f, 1));
      } catch (const Error&) {
        ++rejected;
        continue;
      }
      if (feed) process(f, std::nullopt);
    }
  }

  void run() {
    std::unique_lock lk(mu);
    while (true) {
      cv.wait(lk, [&] {
        if (stopping || !live_q.empty()) return true;
        if (!replay) return false;
        return sessions[replay->id].state != ReplayState::Paused;
      });
      if (stopping) break;

      if (replay) {
        ReplayStatus& st = sessions[replay->id];
        if (st.state == ReplayState::Done) {
          // Live ingest resumes on a fresh engine.
          replay.reset();
          reset_engine();
          done_cv.notify_all();
          continue;
        }
        // Live frames keep being archived while a replay holds the engine.
        std::deque<std::vector<FrameRecord>> pending;
        pending.swap(live_q);
        if (!pending.empty()) busy = true;
        if (st.state == ReplayState::Paused) {
          lk.unlock();
          for (const auto& b : pending) archive_live(b, false);
          lk.lock();
          busy = false;
          done_cv.notify_all();
          continue;
        }
        Replay& r = *replay;
        const std::uint64_t sent = st.frames_sent;
        const std::uint64_t id = r.id;
        const bool rebase = std::exchange(r.rebase, false);
        lk.unlock();
        for (const auto& b : pending) archive_live(b, false);
        if (r.reset_engine) {
          reset_engine();
          r.reset_engine = false;
          r.pacer.rebase();
        }
        if (rebase) r.pacer.rebase();
        if (r.buffer_pos >= r.buffer.size()) {
          const std::uint64_t n = std::min<std::uint64_t>(3600, st.total_frames - sent);
          std::shared_lock al(archive_mu);
          auto rows = archive.read_range(r.first_row + sent, n);
          r.buffer.clear();
          for (auto& row : rows) r.buffer.push_back(std::move(row.frame));
          r.buffer_pos = 0;
        }
        const FrameRecord& f = r.buffer[r.buffer_pos++];
        r.pacer.wait_next();
        process(f, id);
        lk.lock();
        busy = false;
        ++st.frames_sent;
        st.cursor = f.ts;
        if (st.frames_sent >= st.total_frames && st.state != ReplayState::Done) {
          st.state = ReplayState::Done;
        }
        done_cv.notify_all();
        continue;
      }

      auto batch = std::move(live_q.front());
      live_q.pop_front();
      busy = true;
      lk.unlock();
      archive_live(batch, true);
      lk.lock();
      busy = false;
      done_cv.notify_all();
    }
  }

  QueryResponse query_impl(std::string_view text, std::optional<std::size_t> limit) const;
  ReplayStatus start_replay_impl(Timestamp from, Timestamp to, double speed);
  ReplayStatus control_impl(std::uint64_t id, ReplayAction action);
  ReplayStatus status_impl(std::uint64_t id) const;
  void routes();
};

void Service::Impl::routes() {
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      std::shared_lock lk(archive_mu);
      send_json(res, 200,
                json{{"status", "ok"},
                     {"rows_indexed", archive.rows()},
                     {"pmu_count", config.pmu_count}});
    });
  });

  server.Get("/config", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json pmus = json::array();
      for (const std::size_t id : order) {
        pmus.push_back(json{{"id", id},
                            {"label", "PMU" + std::to_string(id)},
                            {"distance", config.distance(id)}});
      }
      send_json(res, 200,
                json{{"pmu_count", config.pmu_count},
                     {"sample_hz", config.sample_hz},
                     {"window_lengths", config.window_lengths},
                     {"corr_threshold", config.corr_threshold},
                     {"electrical_order", pmus}});
    });
  });

  server.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      if (!body.contains("q") || !body["q"].is_string()) {
        throw ValidationError("request needs a string field 'q'");
      }
      std::optional<std::size_t> limit;
      if (body.contains("limit") && !body["limit"].is_null()) {
        const auto l = body["limit"].get<std::int64_t>();
        if (l < 0) throw ValidationError("limit must not be negative");
        limit = static_cast<std::size_t>(l);
      }
      const QueryResponse r = query_impl(body["q"].get<std::string>(), limit);
      json rows = json::array();
      for (const auto& row : r.rows) rows.push_back(row_json(row));
      send_json(res, 200,
                json{{"rows", rows}, {"total", r.report.returned}, {"report", report_json(r.report)}});
    });
  });

  server.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json list = json::array();
      std::lock_guard lk(ev_mu);
      for (const auto& f : events) list.push_back(flag_json(f));
      send_json(res, 200, json{{"events", list}});
    });
  });

  server.Get("/matrix", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_param("window")) throw ValidationError("missing query parameter 'window'");
      const std::string w = req.get_param_value("window");
      std::size_t window = 0;
      const auto rc = std::from_chars(w.data(), w.data() + w.size(), window);
      if (rc.ec != std::errc{} || rc.ptr != w.data() + w.size()) {
        throw ValidationError("window must be a positive integer");
      }
      auto sub = hub.subscribe(window);
      res.set_chunked_content_provider(
          "application/x-ndjson",
          [sub](std::size_t, httplib::DataSink& sink) {
            while (true) {
              auto m = sub->next(std::chrono::milliseconds(200));
              if (m) {
                const std::string line = to_json(*m) + "\n";
                return sink.write(line.data(), line.size());
              }
              if (sub->closed()) {
                sink.done();
                return true;
              }
              if (!sink.is_writable()) return false;
            }
          },
          [this, sub](bool) { hub.unsubscribe(sub); });
    });
  });

  server.Post("/replay", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      const Timestamp from = parse_timestamp(body.at("from").get<std::string>());
      const Timestamp to = parse_timestamp(body.at("to").get<std::string>());
      const double speed = body.contains("speed") ? body["speed"].get<double>() : 1.0;
      send_json(res, 201, status_json(start_replay_impl(from, to, speed)));
    });
  });

  server.Get(R"(/replay/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      send_json(res, 200, status_json(status_impl(std::stoull(req.matches[1].str()))));
    });
  });

  server.Post(R"(/replay/(\d+)/(pause|resume|stop))",
              [this](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const std::uint64_t id = std::stoull(req.matches[1].str());
                  const std::string a = req.matches[2].str();
                  const ReplayAction action = a == "pause"    ? ReplayAction::Pause
                                              : a == "resume" ? ReplayAction::Resume
                                                              : ReplayAction::Stop;
                  send_json(res, 200, status_json(control_impl(id, action)));
                });
              });
}

// ---------------------------------------------------------------------------
// Shared by the public API and the handlers.

namespace {

void require_speed(double speed) {
  if (!(speed > 0.0)) throw ValidationError("replay speed must be positive");
}

}  // namespace

QueryResponse Service::Impl::query_impl(std::string_view text,
                                        std::optional<std::size_t> limit) const {
  const std::size_t n = std::min(limit.value_or(opts.default_query_limit), opts.max_query_limit);
  std::shared_lock lk(archive_mu);
  const Predicate p = parse_query(text, &archive.index().layout());
  QueryResult r = execute_bitmap(archive, p, QueryOptions{n});
  return QueryResponse{std::move(r.rows), std::move(r.report)};
}

ReplayStatus Service::Impl::start_replay_impl(Timestamp from, Timestamp to, double speed) {
  require_speed(speed);
  if (from > to) throw ValidationError("replay range starts after it ends");
  std::uint64_t first = 0;
  std::uint64_t last = 0;
  {
    std::shared_lock al(archive_mu);
    if (archive.rows() == 0 || from < *archive.first_ts() || to > *archive.last_ts()) {
      throw NotFoundError("replay range " + format_timestamp(from) + " .. " + format_timestamp(to) +
                          " is outside the archive");
    }
    first = archive.lower_bound(from);
    last = archive.lower_bound(Timestamp{to.ms + 1});
  }
  if (last <= first) throw NotFoundError("no archived frames in the replay range");

  std::lock_guard lk(mu);
  if (replay) {
    throw ConflictError("replay session " + std::to_string(replay->id) + " is still active");
  }
  ReplayStatus st;
  st.id = next_session++;
  st.from = from;
  st.to = to;
  st.speed = speed;
  st.state = ReplayState::Running;
  st.total_frames = last - first;
  sessions[st.id] = st;
  Replay r;
  r.id = st.id;
  r.first_row = first;
  r.pacer = Pacer(speed, config.sample_hz);
  replay = std::move(r);
  cv.notify_all();
  return st;
}

ReplayStatus Service::Impl::control_impl(std::uint64_t id, ReplayAction action) {
  std::lock_guard lk(mu);
  const auto it = sessions.find(id);
  if (it == sessions.end()) throw NotFoundError("unknown replay session " + std::to_string(id));
  ReplayStatus& st = it->second;
  switch (action) {
    case ReplayAction::Pause:
      if (st.state != ReplayState::Running) {
        throw ConflictError("session " + std::to_string(id) + " is " +
                            std::string(replay_state_name(st.state)));
      }
      st.state = ReplayState::Paused;
      break;
    case ReplayAction::Resume:
      if (st.state != ReplayState::Paused) {
        throw ConflictError("session " + std::to_string(id) + " is " +
                            std::string(replay_state_name(st.state)));
      }
      st.state = ReplayState::Running;
      if (replay && replay->id == id) replay->rebase = true;
      break;
    case ReplayAction::Stop:
      if (st.state == ReplayState::Done) {
        throw ConflictError("session " + std::to_string(id) + " is already done");
      }
      st.state = ReplayState::Done;
      break;
  }
  cv.notify_all();
  return st;
}

ReplayStatus Service::Impl::status_impl(std::uint64_t id) const {
  std::lock_guard lk(mu);
  const auto it = sessions.find(id);
  if (it == sessions.end()) throw NotFoundError("unknown replay session " + std::to_string(id));
  return it->second;
}

Service::Service(Archive archive, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(std::move(archive), std::move(opts))) {
  impl_->routes();
  impl_->ingest = std::thread([this] { impl_->run(); });
}

Service::~Service() { stop(); }

int Service::start() {
  Impl& s = *impl_;
  if (s.bound_port >= 0) throw StateError("service already started");
  const int port = s.opts.port == 0 ? s.server.bind_to_any_port(s.opts.host)
                                    : (s.server.bind_to_port(s.opts.host, s.opts.port)
                                           ? s.opts.port
                                           : -1);
  if (port < 0) {
    throw IoError("cannot bind " + s.opts.host + ":" + std::to_string(s.opts.port));
  }
  s.bound_port = port;
  s.http = std::thread([&s] { s.server.listen_after_bind(); });
  return port;
}

void Service::wait() {
  std::unique_lock lk(impl_->stop_mu);
  impl_->stop_cv.wait(lk, [&] { return impl_->stopped; });
}

void Service::stop() {
  Impl& s = *impl_;
  {
    std::lock_guard lk(s.stop_mu);
    if (s.stopped) return;
    s.stopped = true;
  }
  s.hub.close();
  s.server.stop();
  if (s.http.joinable()) s.http.join();
  {
    std::lock_guard lk(s.mu);
    s.stopping = true;
  }
  s.cv.notify_all();
  if (s.ingest.joinable()) s.ingest.join();
  {
    std::unique_lock lk(s.archive_mu);
    try {
      s.archive.sync();
    } catch (const Error&) {
      // Nothing to report to at shutdown; the segments themselves are durable.
    }
  }
  s.stop_cv.notify_all();
}

int Service::port() const { return impl_->bound_port; }

void Service::submit_live(std::vector<FrameRecord> frames) {
  if (frames.empty()) return;
  {
    std::lock_guard lk(impl_->mu);
    if (impl_->stopping) throw StateError("service is stopping");
    impl_->live_q.push_back(std::move(frames));
  }
  impl_->cv.notify_all();
}

void Service::wait_idle() {
  std::unique_lock lk(impl_->mu);
  impl_->done_cv.wait(lk, [&] { return impl_->stopping || (impl_->live_q.empty() && !impl_->busy); });
}

ReplayStatus Service::start_replay(Timestamp from, Timestamp to, double speed) {
  return impl_->start_replay_impl(from, to, speed);
}

ReplayStatus Service::control_replay(std::uint64_t id, ReplayAction action) {
  return impl_->control_impl(id, action);
}

ReplayStatus Service::replay_status(std::uint64_t id) const { return impl_->status_impl(id); }

bool Service::wait_replay_done(std::uint64_t id, std::chrono::milliseconds timeout) const {
  std::unique_lock lk(impl_->mu);
  const auto it = impl_->sessions.find(id);
  if (it == impl_->sessions.end()) throw NotFoundError("unknown replay session " + std::to_string(id));
  return impl_->done_cv.wait_for(lk, timeout, [&] {
    return it->second.state == ReplayState::Done && (!impl_->replay || impl_->replay->id != id);
  });
}

std::uint64_t Service::rows_indexed() const {
  std::shared_lock lk(impl_->archive_mu);
  return impl_->archive.rows();
}

std::size_t Service::pmu_count() const { return impl_->config.pmu_count; }

std::uint64_t Service::rejected_frames() const { return impl_->rejected.load(); }

QueryResponse Service::query(std::string_view text, std::optional<std::size_t> limit) const {
  return impl_->query_impl(text, limit);
}

std::vector<EventFlag> Service::events() const {
  std::lock_guard lk(impl_->ev_mu);
  return {impl_->events.begin(), impl_->events.end()};
}

MatrixHub& Service::hub() { return impl_->hub; }

}  // namespace pmuidx
