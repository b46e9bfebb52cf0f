#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmuidx/archive.hpp"
#include "pmuidx/classifier.hpp"
#include "pmuidx/correlation.hpp"
#include "pmuidx/errors.hpp"
#include "pmuidx/query.hpp"

namespace pmuidx {

// HTTP 404 / 409 counterparts.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public StateError {
 public:
  using StateError::StateError;
};

// One streamed correlation snapshot. Cells are the upper triangle over
// positions of `order` (PMU ids by electrical distance); nullopt is an
// undefined cell.
struct MatrixFrameMsg {
  std::uint64_t seq = 0;
  std::optional<std::uint64_t> session;  // replay session, nullopt when live
  Timestamp ts;
  std::size_t window_length = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> order;
  std::vector<std::string> labels;
  std::vector<std::optional<double>> cells;
  std::vector<EventFlag> flags;  // active after this frame

  friend bool operator==(const MatrixFrameMsg&, const MatrixFrameMsg&) = default;
};

MatrixFrameMsg make_matrix_msg(const CorrelationTriangle& triangle,
                               std::span<const std::size_t> order, std::vector<EventFlag> flags,
                               std::optional<std::uint64_t> session, std::uint64_t seq);

// One JSON object, no trailing newline.
std::string to_json(const MatrixFrameMsg& msg);
// Throws ParseError on malformed input.
MatrixFrameMsg parse_matrix_msg(std::string_view json);

// Fans engine output out to stream subscribers. Each subscriber gets at
// most one message per `min_interval` and holds at most `queue_capacity`
// undelivered messages; when full the oldest is dropped, so a slow reader
// never blocks the publisher. A new subscriber first receives the latest
// snapshot of its window.
class MatrixHub {
 public:
  struct Options {
    std::chrono::milliseconds min_interval{100};
    std::size_t queue_capacity = 32;
  };

  class Subscription {
   public:
    // Waits up to `timeout`; nullopt on timeout or once the hub is closed.
    std::optional<MatrixFrameMsg> next(std::chrono::milliseconds timeout);
    std::size_t window_length() const { return window_; }
    std::uint64_t dropped() const;
    bool closed() const;

   private:
    friend class MatrixHub;
    explicit Subscription(std::size_t window) : window_(window) {}

    std::size_t window_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<MatrixFrameMsg> queue_;
    std::chrono::steady_clock::time_point last_enqueue_{};
    bool any_enqueued_ = false;
    std::uint64_t dropped_ = 0;
    bool closed_ = false;
  };

  MatrixHub(std::vector<std::size_t> order, Options opts);

  // Throws ValidationError for a window the engine does not compute.
  std::shared_ptr<Subscription> subscribe(std::size_t window);
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  void publish(std::span<const CorrelationTriangle> triangles, const std::vector<EventFlag>& flags,
               std::optional<std::uint64_t> session);
  void set_windows(std::vector<std::size_t> windows);
  void close();

  std::size_t subscriber_count() const;
  std::uint64_t published() const;

 private:
  struct Latest {
    CorrelationTriangle triangle;
    std::vector<EventFlag> flags;
    std::optional<std::uint64_t> session;
    std::uint64_t seq = 0;
  };
  void enqueue(Subscription& s, MatrixFrameMsg msg, std::chrono::steady_clock::time_point now);

  std::vector<std::size_t> order_;
  Options opts_;
  mutable std::mutex mu_;
  std::vector<std::size_t> windows_;
  std::vector<std::optional<Latest>> latest_;  // by position in windows_
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

enum class ReplayState { Running, Paused, Done };
std::string_view replay_state_name(ReplayState s);

struct ReplayStatus {
  std::uint64_t id = 0;
  Timestamp from;
  Timestamp to;
  double speed = 1.0;
  ReplayState state = ReplayState::Running;
  std::uint64_t total_frames = 0;
  std::uint64_t frames_sent = 0;
  std::optional<Timestamp> cursor;  // ts of the newest replayed frame
};

enum class ReplayAction { Pause, Resume, Stop };

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  MatrixHub::Options stream{};
  std::size_t default_query_limit = 100;
  std::size_t max_query_limit = 10'000;
  std::size_t event_log_capacity = 1'000;
};

struct QueryResponse {
  std::vector<ArchivedRow> rows;  // truncated to the limit
  QueryReport report;              // report.returned is the full count
};

// Owns an archive and one engine. All engine and archive mutation happens
// on a single ingest thread fed by submit_live() and the replay commands;
// request handlers only read the archive under a shared lock and talk to
// the engine through the hub and the command state.
//
// Endpoints (JSON bodies):
//   GET  /health                     {status, rows_indexed, pmu_count}
//   GET  /config                     engine parameters and electrical order
//   POST /query {q, limit}           {rows, total, report}
//   GET  /matrix?window=N            newline-delimited MatrixFrameMsg stream
//   GET  /events                     recent event flags
//   POST /replay {from, to, speed}   session status
//   GET  /replay/{id}
//   POST /replay/{id}/pause|resume|stop
class Service {
 public:
  explicit Service(Archive archive, ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  // Blocks until stop() is called from another thread.
  void wait();
  void stop();
  int port() const;

  // Frames are archived and, unless a replay is running, pushed through the
  // engine. Validation happens on the ingest thread; rejected frames are
  // counted in rejected_frames().
  void submit_live(std::vector<FrameRecord> frames);
  // Blocks until every submitted live frame has been handled.
  void wait_idle();

  ReplayStatus start_replay(Timestamp from, Timestamp to, double speed);
  ReplayStatus control_replay(std::uint64_t id, ReplayAction action);
  ReplayStatus replay_status(std::uint64_t id) const;
  // Blocks until the session is done or `timeout` passes.
  bool wait_replay_done(std::uint64_t id, std::chrono::milliseconds timeout) const;

  std::uint64_t rows_indexed() const;
  std::size_t pmu_count() const;
  std::uint64_t rejected_frames() const;
  QueryResponse query(std::string_view text, std::optional<std::size_t> limit) const;
  std::vector<EventFlag> events() const;
  MatrixHub& hub();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pmuidx
