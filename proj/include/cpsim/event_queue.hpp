#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpsim/time.hpp"

namespace cpsim {

using EventId = std::uint64_t;

struct PastEventError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A handler threw: carries the offending event's metadata.
struct HandlerFault : std::runtime_error {
  HandlerFault(const std::string& what, SimTime at, EventId id, std::string kind)
      : std::runtime_error(what + " (event id=" + std::to_string(id) + " kind=" + kind +
                           " at t=" + std::to_string(at.ticks()) + " ns)"),
        fire_at(at), event_id(id), event_kind(std::move(kind)) {}
  SimTime fire_at;
  EventId event_id;
  std::string event_kind;
};

struct SimStats {
  std::uint64_t events_scheduled = 0;
  std::uint64_t events_fired = 0;
  std::uint64_t events_cancelled = 0;
  std::uint64_t events_pending = 0;
  std::size_t max_queue_depth = 0;
};

/// Deterministic discrete-event queue.
///
/// Events pop in (fire_at, seq) order, seq being the insertion counter, so
/// simultaneous events fire in the order they were scheduled. The clock never
/// moves backwards and run_until treats its bound as inclusive.
class EventQueue {
 public:
  using Handler = std::function<void(SimTime)>;
  /// Optional per-fired-event sink: fire_at_ns, seq, kind, summary.
  using TraceSink = std::function<void(SimTime, std::uint64_t, const std::string&, const std::string&)>;

  SimTime now() const { return clock_; }
  std::size_t pending() const { return alive_; }
  const SimStats& stats() const { return stats_; }
  void set_trace_sink(TraceSink sink) { trace_ = std::move(sink); }

  EventId schedule(SimTime fire_at, std::string kind, Handler fn, std::string summary = {}) {
    if (fire_at < clock_)
      throw PastEventError("schedule at " + std::to_string(fire_at.ticks()) +
                           " ns before clock " + std::to_string(clock_.ticks()) + " ns");
    EventId id = next_id_++;
    heap_.push(HeapEntry{fire_at, next_seq_++, id});
    live_.emplace(id, Record{std::move(fn), std::move(kind), std::move(summary)});
    ++alive_;
    ++stats_.events_scheduled;
    if (alive_ > stats_.max_queue_depth) stats_.max_queue_depth = alive_;
    return id;
  }

  /// True iff the event was pending and is now removed.
  bool cancel(EventId id) {
    auto it = live_.find(id);
    if (it == live_.end()) return false;
    live_.erase(it);
    --alive_;
    ++stats_.events_cancelled;
    return true;
  }

  /// Fires all events with fire_at <= t_end in order, then sets clock = t_end.
  SimStats run_until(SimTime t_end) {
    if (t_end < clock_)
      throw PastEventError("run_until bound before clock");
    while (!heap_.empty()) {
      const HeapEntry& top = heap_.top();
      if (top.fire_at > t_end) break;
      auto it = live_.find(top.id);
      if (it == live_.end()) {  // lazily dropped cancellation
        heap_.pop();
        continue;
      }
      clock_ = top.fire_at;
      Record rec = std::move(it->second);
      EventId id = top.id;
      std::uint64_t seq = top.seq;
      live_.erase(it);
      --alive_;
      heap_.pop();
      ++stats_.events_fired;
      if (trace_) trace_(clock_, seq, rec.kind, rec.summary);
      try {
        rec.fn(clock_);
      } catch (const std::exception& e) {
        throw HandlerFault(e.what(), clock_, id, rec.kind);
      }
    }
    clock_ = t_end;
    stats_.events_pending = alive_;
    return stats_;
  }

  /// Fire time of the earliest pending event, or SimTime::max() when idle.
  SimTime next_event_time() const {
    prune();
    return heap_.empty() ? SimTime::max() : heap_.top().fire_at;
  }

 private:
  struct HeapEntry {
    SimTime fire_at;
    std::uint64_t seq;
    EventId id;
    bool operator>(const HeapEntry& o) const {
      if (fire_at != o.fire_at) return fire_at > o.fire_at;
      return seq > o.seq;
    }
  };
  struct Record {
    Handler fn;
    std::string kind;
    std::string summary;
  };

  void prune() const {
    while (!heap_.empty() && !live_.count(heap_.top().id)) heap_.pop();
  }

  mutable std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap_;
  std::unordered_map<EventId, Record> live_;
  SimTime clock_;
  EventId next_id_ = 0;
  std::uint64_t next_seq_ = 0;
  std::size_t alive_ = 0;
  SimStats stats_;
  TraceSink trace_;
};

}  // namespace cpsim
