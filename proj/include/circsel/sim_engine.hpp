#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace circsel {

/// Simulated time as fixed-point milliseconds with microsecond resolution.
/// Integer ticks keep event ordering exact on every platform.
class SimTime {
 public:
  constexpr SimTime() = default;

  static constexpr SimTime from_us(std::int64_t us) noexcept { return SimTime(us); }
  static SimTime from_ms(double ms) { return SimTime(std::llround(ms * 1e3)); }
  static SimTime from_seconds(double s) { return SimTime(std::llround(s * 1e6)); }
  static constexpr SimTime max() noexcept { return SimTime(INT64_MAX); }

  constexpr std::int64_t us() const noexcept { return us_; }
  constexpr double ms() const noexcept { return static_cast<double>(us_) / 1e3; }
  constexpr double seconds() const noexcept { return static_cast<double>(us_) / 1e6; }

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime operator+(SimTime o) const noexcept { return SimTime(us_ + o.us_); }
  constexpr SimTime operator-(SimTime o) const noexcept { return SimTime(us_ - o.us_); }
  constexpr SimTime& operator+=(SimTime o) noexcept {
    us_ += o.us_;
    return *this;
  }

 private:
  constexpr explicit SimTime(std::int64_t us) : us_(us) {}
  std::int64_t us_ = 0;
};

inline SimTime seconds(double s) { return SimTime::from_seconds(s); }
inline SimTime millis(double ms) { return SimTime::from_ms(ms); }

enum class EventKind : std::uint8_t {
  timer_tick,
  cell_arrival,
  stream_start,
  probe,
  circuit_transition,
  other,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::timer_tick: return "timer_tick";
    case EventKind::cell_arrival: return "cell_arrival";
    case EventKind::stream_start: return "stream_start";
    case EventKind::probe: return "probe";
    case EventKind::circuit_transition: return "circuit_transition";
    case EventKind::other: return "other";
  }
  return "other";
}

/// What the trace sees of a dispatched event.
struct SimEvent {
  SimTime fire_time;
  std::uint64_t sequence_number = 0;
  EventKind kind = EventKind::other;
};

struct SimulationSummary {
  SimTime clock;
  std::uint64_t dispatched = 0;
  std::uint64_t pending = 0;
};

/// Single-threaded discrete-event scheduler. Events dispatch in
/// (fire_time, sequence_number) order; sequence numbers are assigned at
/// schedule time and never reused.
class Scheduler {
 public:
  using Action = std::function<void()>;
  using TraceHook = std::function<void(const SimEvent&)>;

  SimTime now() const noexcept { return now_; }
  std::size_t pending() const noexcept { return heap_.size(); }
  std::uint64_t dispatched() const noexcept { return dispatched_; }

  void set_trace(TraceHook hook) { trace_ = std::move(hook); }

  /// Throws std::logic_error when `at` lies in the past.
  std::uint64_t schedule(SimTime at, EventKind kind, Action action) {
    if (at < now_) {
      throw std::logic_error("event scheduled in the past: t=" + std::to_string(at.us()) +
                             "us, now=" + std::to_string(now_.us()) + "us");
    }
    const std::uint64_t seq = next_seq_++;
    heap_.push_back(Entry{SimEvent{at, seq, kind}, std::move(action)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
    return seq;
  }

  std::uint64_t schedule_after(SimTime delay, EventKind kind, Action action) {
    return schedule(now_ + delay, kind, std::move(action));
  }

  /// Dispatches every event with fire_time <= end_time, then sets the clock
  /// to end_time. Actions may schedule further events.
  SimulationSummary run_until(SimTime end_time) {
    if (end_time < now_) throw std::logic_error("run_until into the past");
    std::uint64_t count = 0;
    while (!heap_.empty() && heap_.front().event.fire_time <= end_time) {
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      Entry entry = std::move(heap_.back());
      heap_.pop_back();
      now_ = entry.event.fire_time;
      if (trace_) trace_(entry.event);
      ++count;
      ++dispatched_;
      entry.action();
    }
    now_ = end_time;
    return SimulationSummary{now_, count, heap_.size()};
  }

 private:
  struct Entry {
    SimEvent event;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const noexcept {
      if (a.event.fire_time != b.event.fire_time) return a.event.fire_time > b.event.fire_time;
      return a.event.sequence_number > b.event.sequence_number;
    }
  };

  SimTime now_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::vector<Entry> heap_;
  TraceHook trace_;
};

/// Order-sensitive digest of a dispatched-event trace.
class TraceDigest {
 public:
  void add(const SimEvent& e) noexcept {
    mix(static_cast<std::uint64_t>(e.fire_time.us()));
    mix(e.sequence_number);
    mix(static_cast<std::uint64_t>(e.kind));
    ++events_;
  }
  std::uint64_t value() const noexcept { return h_; }
  std::uint64_t events() const noexcept { return events_; }

 private:
  void mix(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xffU;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
  std::uint64_t events_ = 0;
};

}  // namespace circsel
