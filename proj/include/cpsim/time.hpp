#pragma once

#include <cstdint>
#include <cmath>
#include <compare>
#include <limits>
#include <stdexcept>
#include <string>

namespace cpsim {

struct TimeOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Simulation time as integer nanoseconds since run start.
///
/// All delays in the system (serialization, propagation, wait timers) are
/// rounded half-up to whole nanoseconds at the point they are computed, so
/// time comparisons are exact and runs are bit-reproducible. Arithmetic is
/// overflow-checked.
class SimTime {
 public:
  constexpr SimTime() : ns_(0) {}

  static constexpr SimTime ns(std::int64_t v) { return SimTime(v); }
  static constexpr SimTime us(std::int64_t v) { return SimTime(v * 1000); }
  static constexpr SimTime ms(std::int64_t v) { return SimTime(v * 1'000'000); }
  static constexpr SimTime sec(std::int64_t v) { return SimTime(v * 1'000'000'000); }

  /// Converts seconds to the nanosecond grid, rounding half-up.
  static SimTime from_seconds(double s) {
    double v = s * 1e9;
    if (!std::isfinite(v) || v > 9.2e18 || v < -9.2e18)
      throw TimeOverflow("time out of range: " + std::to_string(s) + " s");
    return SimTime(std::llround(v));
  }

  /// Converts a delay in seconds to nanoseconds, rounding half-up.
  static SimTime from_delay_seconds(double s) { return from_seconds(s); }

  constexpr std::int64_t ticks() const { return ns_; }
  constexpr double seconds() const { return static_cast<double>(ns_) * 1e-9; }
  constexpr double millis() const { return static_cast<double>(ns_) * 1e-6; }

  friend SimTime operator+(SimTime a, SimTime b) {
    std::int64_t r;
    if (__builtin_add_overflow(a.ns_, b.ns_, &r)) throw TimeOverflow("SimTime add overflow");
    return SimTime(r);
  }
  friend SimTime operator-(SimTime a, SimTime b) {
    std::int64_t r;
    if (__builtin_sub_overflow(a.ns_, b.ns_, &r)) throw TimeOverflow("SimTime sub overflow");
    return SimTime(r);
  }
  SimTime& operator+=(SimTime o) { *this = *this + o; return *this; }
  SimTime& operator-=(SimTime o) { *this = *this - o; return *this; }

  friend constexpr auto operator<=>(SimTime a, SimTime b) = default;

  static constexpr SimTime max() { return SimTime(std::numeric_limits<std::int64_t>::max()); }

 private:
  explicit constexpr SimTime(std::int64_t v) : ns_(v) {}
  std::int64_t ns_;
};

/// PMU reporting grid: tick k of a rate-hz stream, rounded half-up to ns.
inline SimTime report_tick(std::int64_t k, std::int64_t rate_hz) {
  // k * 1e9 / rate, half-up in integer arithmetic
  std::int64_t num;
  if (__builtin_mul_overflow(k, static_cast<std::int64_t>(1'000'000'000), &num))
    throw TimeOverflow("report_tick overflow");
  return SimTime::ns((num + rate_hz / 2) / rate_hz);
}

/// Serialization time of size_bytes over bandwidth_bps, half-up to ns.
/// Exact for the common cases (500 B at 800 kbps = 5 ms, at 1.6 Mbps = 2.5 ms).
inline SimTime serialization_time(std::int64_t size_bytes, std::int64_t bandwidth_bps) {
  std::int64_t bits = size_bytes * 8;
  std::int64_t num;
  if (__builtin_mul_overflow(bits, static_cast<std::int64_t>(1'000'000'000), &num))
    throw TimeOverflow("serialization_time overflow");
  return SimTime::ns((num + bandwidth_bps / 2) / bandwidth_bps);
}

}  // namespace cpsim
