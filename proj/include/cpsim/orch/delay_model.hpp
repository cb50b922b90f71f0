#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpsim/time.hpp"

namespace cpsim::orch {

struct UnknownPath : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DisjointPaths : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathKey {
  std::string src;
  std::string dst;
  auto operator<=>(const PathKey&) const = default;
};

/// Empirical delay distribution for one (path, trigger timestamp) key.
/// Deterministic runs carry a single support point (a Dirac).
struct DelayEntry {
  SimTime mean;
  std::vector<SimTime> support;
};

/// Per-path, per-trigger-timestamp delay model exchanged between the network
/// and grid sides.
///
/// Command paths (SPDC -> load) store the full delay from the trigger
/// timestamp to the load's command arrival. The auxiliary decision series
/// stores the SPDC aggregation latency per measurement timestamp, which the
/// grid side uses to place command send times; it does not participate in
/// the convergence norm.
class DelayModel {
 public:
  int iteration = 0;

  void set_entry(const PathKey& path, SimTime trigger, SimTime delay) {
    entries_[path][trigger.ticks()] = DelayEntry{delay, {delay}};
  }
  void set_decision_latency(SimTime tau, SimTime latency) {
    decision_[tau.ticks()] = DelayEntry{latency, {latency}};
  }

  bool has_path(const PathKey& path) const { return entries_.count(path) != 0; }
  const std::map<PathKey, std::map<std::int64_t, DelayEntry>>& entries() const { return entries_; }
  const std::map<std::int64_t, DelayEntry>& decision_series() const { return decision_; }

  /// Exact entry, linear interpolation between bracketing triggers, clamped
  /// outside the known range.
  SimTime delay(const PathKey& path, SimTime trigger) const;
  SimTime decision_latency(SimTime tau) const;

  std::vector<PathKey> paths() const;
  std::vector<SimTime> triggers(const PathKey& path) const;

  /// src,dst,trigger_timestamp_ns,mean_delay_ns,support_points
  std::string to_csv() const;

 private:
  static SimTime interp(const std::map<std::int64_t, DelayEntry>& series, SimTime at);
  std::map<PathKey, std::map<std::int64_t, DelayEntry>> entries_;
  std::map<std::int64_t, DelayEntry> decision_;
};

/// Maximum over command paths and trigger timestamps (union grid, with
/// interpolation) of the absolute mean-delay difference, in milliseconds.
double convergence_norm_ms(const DelayModel& a, const DelayModel& b);

}  // namespace cpsim::orch
