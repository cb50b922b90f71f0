#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cpsim/event_queue.hpp"
#include "cpsim/net/network.hpp"
#include "cpsim/time.hpp"

namespace cpsim::app {

/// Where PMU payload values come from: fixed nominal values for standalone
/// network runs, or externally pushed live samples under co-simulation.
enum class ValueMode { Placeholder, Live };

/// What makes the SPDC emit load-reduction batches.
enum class TriggerMode { Off, Threshold, Forced };

struct ForcedTrigger {
  SimTime timestamp;      // measurement timestamp the batch is tied to
  int threshold_index = 0;
};

struct StackParams {
  int report_rate_hz = 30;
  SimTime max_wait = SimTime::ms(100);
  std::vector<double> thresholds_hz;
  double reduction_fraction = 0.02;
  std::vector<int> pdc_buses;
  int spdc_bus = 16;
  std::map<int, int> pmu_to_pdc;  // bus -> pdc bus
  std::vector<int> load_buses;    // ascending
};

struct AppEvent {
  std::string host;
  std::string event;  // pmu_tx | pdc_flush | spdc_decision | cmd_tx
  SimTime meas_timestamp;
  SimTime t;
  std::string detail;
};

/// Per-source SPDC arrival: measurement from src_bus time-tagged tau reached
/// the SPDC (inside its PDC's aggregate) at t.
struct SpdcArrival {
  int src_bus;
  SimTime tau;
  SimTime t;
};

struct SpdcDecision {
  SimTime tau;
  SimTime t;
  int received_count = 0;
  double avg_freq_hz = 0.0;
};

struct EmittedBatch {
  SimTime tau;
  int threshold_index;
  SimTime decision_time;
};

struct CommandArrival {
  int load_bus;
  SimTime trigger_tau;
  int threshold_index;
  double fraction;
  SimTime t;
};

/// Relative-wait aggregation state shared by PDCs and the SPDC: the wait
/// timer for a timestamp starts on the first item received for it, the
/// buffer flushes exactly once, and later arrivals are disregarded.
class Aggregator {
 public:
  Aggregator(EventQueue& queue, SimTime max_wait, std::set<int> expected,
             std::function<void(SimTime tau, SimTime t)> on_flush)
      : queue_(queue), max_wait_(max_wait), expected_(std::move(expected)),
        on_flush_(std::move(on_flush)) {}

  /// Returns false if the timestamp was already flushed (item disregarded).
  bool ingest(int source, SimTime tau, const std::vector<net::Measurement>& meas, SimTime t);

  const std::vector<net::Measurement>* received(SimTime tau) const;
  bool flushed(SimTime tau) const;
  std::uint64_t late_count() const { return late_; }
  const std::set<int>& expected() const { return expected_; }

 private:
  struct Buffer {
    std::set<int> sources;
    std::vector<net::Measurement> meas;
    EventId timer = 0;
    bool flushed = false;
    SimTime first_arrival;
  };
  void flush(SimTime tau, SimTime t);

  EventQueue& queue_;
  SimTime max_wait_;
  std::set<int> expected_;
  std::function<void(SimTime, SimTime)> on_flush_;
  std::map<std::int64_t, Buffer> buffers_;
  std::uint64_t late_ = 0;
};

/// Wires PMU, PDC, SPDC and load-controller hosts into a Network and runs
/// the measurement/decision chain on top of it.
class Stack {
 public:
  Stack(net::Network& network, StackParams params, ValueMode value_mode, TriggerMode trigger_mode);

  /// Schedules PMU ticks for every timestamp in [0, t_end). Call once.
  void start(SimTime t_end);

  void set_forced_triggers(std::vector<ForcedTrigger> triggers);

  /// Live values for the next tick(s), keyed by bus.
  void push_values(const std::vector<net::Measurement>& values);

  const std::vector<AppEvent>& app_events() const { return app_events_; }
  const std::vector<SpdcArrival>& spdc_arrivals() const { return spdc_arrivals_; }
  const std::vector<SpdcDecision>& spdc_decisions() const { return spdc_decisions_; }
  const std::vector<EmittedBatch>& emitted_batches() const { return emitted_batches_; }
  const std::vector<CommandArrival>& command_arrivals() const { return command_arrivals_; }
  std::uint64_t pdc_late_count() const;

  /// Hook invoked on every command delivery (used by the co-sim federate).
  std::function<void(const CommandArrival&)> on_command;

  const StackParams& params() const { return params_; }
  int spdc_host() const { return spdc_host_; }
  std::string app_events_csv() const;
  std::string monitoring_csv() const;

 private:
  void pmu_tick(int bus, std::int64_t k, SimTime t);
  void pdc_receive(int pdc_bus, const net::Packet& pkt, SimTime t);
  void pdc_flush(int pdc_bus, SimTime tau, SimTime t);
  void spdc_receive(const net::Packet& pkt, SimTime t);
  void spdc_flush(SimTime tau, SimTime t);
  void emit_batch(SimTime tau, int threshold_index, SimTime t);
  void load_receive(int load_bus, const net::Packet& pkt, SimTime t);

  net::Network& net_;
  StackParams params_;
  ValueMode value_mode_;
  TriggerMode trigger_mode_;
  SimTime t_end_;

  std::map<int, int> pmu_hosts_;   // bus -> host id
  std::map<int, int> pdc_hosts_;   // pdc bus -> host id
  std::map<int, int> load_hosts_;  // load bus -> host id
  int spdc_host_ = -1;

  std::map<int, net::Measurement> live_values_;  // bus -> latest pushed sample
  std::map<int, std::unique_ptr<Aggregator>> pdc_agg_;
  std::unique_ptr<Aggregator> spdc_agg_;
  int next_threshold_ = 0;
  std::multimap<std::int64_t, ForcedTrigger> forced_;  // keyed by timestamp ns

  std::vector<AppEvent> app_events_;
  std::vector<SpdcArrival> spdc_arrivals_;
  std::vector<SpdcDecision> spdc_decisions_;
  std::vector<EmittedBatch> emitted_batches_;
  std::vector<CommandArrival> command_arrivals_;
};

}  // namespace cpsim::app
