#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpsim/event_queue.hpp"
#include "cpsim/net/routing.hpp"
#include "cpsim/net/topology.hpp"
#include "cpsim/time.hpp"

namespace cpsim::net {

enum class PacketKind { PmuMeasurement, PdcAggregate, ControlCommand };

const char* to_string(PacketKind k);

struct Measurement {
  int bus = 0;
  double v_mag = 1.0;
  double v_ang = 0.0;
  double freq_hz = 50.0;
};

struct Packet {
  std::uint64_t id = 0;
  int src_host = -1;
  int dst_host = -1;
  PacketKind kind = PacketKind::PmuMeasurement;
  std::int64_t size_bytes = 500;
  SimTime meas_timestamp;  // PMU time-tag / trigger timestamp the payload refers to
  SimTime sent_at;
  // payload
  std::shared_ptr<const std::vector<Measurement>> measurements;
  int src_pdc_bus = -1;      // aggregates
  int threshold_index = -1;  // commands
  double fraction = 0.0;     // commands
};

enum class HostKind { Pmu, Pdc, Spdc, LoadCtl, Generic };

struct Host {
  int id = -1;
  std::string name;
  HostKind kind = HostKind::Generic;
  int bus = 0;
  std::function<void(const Packet&, SimTime)> handler;
};

struct DeliveryRecord {
  PacketKind kind;
  int src_host;
  int dst_host;
  SimTime meas_timestamp;
  SimTime sent_at;
  SimTime received_at;
  bool dropped = false;
  std::string drop_reason;
};

struct HopRecord {
  std::uint64_t packet_id;
  int from_bus;
  int to_bus;
  SimTime entered_queue;
  SimTime ser_start;
  SimTime ser_end;
  SimTime arrived;
};

/// Delivery/drop log of one network run plus per-hop detail.
struct DelayTrace {
  std::vector<DeliveryRecord> deliveries;
  std::vector<HopRecord> hops;

  /// kind,src,dst,meas_timestamp_ns,sent_ns,received_ns,dropped,reason
  std::string to_csv(const std::function<std::string(int)>& host_name) const;

  /// Delivery records matching the given kind/endpoints/time-tag window;
  /// any filter may be left unset.
  std::vector<DeliveryRecord> filtered(std::optional<PacketKind> kind,
                                       std::optional<int> src_host, std::optional<int> dst_host,
                                       std::optional<SimTime> tag_from = {},
                                       std::optional<SimTime> tag_to = {}) const;

  /// Bits whose serialization started inside [t0, t1) on the from->to direction.
  std::int64_t serialized_bits(int from_bus, int to_bus, SimTime t0, SimTime t1,
                               std::int64_t packet_bits) const;
};

struct NoRouteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Store-and-forward packet transport over the topology.
///
/// Each link direction serializes one packet at a time from a FIFO queue;
/// propagation overlaps with the next serialization. Host attachment links
/// are ideal: a packet reaching its destination bus is handed to the host at
/// that instant, and sending enqueues directly at the source bus.
class Network {
 public:
  Network(Topology topology, EventQueue& queue);

  Topology& topology() { return topo_; }
  const Topology& topology() const { return topo_; }
  const RoutingTable& routes() const { return routes_; }
  EventQueue& queue() { return queue_; }

  int add_host(const std::string& name, HostKind kind, int bus,
               std::function<void(const Packet&, SimTime)> handler);
  const Host& host(int id) const { return hosts_.at(id); }
  const std::vector<Host>& hosts() const { return hosts_; }
  int host_by_name(const std::string& name) const;

  /// Injects a packet at the source host's bus at time t (= queue.now()).
  void send_packet(Packet pkt, SimTime t);

  /// Takes the link down, drops whatever is serializing or propagating on it,
  /// recomputes routes and re-forwards queued packets.
  void fail_link(int bus_a, int bus_b, SimTime t);

  const DelayTrace& trace() const { return trace_; }
  DelayTrace& trace() { return trace_; }

  std::uint64_t next_packet_id() { return next_packet_id_++; }

 private:
  struct Queued {
    Packet pkt;
    SimTime entered;
  };
  struct Direction {
    std::deque<Queued> waiting;                 // FIFO behind the serializer
    std::optional<Packet> serializing;
    EventId ser_event = 0;
    SimTime ser_started;
    SimTime ser_entered;                        // queue-entry time of the serializing packet
    std::vector<std::pair<EventId, Packet>> propagating;
  };

  Direction& direction(int link_idx, int from_bus);
  void forward(int at_bus, Packet pkt, SimTime t);
  void start_serialization(int link_idx, int from_bus, SimTime t);
  void on_serialized(int link_idx, int from_bus, SimTime t);
  void deliver(Packet pkt, SimTime t);
  void drop(const Packet& pkt, SimTime t, const std::string& reason);

  Topology topo_;
  EventQueue& queue_;
  RoutingTable routes_;
  std::vector<Host> hosts_;
  std::map<std::string, int> host_names_;
  std::vector<std::array<Direction, 2>> dirs_;  // per link: [0]=a->b, [1]=b->a
  DelayTrace trace_;
  std::uint64_t next_packet_id_ = 0;
};

}  // namespace cpsim::net
