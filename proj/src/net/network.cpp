#include "cpsim/net/network.hpp"

#include <array>
#include <sstream>

namespace cpsim::net {

const char* to_string(PacketKind k) {
  switch (k) {
    case PacketKind::PmuMeasurement: return "pmu_measurement";
    case PacketKind::PdcAggregate: return "pdc_aggregate";
    case PacketKind::ControlCommand: return "control_command";
  }
  return "?";
}

std::string DelayTrace::to_csv(const std::function<std::string(int)>& host_name) const {
  std::ostringstream os;
  os << "kind,src,dst,meas_timestamp_ns,sent_ns,received_ns,dropped,reason\n";
  for (const auto& r : deliveries) {
    os << to_string(r.kind) << ',' << host_name(r.src_host) << ',' << host_name(r.dst_host) << ','
       << r.meas_timestamp.ticks() << ',' << r.sent_at.ticks() << ','
       << (r.dropped ? -1 : r.received_at.ticks()) << ',' << (r.dropped ? 1 : 0) << ','
       << r.drop_reason << '\n';
  }
  return os.str();
}

std::vector<DeliveryRecord> DelayTrace::filtered(std::optional<PacketKind> kind,
                                                 std::optional<int> src_host,
                                                 std::optional<int> dst_host,
                                                 std::optional<SimTime> tag_from,
                                                 std::optional<SimTime> tag_to) const {
  std::vector<DeliveryRecord> out;
  for (const auto& r : deliveries) {
    if (kind && r.kind != *kind) continue;
    if (src_host && r.src_host != *src_host) continue;
    if (dst_host && r.dst_host != *dst_host) continue;
    if (tag_from && r.meas_timestamp < *tag_from) continue;
    if (tag_to && r.meas_timestamp >= *tag_to) continue;
    out.push_back(r);
  }
  return out;
}

std::int64_t DelayTrace::serialized_bits(int from_bus, int to_bus, SimTime t0, SimTime t1,
                                         std::int64_t packet_bits) const {
  std::int64_t bits = 0;
  for (const auto& h : hops) {
    if (h.from_bus == from_bus && h.to_bus == to_bus && h.ser_start >= t0 && h.ser_start < t1)
      bits += packet_bits;
  }
  return bits;
}

Network::Network(Topology topology, EventQueue& queue)
    : topo_(std::move(topology)), queue_(queue), dirs_(topo_.links().size()) {
  routes_ = compute_routes(topo_);
}

int Network::add_host(const std::string& name, HostKind kind, int bus,
                      std::function<void(const Packet&, SimTime)> handler) {
  Host h;
  h.id = static_cast<int>(hosts_.size());
  h.name = name;
  h.kind = kind;
  h.bus = bus;
  h.handler = std::move(handler);
  hosts_.push_back(std::move(h));
  host_names_[hosts_.back().name] = hosts_.back().id;
  return hosts_.back().id;
}

int Network::host_by_name(const std::string& name) const {
  auto it = host_names_.find(name);
  return it == host_names_.end() ? -1 : it->second;
}

Network::Direction& Network::direction(int link_idx, int from_bus) {
  const Link& l = topo_.links()[link_idx];
  return dirs_[link_idx][from_bus == l.bus_a ? 0 : 1];
}

void Network::send_packet(Packet pkt, SimTime t) {
  pkt.sent_at = t;
  int src_bus = hosts_.at(pkt.src_host).bus;
  int dst_bus = hosts_.at(pkt.dst_host).bus;
  if (src_bus == dst_bus) {
    deliver(std::move(pkt), t);  // co-located hosts: ideal attachment, no hop
    return;
  }
  forward(src_bus, std::move(pkt), t);
}

void Network::forward(int at_bus, Packet pkt, SimTime t) {
  int dst_bus = hosts_.at(pkt.dst_host).bus;
  int next = routes_.next_hop(at_bus, dst_bus);
  if (next < 0) {
    drop(pkt, t, "no_route");
    return;
  }
  int li = topo_.link_index(at_bus, next);
  Direction& dir = direction(li, at_bus);
  dir.waiting.push_back(Queued{std::move(pkt), t});
  if (!dir.serializing) start_serialization(li, at_bus, t);
}

void Network::start_serialization(int link_idx, int from_bus, SimTime t) {
  Direction& dir = direction(link_idx, from_bus);
  if (dir.serializing || dir.waiting.empty()) return;
  dir.serializing = std::move(dir.waiting.front().pkt);
  dir.ser_entered = dir.waiting.front().entered;
  dir.waiting.pop_front();
  dir.ser_started = t;
  SimTime ser =
      serialization_time(dir.serializing->size_bytes, topo_.links()[link_idx].bandwidth_bps);
  dir.ser_event =
      queue_.schedule(t + ser, "net.ser_done", [this, link_idx, from_bus](SimTime now) {
        on_serialized(link_idx, from_bus, now);
      });
}

void Network::on_serialized(int link_idx, int from_bus, SimTime t) {
  Direction& dir = direction(link_idx, from_bus);
  const Link& l = topo_.links()[link_idx];
  int to_bus = (from_bus == l.bus_a) ? l.bus_b : l.bus_a;
  Packet pkt = std::move(*dir.serializing);
  dir.serializing.reset();

  trace_.hops.push_back(
      HopRecord{pkt.id, from_bus, to_bus, dir.ser_entered, dir.ser_started, t, t + l.prop_delay});

  // Propagation delay is constant per link, so arrivals stay FIFO and the
  // front of the propagating list is always the one firing.
  SimTime arrive_at = t + l.prop_delay;
  EventId ev =
      queue_.schedule(arrive_at, "net.arrive", [this, link_idx, from_bus, to_bus](SimTime now) {
        Direction& d = direction(link_idx, from_bus);
        Packet p = std::move(d.propagating.front().second);
        d.propagating.erase(d.propagating.begin());
        int dst_bus = hosts_.at(p.dst_host).bus;
        if (to_bus == dst_bus) deliver(std::move(p), now);
        else forward(to_bus, std::move(p), now);
      });
  dir.propagating.emplace_back(ev, std::move(pkt));

  if (!dir.waiting.empty()) start_serialization(link_idx, from_bus, t);
}

void Network::deliver(Packet pkt, SimTime t) {
  trace_.deliveries.push_back(DeliveryRecord{pkt.kind, pkt.src_host, pkt.dst_host,
                                             pkt.meas_timestamp, pkt.sent_at, t, false, ""});
  const Host& h = hosts_.at(pkt.dst_host);
  if (h.handler) h.handler(pkt, t);
}

void Network::drop(const Packet& pkt, SimTime t, const std::string& reason) {
  trace_.deliveries.push_back(DeliveryRecord{pkt.kind, pkt.src_host, pkt.dst_host,
                                             pkt.meas_timestamp, pkt.sent_at, t, true, reason});
}

void Network::fail_link(int bus_a, int bus_b, SimTime t) {
  int li = topo_.link_index(bus_a, bus_b);
  Link& l = topo_.links()[li];
  l.up = false;

  // (entry bus, packet) for packets that were waiting behind the serializer.
  std::vector<std::pair<int, Packet>> displaced;
  for (int side = 0; side < 2; ++side) {
    int at_bus = (side == 0) ? l.bus_a : l.bus_b;
    Direction& dir = dirs_[li][side];
    if (dir.serializing) {
      queue_.cancel(dir.ser_event);
      drop(*dir.serializing, t, "link_failure");
      dir.serializing.reset();
    }
    for (auto& [ev, pkt] : dir.propagating) {
      queue_.cancel(ev);
      drop(pkt, t, "link_failure");
    }
    dir.propagating.clear();
    for (auto& q : dir.waiting) displaced.emplace_back(at_bus, std::move(q.pkt));
    dir.waiting.clear();
  }

  routes_ = compute_routes(topo_);

  for (auto& [bus, pkt] : displaced) forward(bus, std::move(pkt), t);
}

}  // namespace cpsim::net
