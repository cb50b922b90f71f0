#include "cpsim/app/stack.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace cpsim::app {

bool Aggregator::ingest(int source, SimTime tau, const std::vector<net::Measurement>& meas,
                        SimTime t) {
  auto& buf = buffers_[tau.ticks()];
  if (buf.flushed) {
    ++late_;
    return false;
  }
  bool first = buf.sources.empty();
  if (!buf.sources.insert(source).second) return true;  // duplicate source, keep first copy
  buf.meas.insert(buf.meas.end(), meas.begin(), meas.end());
  if (first) {
    buf.first_arrival = t;
    buf.timer = queue_.schedule(t + max_wait_, "agg.timeout", [this, tau](SimTime now) {
      flush(tau, now);
    });
  }
  if (buf.sources.size() == expected_.size()) {
    queue_.cancel(buf.timer);
    flush(tau, t);
  }
  return true;
}

void Aggregator::flush(SimTime tau, SimTime t) {
  auto& buf = buffers_[tau.ticks()];
  buf.flushed = true;
  on_flush_(tau, t);
}

const std::vector<net::Measurement>* Aggregator::received(SimTime tau) const {
  auto it = buffers_.find(tau.ticks());
  return it == buffers_.end() ? nullptr : &it->second.meas;
}

bool Aggregator::flushed(SimTime tau) const {
  auto it = buffers_.find(tau.ticks());
  return it != buffers_.end() && it->second.flushed;
}

Stack::Stack(net::Network& network, StackParams params, ValueMode value_mode,
             TriggerMode trigger_mode)
    : net_(network), params_(std::move(params)), value_mode_(value_mode),
      trigger_mode_(trigger_mode) {
  const int n = net_.topology().bus_count();
  if (!params_.pdc_buses.empty()) {
    for (int bus = 1; bus <= n; ++bus) {
      if (!params_.pmu_to_pdc.count(bus))
        throw std::runtime_error("no PDC assignment for PMU at bus " + std::to_string(bus));
    }
  }

  // PMU at every bus, ascending, so simultaneous emissions order by bus id.
  for (int bus = 1; bus <= n; ++bus) {
    pmu_hosts_[bus] = net_.add_host("pmu" + std::to_string(bus), net::HostKind::Pmu, bus, {});
  }
  for (int pdc_bus : params_.pdc_buses) {
    pdc_hosts_[pdc_bus] = net_.add_host("pdc" + std::to_string(pdc_bus), net::HostKind::Pdc,
                                        pdc_bus, [this, pdc_bus](const net::Packet& p, SimTime t) {
                                          pdc_receive(pdc_bus, p, t);
                                        });
  }
  spdc_host_ = net_.add_host("spdc" + std::to_string(params_.spdc_bus), net::HostKind::Spdc,
                             params_.spdc_bus,
                             [this](const net::Packet& p, SimTime t) { spdc_receive(p, t); });
  for (int load_bus : params_.load_buses) {
    load_hosts_[load_bus] = net_.add_host("load" + std::to_string(load_bus),
                                          net::HostKind::LoadCtl, load_bus,
                                          [this, load_bus](const net::Packet& p, SimTime t) {
                                            load_receive(load_bus, p, t);
                                          });
  }

  // One aggregator per PDC over its zone, one at the SPDC over the PDCs.
  for (int pdc_bus : params_.pdc_buses) {
    std::set<int> zone;
    for (const auto& [pmu_bus, assigned] : params_.pmu_to_pdc)
      if (assigned == pdc_bus) zone.insert(pmu_bus);
    pdc_agg_[pdc_bus] = std::make_unique<Aggregator>(
        net_.queue(), params_.max_wait, zone,
        [this, pdc_bus](SimTime tau, SimTime t) { pdc_flush(pdc_bus, tau, t); });
  }
  std::set<int> pdc_set(params_.pdc_buses.begin(), params_.pdc_buses.end());
  spdc_agg_ = std::make_unique<Aggregator>(
      net_.queue(), params_.max_wait, pdc_set,
      [this](SimTime tau, SimTime t) { spdc_flush(tau, t); });
}

void Stack::set_forced_triggers(std::vector<ForcedTrigger> triggers) {
  forced_.clear();
  for (const auto& tr : triggers) forced_.emplace(tr.timestamp.ticks(), tr);
}

void Stack::push_values(const std::vector<net::Measurement>& values) {
  for (const auto& m : values) live_values_[m.bus] = m;
}

void Stack::start(SimTime t_end) {
  t_end_ = t_end;
  for (auto& [bus, host] : pmu_hosts_) {
    int b = bus;
    net_.queue().schedule(report_tick(0, params_.report_rate_hz), "pmu.tick",
                          [this, b](SimTime t) { pmu_tick(b, 0, t); });
  }
  // A measurement chain with no PDC sources never flushes, so forced batches
  // fire directly at their timestamps.
  if (trigger_mode_ == TriggerMode::Forced && spdc_agg_->expected().empty()) {
    for (const auto& [ns, tr] : forced_) {
      ForcedTrigger trigger = tr;
      net_.queue().schedule(trigger.timestamp, "spdc.forced", [this, trigger](SimTime t) {
        emit_batch(trigger.timestamp, trigger.threshold_index, t);
      });
    }
  }
}

void Stack::pmu_tick(int bus, std::int64_t k, SimTime t) {
  auto zone = params_.pmu_to_pdc.find(bus);
  if (zone == params_.pmu_to_pdc.end()) return;  // no concentrator configured
  net::Measurement m;
  m.bus = bus;
  if (value_mode_ == ValueMode::Live) {
    auto it = live_values_.find(bus);
    if (it != live_values_.end()) m = it->second;
  }
  net::Packet pkt;
  pkt.id = net_.next_packet_id();
  pkt.src_host = pmu_hosts_.at(bus);
  pkt.dst_host = pdc_hosts_.at(zone->second);
  pkt.kind = net::PacketKind::PmuMeasurement;
  pkt.size_bytes = net_.topology().params().packet_size_bytes;
  pkt.meas_timestamp = t;
  pkt.measurements = std::make_shared<const std::vector<net::Measurement>>(
      std::vector<net::Measurement>{m});
  app_events_.push_back(AppEvent{"pmu" + std::to_string(bus), "pmu_tx", t, t, ""});
  net_.send_packet(std::move(pkt), t);

  SimTime next = report_tick(k + 1, params_.report_rate_hz);
  if (next < t_end_) {
    net_.queue().schedule(next, "pmu.tick", [this, bus, k](SimTime tn) {
      pmu_tick(bus, k + 1, tn);
    });
  }
}

void Stack::pdc_receive(int pdc_bus, const net::Packet& pkt, SimTime t) {
  if (pkt.kind != net::PacketKind::PmuMeasurement) return;
  int src_bus = net_.host(pkt.src_host).bus;
  pdc_agg_.at(pdc_bus)->ingest(src_bus, pkt.meas_timestamp, *pkt.measurements, t);
}

void Stack::pdc_flush(int pdc_bus, SimTime tau, SimTime t) {
  const auto* meas = pdc_agg_.at(pdc_bus)->received(tau);
  app_events_.push_back(AppEvent{"pdc" + std::to_string(pdc_bus), "pdc_flush", tau, t,
                                 "n=" + std::to_string(meas->size())});
  net::Packet pkt;
  pkt.id = net_.next_packet_id();
  pkt.src_host = pdc_hosts_.at(pdc_bus);
  pkt.dst_host = spdc_host_;
  pkt.kind = net::PacketKind::PdcAggregate;
  pkt.size_bytes = net_.topology().params().packet_size_bytes;
  pkt.meas_timestamp = tau;
  pkt.src_pdc_bus = pdc_bus;
  pkt.measurements = std::make_shared<const std::vector<net::Measurement>>(*meas);
  net_.send_packet(std::move(pkt), t);
}

void Stack::spdc_receive(const net::Packet& pkt, SimTime t) {
  if (pkt.kind != net::PacketKind::PdcAggregate) return;
  for (const auto& m : *pkt.measurements)
    spdc_arrivals_.push_back(SpdcArrival{m.bus, pkt.meas_timestamp, t});
  spdc_agg_->ingest(pkt.src_pdc_bus, pkt.meas_timestamp, *pkt.measurements, t);
}

void Stack::spdc_flush(SimTime tau, SimTime t) {
  const auto* meas = spdc_agg_->received(tau);
  double avg = 0.0;
  if (!meas->empty()) {
    for (const auto& m : *meas) avg += m.freq_hz;
    avg /= static_cast<double>(meas->size());
  }
  spdc_decisions_.push_back(SpdcDecision{tau, t, static_cast<int>(meas->size()), avg});
  std::ostringstream det;
  det << "n=" << meas->size() << " avg_hz=" << avg;
  app_events_.push_back(AppEvent{"spdc" + std::to_string(params_.spdc_bus), "spdc_decision", tau,
                                 t, det.str()});

  if (trigger_mode_ == TriggerMode::Threshold) {
    while (next_threshold_ < static_cast<int>(params_.thresholds_hz.size()) &&
           avg < params_.thresholds_hz[next_threshold_]) {
      emit_batch(tau, next_threshold_, t);
      ++next_threshold_;
    }
  } else if (trigger_mode_ == TriggerMode::Forced) {
    auto [lo, hi] = forced_.equal_range(tau.ticks());
    for (auto it = lo; it != hi; ++it) emit_batch(tau, it->second.threshold_index, t);
  }
}

void Stack::emit_batch(SimTime tau, int threshold_index, SimTime t) {
  emitted_batches_.push_back(EmittedBatch{tau, threshold_index, t});
  for (int load_bus : params_.load_buses) {  // ascending: deterministic egress order
    net::Packet pkt;
    pkt.id = net_.next_packet_id();
    pkt.src_host = spdc_host_;
    pkt.dst_host = load_hosts_.at(load_bus);
    pkt.kind = net::PacketKind::ControlCommand;
    pkt.size_bytes = net_.topology().params().packet_size_bytes;
    pkt.meas_timestamp = tau;
    pkt.threshold_index = threshold_index;
    pkt.fraction = params_.reduction_fraction;
    app_events_.push_back(AppEvent{"spdc" + std::to_string(params_.spdc_bus), "cmd_tx", tau, t,
                                   "load=" + std::to_string(load_bus) +
                                       " thr=" + std::to_string(threshold_index)});
    net_.send_packet(std::move(pkt), t);
  }
}

void Stack::load_receive(int load_bus, const net::Packet& pkt, SimTime t) {
  if (pkt.kind != net::PacketKind::ControlCommand) return;
  CommandArrival arr{load_bus, pkt.meas_timestamp, pkt.threshold_index, pkt.fraction, t};
  command_arrivals_.push_back(arr);
  if (on_command) on_command(arr);
}

std::uint64_t Stack::pdc_late_count() const {
  std::uint64_t n = 0;
  for (const auto& [bus, agg] : pdc_agg_) n += agg->late_count();
  return n + spdc_agg_->late_count();
}

std::string Stack::app_events_csv() const {
  std::ostringstream os;
  os << "host,event,meas_timestamp_ns,t_ns,detail\n";
  for (const auto& e : app_events_)
    os << e.host << ',' << e.event << ',' << e.meas_timestamp.ticks() << ',' << e.t.ticks() << ','
       << e.detail << '\n';
  return os.str();
}

std::string Stack::monitoring_csv() const {
  std::ostringstream os;
  os << "source_bus,timestamp_ns,delay_ns\n";
  for (const auto& a : spdc_arrivals_)
    os << a.src_bus << ',' << a.tau.ticks() << ',' << (a.t - a.tau).ticks() << '\n';
  return os.str();
}

}  // namespace cpsim::app
