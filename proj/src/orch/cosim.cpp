#include "cpsim/orch/cosim.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "cpsim/orch/runs.hpp"

namespace cpsim::orch {

namespace {

using nlohmann::json;

// Lockstep frame protocol between the grid federate (parent) and the network
// federate (child). Strict request/response alternation, parent drives.
enum FrameType : std::uint32_t {
  kReqNext = 1,  // parent -> child: propose your next sync point
  kNext = 2,     // child -> parent: t = proposal (INT64_MAX when idle)
  kAdvance = 3,  // parent -> child: t = sync time, payload: PMU samples
  kDone = 4,     // child -> parent: t = sync time, payload: deliveries
  kFinish = 5,   // parent -> child: run is over, send artifacts
  kFinal = 6,    // child -> parent: payload: JSON blob (count = bytes)
};

struct FrameHeader {
  std::uint32_t type = 0;
  std::uint32_t count = 0;
  std::int64_t t = 0;
};

struct PmuValueMsg {
  std::int64_t bus = 0;
  double mag = 1.0;
  double ang = 0.0;
  double freq = 50.0;
};

struct DeliveryMsg {
  std::int64_t load_bus = 0;
  std::int64_t threshold_index = 0;
  double fraction = 0.0;
  std::int64_t t_exact = 0;
  std::int64_t trigger = 0;
};

void write_all(int fd, const void* data, std::size_t n) {
  const char* p = static_cast<const char*>(data);
  while (n > 0) {
    ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("cosim pipe write failed");
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_all(int fd, void* data, std::size_t n) {
  char* p = static_cast<char*>(data);
  while (n > 0) {
    ssize_t r = ::read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("cosim pipe read failed");
    }
    if (r == 0) throw std::runtime_error("cosim pipe closed unexpectedly");
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

void send_frame(int fd, FrameType type, std::int64_t t, const void* payload, std::uint32_t count,
                std::size_t item_size) {
  FrameHeader h{type, count, t};
  write_all(fd, &h, sizeof(h));
  if (count > 0) write_all(fd, payload, count * item_size);
}

FrameHeader recv_header(int fd) {
  FrameHeader h;
  read_all(fd, &h, sizeof(h));
  return h;
}

/// Network federate main loop; runs in the forked child on its copy of the
/// scenario. Replies to the parent's requests until kFinish.
void run_network_federate(int in_fd, int out_fd, const Scenario& scenario, SimTime min_sync) {
  app::TriggerMode trig =
      scenario.control_enabled ? app::TriggerMode::Threshold : app::TriggerMode::Off;
  NetworkRun run(scenario, app::ValueMode::Live, trig);

  std::deque<DeliveryMsg> outbox;
  run.stack().on_command = [&](const app::CommandArrival& a) {
    outbox.push_back(DeliveryMsg{a.load_bus, a.threshold_index, a.fraction, a.t.ticks(),
                                 a.trigger_tau.ticks()});
  };

  SimTime last_sync;
  bool first_sync = true;
  for (;;) {
    FrameHeader h = recv_header(in_fd);
    if (h.type == kReqNext) {
      std::int64_t prop;
      SimTime floor = first_sync ? SimTime::ns(0) : last_sync + min_sync;
      if (min_sync.ticks() > 0 && !outbox.empty()) {
        prop = floor.ticks();  // unreported deliveries: sync as early as allowed
      } else {
        SimTime next = run.queue().next_event_time();
        if (next == SimTime::max()) prop = std::numeric_limits<std::int64_t>::max();
        else prop = std::max(next, floor).ticks();
      }
      send_frame(out_fd, kNext, prop, nullptr, 0, 0);
    } else if (h.type == kAdvance) {
      SimTime t_sync = SimTime::ns(h.t);
      if (h.count > 0) {
        std::vector<PmuValueMsg> vals(h.count);
        read_all(in_fd, vals.data(), h.count * sizeof(PmuValueMsg));
        std::vector<net::Measurement> ms;
        ms.reserve(vals.size());
        for (const auto& v : vals)
          ms.push_back(net::Measurement{static_cast<int>(v.bus), v.mag, v.ang, v.freq});
        run.stack().push_values(ms);
      }
      run.run_until(t_sync);
      // Deliveries are handed over at the first sync strictly after they
      // happen (inclusive when min_sync is zero), keeping grid-perceived
      // arrivals late by at most one sync interval and never early.
      std::vector<DeliveryMsg> report;
      while (!outbox.empty()) {
        bool due = min_sync.ticks() > 0 ? outbox.front().t_exact < t_sync.ticks()
                                        : outbox.front().t_exact <= t_sync.ticks();
        if (!due) break;
        report.push_back(outbox.front());
        outbox.pop_front();
      }
      last_sync = t_sync;
      first_sync = false;
      send_frame(out_fd, kDone, t_sync.ticks(), report.data(),
                 static_cast<std::uint32_t>(report.size()), sizeof(DeliveryMsg));
    } else if (h.type == kFinish) {
      json blob;
      auto name = [&](int id) { return run.network().host(id).name; };
      blob["delay_trace_csv"] = run.network().trace().to_csv(name);
      blob["app_events_csv"] = run.stack().app_events_csv();
      blob["monitoring_csv"] = run.stack().monitoring_csv();
      blob["emitted_batches"] = json::array();
      for (const auto& b : run.stack().emitted_batches())
        blob["emitted_batches"].push_back({{"trigger_ns", b.tau.ticks()},
                                           {"threshold_index", b.threshold_index},
                                           {"decision_ns", b.decision_time.ticks()}});
      blob["events_fired"] = run.queue().stats().events_fired;
      blob["late_measurements"] = run.stack().pdc_late_count();
      json z = json::object();
      for (const auto& [bus, pdc] : run.zones()) z[std::to_string(bus)] = pdc;
      blob["pmu_zones"] = z;
      std::string bytes = blob.dump();
      send_frame(out_fd, kFinal, 0, bytes.data(), static_cast<std::uint32_t>(bytes.size()), 1);
      return;
    } else {
      throw std::runtime_error("unexpected cosim frame type");
    }
  }
}

}  // namespace

CosimResult cosim_simulate(const Scenario& scenario, SimTime min_net_sync) {
  auto t_start = std::chrono::steady_clock::now();

  int to_child[2], to_parent[2];
  if (pipe(to_child) != 0 || pipe(to_parent) != 0)
    throw std::runtime_error("cosim pipe() failed");
  std::fflush(stdout);
  std::fflush(stderr);
  pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("cosim fork() failed");

  if (pid == 0) {
    // network federate
    ::close(to_child[1]);
    ::close(to_parent[0]);
    int code = 0;
    try {
      run_network_federate(to_child[0], to_parent[1], scenario, min_net_sync);
    } catch (...) {
      code = 1;
    }
    ::close(to_child[0]);
    ::close(to_parent[1]);
    _exit(code);
  }

  ::close(to_child[0]);
  ::close(to_parent[1]);
  int wr = to_child[1];
  int rd = to_parent[0];

  CosimResult out;
  try {
    grid::PowerModel model = grid::load_case(scenario.grid_case);
    grid::GridSimulation sim(model);
    if (scenario.trip) {
      grid::GridEvent ev;
      ev.at = scenario.trip->at;
      ev.kind = grid::GridEvent::Kind::GeneratorTrip;
      ev.gen_id = scenario.trip->gen_id;
      sim.add_event(ev);
    }

    std::vector<SimTime> ticks = scenario.ticks();
    std::vector<PmuValueMsg> latest;
    sim.set_sample_times(ticks, [&](SimTime, const std::vector<grid::BusSample>& buses) {
      latest.clear();
      for (int b = 0; b < static_cast<int>(buses.size()); ++b)
        latest.push_back(PmuValueMsg{b + 1, buses[b].v_mag, buses[b].theta, buses[b].freq_hz});
    });

    std::size_t tick_idx = 0;
    std::uint64_t sync_steps = 0;
    std::vector<ArrivalRecord> arrivals;

    for (;;) {
      SimTime horizon = tick_idx < ticks.size() ? ticks[tick_idx] : scenario.t_end;
      send_frame(wr, kReqNext, 0, nullptr, 0, 0);
      FrameHeader nh = recv_header(rd);
      if (nh.type != kNext) throw std::runtime_error("cosim protocol error (expected NEXT)");
      SimTime t_sync = std::min({horizon, SimTime::ns(nh.t), scenario.t_end});

      sim.advance_to(t_sync);

      bool at_tick = tick_idx < ticks.size() && ticks[tick_idx] == t_sync;
      if (at_tick) ++tick_idx;
      send_frame(wr, kAdvance, t_sync.ticks(), at_tick ? latest.data() : nullptr,
                 at_tick ? static_cast<std::uint32_t>(latest.size()) : 0, sizeof(PmuValueMsg));
      FrameHeader dh = recv_header(rd);
      if (dh.type != kDone) throw std::runtime_error("cosim protocol error (expected DONE)");
      if (dh.count > 0) {
        std::vector<DeliveryMsg> dels(dh.count);
        read_all(rd, dels.data(), dh.count * sizeof(DeliveryMsg));
        for (const auto& d : dels) {
          grid::GridEvent ev;
          ev.at = t_sync;  // grid-perceived arrival: the sync point
          ev.kind = grid::GridEvent::Kind::LoadReduction;
          ev.load_bus = static_cast<int>(d.load_bus);
          ev.fraction = d.fraction;
          ev.threshold_index = static_cast<int>(d.threshold_index);
          sim.add_event(ev);
          ArrivalRecord rec;
          rec.load_bus = static_cast<int>(d.load_bus);
          rec.trigger = SimTime::ns(d.trigger);
          rec.threshold_index = static_cast<int>(d.threshold_index);
          rec.exact = SimTime::ns(d.t_exact);
          rec.perceived = t_sync;
          arrivals.push_back(rec);
        }
      }
      ++sync_steps;
      if (t_sync == scenario.t_end) break;
    }

    send_frame(wr, kFinish, 0, nullptr, 0, 0);
    FrameHeader fh = recv_header(rd);
    if (fh.type != kFinal) throw std::runtime_error("cosim protocol error (expected FINAL)");
    std::string bytes(fh.count, '\0');
    read_all(rd, bytes.data(), fh.count);
    json blob = json::parse(bytes);

    out.delay_trace_csv = blob.at("delay_trace_csv").get<std::string>();
    out.app_events_csv = blob.at("app_events_csv").get<std::string>();
    out.monitoring_csv = blob.at("monitoring_csv").get<std::string>();

    RunReport rep;
    rep.scenario = scenario.name;
    rep.method = "cosim";
    for (auto it = blob.at("pmu_zones").begin(); it != blob.at("pmu_zones").end(); ++it)
      rep.zones[std::stoi(it.key())] = it.value().get<int>();
    for (const auto& b : blob.at("emitted_batches"))
      rep.triggers.push_back(
          TriggerRecord{SimTime::ns(b.at("trigger_ns").get<std::int64_t>()),
                        b.at("threshold_index").get<int>(),
                        SimTime::ns(b.at("decision_ns").get<std::int64_t>())});
    rep.arrivals = std::move(arrivals);
    rep.sync_steps = sync_steps;
    rep.events_fired = blob.at("events_fired").get<std::uint64_t>();
    rep.late_measurements = blob.at("late_measurements").get<std::uint64_t>();

    double min_avg = 1e9;
    std::optional<SimTime> below49;
    int n = model.spec.bus_count();
    for (const auto& p : sim.trajectory().points) {
      double avg = 0.0;
      for (const auto& b : p.buses) avg += b.freq_hz;
      avg /= n;
      if (avg < min_avg) min_avg = avg;
      if (!below49 && avg < 49.0) below49 = p.t;
    }
    rep.min_avg_freq_hz = min_avg;
    rep.avg_freq_below_49_at = below49;

    out.report = std::move(rep);
    out.trajectory = sim.trajectory();
  } catch (...) {
    ::close(wr);
    ::close(rd);
    int status = 0;
    waitpid(pid, &status, 0);
    throw;
  }

  ::close(wr);
  ::close(rd);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw std::runtime_error("cosim network federate failed");

  out.phase_wall_ms["cosim_total"] = std::chrono::duration<double, std::milli>(
                                         std::chrono::steady_clock::now() - t_start)
                                         .count();
  return out;
}

}  // namespace cpsim::orch
