#include "cpsim/orch/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace cpsim::orch {

SimTime DelayModel::interp(const std::map<std::int64_t, DelayEntry>& series, SimTime at) {
  if (series.empty()) throw UnknownPath("empty delay series");
  auto it = series.lower_bound(at.ticks());
  if (it != series.end() && it->first == at.ticks()) return it->second.mean;
  if (it == series.begin()) return it->second.mean;              // clamp low
  if (it == series.end()) return std::prev(it)->second.mean;     // clamp high
  auto hi = it;
  auto lo = std::prev(it);
  double t0 = static_cast<double>(lo->first);
  double t1 = static_cast<double>(hi->first);
  double d0 = static_cast<double>(lo->second.mean.ticks());
  double d1 = static_cast<double>(hi->second.mean.ticks());
  double v = d0 + (d1 - d0) * ((static_cast<double>(at.ticks()) - t0) / (t1 - t0));
  return SimTime::ns(std::llround(v));
}

SimTime DelayModel::delay(const PathKey& path, SimTime trigger) const {
  auto it = entries_.find(path);
  if (it == entries_.end())
    throw UnknownPath("no delay entries for path " + path.src + "->" + path.dst);
  return interp(it->second, trigger);
}

SimTime DelayModel::decision_latency(SimTime tau) const {
  if (decision_.empty()) return SimTime::ns(0);
  return interp(decision_, tau);
}

std::vector<PathKey> DelayModel::paths() const {
  std::vector<PathKey> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<SimTime> DelayModel::triggers(const PathKey& path) const {
  std::vector<SimTime> out;
  auto it = entries_.find(path);
  if (it == entries_.end()) return out;
  for (const auto& [t, e] : it->second) out.push_back(SimTime::ns(t));
  return out;
}

std::string DelayModel::to_csv() const {
  std::ostringstream os;
  os << "src,dst,trigger_timestamp_ns,mean_delay_ns,support_points\n";
  for (const auto& [path, series] : entries_) {
    for (const auto& [t, e] : series)
      os << path.src << ',' << path.dst << ',' << t << ',' << e.mean.ticks() << ','
         << e.support.size() << '\n';
  }
  for (const auto& [t, e] : decision_)
    os << "meas,decision," << t << ',' << e.mean.ticks() << ',' << e.support.size() << '\n';
  return os.str();
}

double convergence_norm_ms(const DelayModel& a, const DelayModel& b) {
  auto pa = a.paths();
  auto pb = b.paths();
  if (pa != pb)
    throw DisjointPaths("delay models cover different path sets (" + std::to_string(pa.size()) +
                        " vs " + std::to_string(pb.size()) + ")");
  double worst = 0.0;
  for (const auto& path : pa) {
    std::set<std::int64_t> grid;
    for (auto t : a.triggers(path)) grid.insert(t.ticks());
    for (auto t : b.triggers(path)) grid.insert(t.ticks());
    for (auto t : grid) {
      double da = static_cast<double>(a.delay(path, SimTime::ns(t)).ticks());
      double db = static_cast<double>(b.delay(path, SimTime::ns(t)).ticks());
      worst = std::max(worst, std::abs(da - db));
    }
  }
  return worst * 1e-6;
}

}  // namespace cpsim::orch
