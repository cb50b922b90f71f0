#include "cpsim/net/topology.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cpsim::net {

SimTime propagation_delay(double length_km, double refractive_index) {
  double seconds = length_km * refractive_index / kLightSpeedKmPerS;
  return SimTime::from_delay_seconds(seconds);
}

Topology::Topology(int n_buses, const std::vector<BranchReactance>& branches,
                   const NetParams& params)
    : n_buses_(n_buses), params_(params) {
  links_.reserve(branches.size());
  for (const auto& br : branches) {
    if (br.from < 1 || br.from > n_buses_ || br.to < 1 || br.to > n_buses_)
      throw MissingImpedance("branch endpoint out of range: " + std::to_string(br.from) + "-" +
                             std::to_string(br.to));
    if (!(br.x_ohm >= 0.0) || !std::isfinite(br.x_ohm))
      throw MissingImpedance("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                             " has no usable series reactance");
    Link link;
    link.bus_a = br.from;
    link.bus_b = br.to;
    link.length_km = br.x_ohm / params.ohm_per_km;
    link.prop_delay = propagation_delay(link.length_km, params.refractive_index);
    link.bandwidth_bps = params.bandwidth_bps;
    int idx = static_cast<int>(links_.size());
    links_.push_back(link);
    index_[{std::min(br.from, br.to), std::max(br.from, br.to)}] = idx;
  }
  if (!connected())
    throw DisconnectedGraph("communication graph is not connected before failures");
}

int Topology::link_index(int bus_a, int bus_b) const {
  auto it = index_.find({std::min(bus_a, bus_b), std::max(bus_a, bus_b)});
  if (it == index_.end())
    throw UnknownLink("no link between buses " + std::to_string(bus_a) + " and " +
                      std::to_string(bus_b));
  return it->second;
}

std::vector<std::pair<int, int>> Topology::up_neighbors(int bus) const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < static_cast<int>(links_.size()); ++i) {
    const Link& l = links_[i];
    if (!l.up) continue;
    if (l.bus_a == bus) out.emplace_back(l.bus_b, i);
    else if (l.bus_b == bus) out.emplace_back(l.bus_a, i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool Topology::connected() const {
  if (n_buses_ == 0) return true;
  std::vector<char> seen(n_buses_ + 1, 0);
  std::vector<int> stack{1};
  seen[1] = 1;
  int count = 1;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (auto [nb, li] : up_neighbors(b)) {
      if (!seen[nb]) {
        seen[nb] = 1;
        ++count;
        stack.push_back(nb);
      }
    }
  }
  return count == n_buses_;
}

std::string Topology::to_csv() const {
  std::ostringstream os;
  os << "bus_a,bus_b,length_km,prop_delay_ns,bandwidth_bps\n";
  for (const auto& l : links_) {
    os << l.bus_a << ',' << l.bus_b << ',' << l.length_km << ',' << l.prop_delay.ticks() << ','
       << l.bandwidth_bps << '\n';
  }
  return os.str();
}

}  // namespace cpsim::net
