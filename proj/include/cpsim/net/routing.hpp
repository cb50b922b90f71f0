#pragma once

#include <cstdint>
#include <vector>

#include "cpsim/net/topology.hpp"

namespace cpsim::net {

/// Static next-hop table over the up links.
///
/// Metric per link: propagation delay plus the serialization time of one
/// standard-size packet, so "nearest" favors few, fast hops. Ties between
/// equal-cost neighbors resolve to the smallest neighbor bus id.
class RoutingTable {
 public:
  RoutingTable() = default;
  RoutingTable(int n_buses) : n_(n_buses), next_((n_buses + 1) * (n_buses + 1), -1) {}

  int next_hop(int from, int dst) const { return next_[from * (n_ + 1) + dst]; }
  void set_next_hop(int from, int dst, int hop) { next_[from * (n_ + 1) + dst] = hop; }

  /// Total path metric in ns from a bus to a destination (-1 if unreachable).
  std::int64_t cost_ns(int from, int dst) const { return cost_.empty() ? -1 : cost_[from * (n_ + 1) + dst]; }
  void set_cost(int from, int dst, std::int64_t c) {
    if (cost_.empty()) cost_.assign((n_ + 1) * (n_ + 1), -1);
    cost_[from * (n_ + 1) + dst] = c;
  }

  bool reachable(int from, int dst) const { return from == dst || next_hop(from, dst) >= 0; }

 private:
  int n_ = 0;
  std::vector<int> next_;
  std::vector<std::int64_t> cost_;
};

RoutingTable compute_routes(const Topology& topo);

}  // namespace cpsim::net
