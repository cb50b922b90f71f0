#include "cpsim/net/routing.hpp"

#include <limits>
#include <queue>

namespace cpsim::net {

namespace {

std::int64_t link_cost_ns(const Link& l, const NetParams& p) {
  return l.prop_delay.ticks() + serialization_time(p.packet_size_bytes, l.bandwidth_bps).ticks();
}

}  // namespace

RoutingTable compute_routes(const Topology& topo) {
  const int n = topo.bus_count();
  RoutingTable table(n);
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();

  // Dijkstra from each destination; next_hop(u, dst) is the equal-cost
  // neighbor with the smallest bus id, which keeps routes loop-free and
  // reproducible.
  for (int dst = 1; dst <= n; ++dst) {
    std::vector<std::int64_t> dist(n + 1, kInf);
    dist[dst] = 0;
    using Item = std::pair<std::int64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.push({0, dst});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (auto [v, li] : topo.up_neighbors(u)) {
        std::int64_t nd = d + link_cost_ns(topo.links()[li], topo.params());
        if (nd < dist[v]) {
          dist[v] = nd;
          pq.push({nd, v});
        }
      }
    }
    for (int u = 1; u <= n; ++u) {
      if (u == dst || dist[u] == kInf) continue;
      int best = -1;
      std::int64_t best_cost = kInf;
      for (auto [v, li] : topo.up_neighbors(u)) {  // ascending v: ties keep first
        if (dist[v] == kInf) continue;
        std::int64_t c = link_cost_ns(topo.links()[li], topo.params()) + dist[v];
        if (c < best_cost) {
          best_cost = c;
          best = v;
        }
      }
      table.set_next_hop(u, dst, best);
      table.set_cost(u, dst, best_cost == kInf ? -1 : best_cost);
    }
  }
  return table;
}

}  // namespace cpsim::net
