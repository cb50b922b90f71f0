#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpsim/time.hpp"

namespace cpsim::net {

inline constexpr double kLightSpeedKmPerS = 299792.458;

struct DisconnectedGraph : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingImpedance : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownLink : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Physical-layer parameters of the communication plane.
struct NetParams {
  std::int64_t bandwidth_bps = 800'000;
  std::int64_t packet_size_bytes = 500;
  double refractive_index = 1.5;
  double ohm_per_km = 0.3;
};

/// One full-duplex link, installed in parallel to a grid branch.
/// Length is derived from the branch series reactance at ohm_per_km;
/// propagation delay from length and the fiber refractive index.
struct Link {
  int bus_a = 0;
  int bus_b = 0;
  double length_km = 0.0;
  SimTime prop_delay;
  std::int64_t bandwidth_bps = 0;
  bool up = true;
};

struct BranchReactance {
  int from = 0;
  int to = 0;
  double x_ohm = 0.0;
};

/// Routers (one per bus) plus the link set. Hosts attach via ideal
/// zero-delay links and are managed by the Network runtime.
class Topology {
 public:
  Topology(int n_buses, const std::vector<BranchReactance>& branches, const NetParams& params);

  int bus_count() const { return n_buses_; }
  const std::vector<Link>& links() const { return links_; }
  std::vector<Link>& links() { return links_; }
  const NetParams& params() const { return params_; }

  /// Index into links() for the a--b pair (either order); throws UnknownLink.
  int link_index(int bus_a, int bus_b) const;

  /// Neighbors of a bus over links currently up, ascending bus id.
  std::vector<std::pair<int, int>> up_neighbors(int bus) const;  // (neighbor, link index)

  /// True when every bus can reach every other over up links.
  bool connected() const;

  /// CSV: bus_a,bus_b,length_km,prop_delay_ns,bandwidth_bps
  std::string to_csv() const;

 private:
  int n_buses_;
  NetParams params_;
  std::vector<Link> links_;
  std::map<std::pair<int, int>, int> index_;  // normalized (min,max) -> link index
};

/// Propagation delay over length_km of fiber, half-up to ns.
SimTime propagation_delay(double length_km, double refractive_index);

}  // namespace cpsim::net
