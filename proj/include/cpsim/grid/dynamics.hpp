#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cpsim/grid/model.hpp"
#include "cpsim/time.hpp"

namespace cpsim::grid {

struct GridEvent {
  SimTime at;
  enum class Kind { GeneratorTrip, LoadReduction } kind = Kind::GeneratorTrip;
  int gen_id = 0;        // GeneratorTrip
  int load_bus = 0;      // LoadReduction
  double fraction = 0.0; // LoadReduction
  int threshold_index = -1;
};

struct BusSample {
  double v_mag = 1.0;
  double theta = 0.0;
  double freq_hz = 50.0;
};

struct TrajectoryPoint {
  SimTime t;
  std::vector<BusSample> buses;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  std::vector<GridEvent> applied;
  std::string to_csv() const;
};

struct GridOptions {
  SimTime step = SimTime::ms(1);
  double washout_time_s = 0.1;
  bool governors_enabled = true;
  /// During the first two washout time constants the per-bus estimate is
  /// replaced by the center-of-inertia value to avoid filter start-up spikes.
  bool startup_coi_floor = true;
  /// Shift the washout states by the algebraic angle jump when a discrete
  /// event is applied, so the frequency estimate tracks rotor motion and not
  /// the instantaneous phase step (mirrors phase-step rejection in PMUs).
  bool event_phase_reanchor = true;
};

/// Fixed-step RK4 simulation of classical machines + first-order governors
/// over the algebraic network. Steps split exactly at event and sample
/// times and realign to the global step lattice afterwards.
class GridSimulation {
 public:
  GridSimulation(const PowerModel& model, GridOptions options = {});

  SimTime now() const { return now_; }
  const PowerModel& model() const { return model_; }

  /// Queues a future discrete event (must be >= now).
  void add_event(const GridEvent& ev);

  /// Sampling instants (e.g. the PMU grid); sampler runs at each, before any
  /// event at the same instant is applied.
  void set_sample_times(std::vector<SimTime> times,
                        std::function<void(SimTime, const std::vector<BusSample>&)> sampler);

  /// Integrates to t (inclusive of events/samples at t).
  void advance_to(SimTime t);

  std::vector<BusSample> sample_now();
  double avg_frequency_now();
  double coi_speed_pu() const;

  /// Rotor angles and speed deviations (initial-condition studies, audits).
  const Eigen::VectorXd& rotor_angles() const { return st_.delta; }
  const Eigen::VectorXd& speed_deviations() const { return st_.domega; }

  /// Shifts the current rotor state in place (initial-condition experiments).
  void perturb_state(const Eigen::VectorXd& d_delta, const Eigen::VectorXd& d_domega);

  const Trajectory& trajectory() const { return traj_; }
  bool generator_active(int gen_id) const;

 private:
  struct State {
    Eigen::VectorXd delta;  // rotor angles
    Eigen::VectorXd domega; // speed deviations, pu
    Eigen::VectorXd pm;     // governor mechanical power, pu
    Eigen::VectorXd wash;   // per-bus washout filter states
  };

  void rebuild_admittance();
  Eigen::VectorXcd solve_network(const State& s) const;
  double coi_angle(const State& s) const;
  double unwrapped_rel_theta(int b, const Eigen::VectorXcd& v, double coi_delta) const;
  State derivatives(const State& s) const;
  void rk4_step(double h_s);
  void apply_events_at(SimTime t);
  void record_point(SimTime t);

  PowerModel model_;
  GridOptions opt_;
  SimTime now_;
  SimTime start_;
  State st_;
  std::vector<char> gen_active_;
  Eigen::VectorXd load_scale_;  // per-bus multiplier on the load admittance
  Eigen::MatrixXcd y_aug_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  std::vector<GridEvent> pending_;  // time-sorted
  std::vector<SimTime> sample_times_;
  std::size_t next_sample_ = 0;
  std::function<void(SimTime, const std::vector<BusSample>&)> sampler_;
  Trajectory traj_;
  mutable Eigen::VectorXd last_theta_;  // unwrap reference for relative bus angles
  double omega_s_;
};

/// Convenience wrapper: runs a fresh simulation over [state0, t_end] with the
/// given events, sampling on the tick grid.
Trajectory integrate(const PowerModel& model, SimTime t_end, const std::vector<GridEvent>& events,
                     const std::vector<SimTime>& sample_times, GridOptions options = {});

}  // namespace cpsim::grid
