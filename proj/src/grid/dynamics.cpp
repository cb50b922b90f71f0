#include "cpsim/grid/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cpsim::grid {

using cplx = std::complex<double>;

std::string Trajectory::to_csv() const {
  std::ostringstream os;
  os << "t_ns,bus,v_pu,theta_rad,f_hz\n";
  for (const auto& p : points) {
    for (int b = 0; b < static_cast<int>(p.buses.size()); ++b) {
      const auto& s = p.buses[b];
      os << p.t.ticks() << ',' << (b + 1) << ',' << s.v_mag << ',' << s.theta << ',' << s.freq_hz
         << '\n';
    }
  }
  return os.str();
}

GridSimulation::GridSimulation(const PowerModel& model, GridOptions options)
    : model_(model), opt_(options) {
  const int n = model_.spec.bus_count();
  const int m = model_.gen_count();
  omega_s_ = 2.0 * std::numbers::pi * model_.spec.nominal_hz;

  gen_active_.assign(m, 1);
  load_scale_ = Eigen::VectorXd::Ones(n);
  st_.delta = model_.delta0;
  st_.domega = Eigen::VectorXd::Zero(m);
  st_.pm = model_.pm0;
  st_.wash.resize(n);
  rebuild_admittance();

  // washout states start at the relative bus angles: zero initial output
  Eigen::VectorXcd v = solve_network(st_);
  last_theta_.resize(n);
  double coi = 0.0, hsum = 0.0;
  for (int g = 0; g < m; ++g) {
    coi += model_.spec.gens[g].inertia_s * st_.delta[g];
    hsum += model_.spec.gens[g].inertia_s;
  }
  coi /= hsum;
  for (int b = 0; b < n; ++b) {
    last_theta_[b] = std::arg(v[b]) - coi;
    st_.wash[b] = last_theta_[b];
  }
  start_ = now_;
}

void GridSimulation::rebuild_admittance() {
  const int n = model_.spec.bus_count();
  y_aug_ = model_.ybus;
  for (int b = 0; b < n; ++b) y_aug_(b, b) += model_.y_load[b] * load_scale_[b];
  for (int g = 0; g < model_.gen_count(); ++g) {
    if (!gen_active_[g]) continue;
    int b = model_.spec.gens[g].bus - 1;
    y_aug_(b, b) += 1.0 / cplx(0.0, model_.spec.gens[g].xd_prime_pu);
  }
  lu_.compute(y_aug_);
}

Eigen::VectorXcd GridSimulation::solve_network(const State& s) const {
  const int n = model_.spec.bus_count();
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);
  for (int g = 0; g < model_.gen_count(); ++g) {
    if (!gen_active_[g]) continue;
    const auto& gen = model_.spec.gens[g];
    cplx emf = std::polar(model_.emf_mag[g], s.delta[g]);
    inj[gen.bus - 1] += emf / cplx(0.0, gen.xd_prime_pu);
  }
  return lu_.solve(inj);
}

double GridSimulation::coi_speed_pu() const {
  double num = 0.0, den = 0.0;
  for (int g = 0; g < model_.gen_count(); ++g) {
    if (!gen_active_[g]) continue;
    num += model_.spec.gens[g].inertia_s * st_.domega[g];
    den += model_.spec.gens[g].inertia_s;
  }
  return den > 0 ? num / den : 0.0;
}

double GridSimulation::coi_angle(const State& s) const {
  double num = 0.0, den = 0.0;
  for (int g = 0; g < model_.gen_count(); ++g) {
    if (!gen_active_[g]) continue;
    num += model_.spec.gens[g].inertia_s * s.delta[g];
    den += model_.spec.gens[g].inertia_s;
  }
  return den > 0 ? num / den : 0.0;
}

double GridSimulation::unwrapped_rel_theta(int b, const Eigen::VectorXcd& v,
                                           double coi_delta) const {
  double wrapped = std::arg(v[b]) - coi_delta;
  while (wrapped - last_theta_[b] > std::numbers::pi) wrapped -= 2.0 * std::numbers::pi;
  while (wrapped - last_theta_[b] < -std::numbers::pi) wrapped += 2.0 * std::numbers::pi;
  last_theta_[b] = wrapped;
  return wrapped;
}

GridSimulation::State GridSimulation::derivatives(const State& s) const {
  const int n = model_.spec.bus_count();
  const int m = model_.gen_count();
  State d;
  d.delta.setZero(m);
  d.domega.setZero(m);
  d.pm.setZero(m);
  d.wash.setZero(n);

  Eigen::VectorXcd v = solve_network(s);
  double coi_delta = coi_angle(s);

  for (int g = 0; g < m; ++g) {
    if (!gen_active_[g]) continue;
    const auto& gen = model_.spec.gens[g];
    cplx emf = std::polar(model_.emf_mag[g], s.delta[g]);
    cplx i_gen = (emf - v[gen.bus - 1]) / cplx(0.0, gen.xd_prime_pu);
    double pe = (emf * std::conj(i_gen)).real();
    d.delta[g] = omega_s_ * s.domega[g];
    d.domega[g] = (s.pm[g] - pe - gen.damping_pu * s.domega[g]) / (2.0 * gen.inertia_s);
    if (opt_.governors_enabled && gen.tg_s > 0.0) {
      double target = model_.pm0[g] - s.domega[g] * model_.pm0[g] / gen.droop;
      // freeze integration against the limits (simple anti-windup)
      double dpm = (target - s.pm[g]) / gen.tg_s;
      if ((s.pm[g] >= gen.pmax_pu && dpm > 0) || (s.pm[g] <= 0.0 && dpm < 0)) dpm = 0.0;
      d.pm[g] = dpm;
    }
  }

  for (int b = 0; b < n; ++b) {
    // unwrap against the last evaluation; consecutive evaluations are close
    double theta = unwrapped_rel_theta(b, v, coi_delta);
    d.wash[b] = (theta - s.wash[b]) / opt_.washout_time_s;
  }
  return d;
}

void GridSimulation::rk4_step(double h_s) {
  auto axpy = [](const State& a, double h, const State& k) {
    State r;
    r.delta = a.delta + h * k.delta;
    r.domega = a.domega + h * k.domega;
    r.pm = a.pm + h * k.pm;
    r.wash = a.wash + h * k.wash;
    return r;
  };
  State k1 = derivatives(st_);
  State k2 = derivatives(axpy(st_, h_s / 2, k1));
  State k3 = derivatives(axpy(st_, h_s / 2, k2));
  State k4 = derivatives(axpy(st_, h_s, k3));
  st_.delta += (h_s / 6.0) * (k1.delta + 2 * k2.delta + 2 * k3.delta + k4.delta);
  st_.domega += (h_s / 6.0) * (k1.domega + 2 * k2.domega + 2 * k3.domega + k4.domega);
  st_.pm += (h_s / 6.0) * (k1.pm + 2 * k2.pm + 2 * k3.pm + k4.pm);
  st_.wash += (h_s / 6.0) * (k1.wash + 2 * k2.wash + 2 * k3.wash + k4.wash);
  for (int g = 0; g < model_.gen_count(); ++g) {
    const auto& gen = model_.spec.gens[g];
    st_.pm[g] = std::clamp(st_.pm[g], 0.0, gen.pmax_pu);
  }

  if (!st_.domega.allFinite() || st_.domega.cwiseAbs().maxCoeff() > 0.5)
    throw IntegrationDiverged("state norm explosion", now_.seconds());
}

void GridSimulation::add_event(const GridEvent& ev) {
  if (ev.at < now_) throw std::runtime_error("grid event scheduled in the past");
  auto it = std::upper_bound(pending_.begin(), pending_.end(), ev,
                             [](const GridEvent& a, const GridEvent& b) { return a.at < b.at; });
  pending_.insert(it, ev);
}

void GridSimulation::set_sample_times(
    std::vector<SimTime> times, std::function<void(SimTime, const std::vector<BusSample>&)> sampler) {
  sample_times_ = std::move(times);
  std::sort(sample_times_.begin(), sample_times_.end());
  sampler_ = std::move(sampler);
  next_sample_ = 0;
  while (next_sample_ < sample_times_.size() && sample_times_[next_sample_] < now_) ++next_sample_;
}

void GridSimulation::apply_events_at(SimTime t) {
  while (!pending_.empty() && pending_.front().at == t) {
    GridEvent ev = pending_.front();
    pending_.erase(pending_.begin());
    const int n = model_.spec.bus_count();
    Eigen::VectorXd theta_pre(n);
    if (opt_.event_phase_reanchor) {
      Eigen::VectorXcd v = solve_network(st_);
      double coi = coi_angle(st_);
      for (int b = 0; b < n; ++b) theta_pre[b] = unwrapped_rel_theta(b, v, coi);
    }
    if (ev.kind == GridEvent::Kind::GeneratorTrip) {
      int gi = -1;
      for (int g = 0; g < model_.gen_count(); ++g)
        if (model_.spec.gens[g].id == ev.gen_id) gi = g;
      if (gi < 0) throw UnknownTarget("unknown generator " + std::to_string(ev.gen_id));
      if (!gen_active_[gi]) throw AlreadyTripped("generator " + std::to_string(ev.gen_id));
      gen_active_[gi] = 0;
    } else {
      if (ev.fraction < 0.0 || ev.fraction >= 1.0)
        throw std::runtime_error("load reduction fraction out of range");
      int b = ev.load_bus - 1;
      if (b < 0 || b >= model_.spec.bus_count() || model_.y_load[b] == cplx(0.0, 0.0))
        throw UnknownTarget("no load at bus " + std::to_string(ev.load_bus));
      load_scale_[b] *= (1.0 - ev.fraction);
    }
    traj_.applied.push_back(ev);
    rebuild_admittance();
    if (opt_.event_phase_reanchor) {
      Eigen::VectorXcd v = solve_network(st_);
      double coi = coi_angle(st_);
      for (int b = 0; b < n; ++b)
        st_.wash[b] += unwrapped_rel_theta(b, v, coi) - theta_pre[b];
    }
    record_point(t);
  }
}

std::vector<BusSample> GridSimulation::sample_now() {
  const int n = model_.spec.bus_count();
  Eigen::VectorXcd v = solve_network(st_);
  double coi = coi_speed_pu();
  double coi_delta = coi_angle(st_);
  bool floor = opt_.startup_coi_floor &&
               (now_ - start_).seconds() < 2.0 * opt_.washout_time_s;
  std::vector<BusSample> out(n);
  for (int b = 0; b < n; ++b) {
    out[b].v_mag = std::abs(v[b]);
    out[b].theta = std::arg(v[b]);
    double f = model_.spec.nominal_hz * (1.0 + coi);
    if (!floor) {
      double theta = unwrapped_rel_theta(b, v, coi_delta);
      double rate = (theta - st_.wash[b]) / opt_.washout_time_s;  // rad/s
      f += rate / (2.0 * std::numbers::pi);
    }
    out[b].freq_hz = f;
  }
  return out;
}

double GridSimulation::avg_frequency_now() {
  auto s = sample_now();
  double sum = 0.0;
  for (const auto& b : s) sum += b.freq_hz;
  return sum / static_cast<double>(s.size());
}

void GridSimulation::record_point(SimTime t) {
  traj_.points.push_back(TrajectoryPoint{t, sample_now()});
}

void GridSimulation::perturb_state(const Eigen::VectorXd& d_delta,
                                   const Eigen::VectorXd& d_domega) {
  st_.delta += d_delta;
  st_.domega += d_domega;
  // keep the washout anchored to the perturbed angles: frequency estimates
  // start from the new trajectory instead of seeing a phase step
  Eigen::VectorXcd v = solve_network(st_);
  double coi = coi_angle(st_);
  for (int b = 0; b < model_.spec.bus_count(); ++b) {
    last_theta_[b] = std::arg(v[b]) - coi;
    st_.wash[b] = last_theta_[b];
  }
}

bool GridSimulation::generator_active(int gen_id) const {
  for (int g = 0; g < model_.gen_count(); ++g)
    if (model_.spec.gens[g].id == gen_id) return gen_active_[g] != 0;
  throw UnknownTarget("unknown generator " + std::to_string(gen_id));
}

void GridSimulation::advance_to(SimTime t) {
  if (t < now_) throw std::runtime_error("grid advance_to into the past");
  // Handle any samples/events scheduled exactly at the current instant first.
  while (now_ <= t) {
    // stop points at now_: sample before events (an event at t affects > t only)
    while (next_sample_ < sample_times_.size() && sample_times_[next_sample_] == now_) {
      auto s = sample_now();
      traj_.points.push_back(TrajectoryPoint{now_, s});
      if (sampler_) sampler_(now_, s);
      ++next_sample_;
    }
    apply_events_at(now_);
    if (now_ == t) break;

    SimTime stop = t;
    if (!pending_.empty() && pending_.front().at < stop) stop = pending_.front().at;
    if (next_sample_ < sample_times_.size() && sample_times_[next_sample_] < stop)
      stop = sample_times_[next_sample_];

    // step to `stop`, realigning to the global step lattice
    while (now_ < stop) {
      std::int64_t step_ns = opt_.step.ticks();
      std::int64_t lattice_next = ((now_.ticks() / step_ns) + 1) * step_ns;
      SimTime target = std::min(stop, SimTime::ns(lattice_next));
      double h = (target - now_).seconds();
      rk4_step(h);
      now_ = target;
    }
  }
}

Trajectory integrate(const PowerModel& model, SimTime t_end, const std::vector<GridEvent>& events,
                     const std::vector<SimTime>& sample_times, GridOptions options) {
  GridSimulation sim(model, options);
  for (const auto& ev : events) sim.add_event(ev);
  sim.set_sample_times(sample_times, {});
  sim.advance_to(t_end);
  return sim.trajectory();
}

}  // namespace cpsim::grid
