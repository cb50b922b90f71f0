#include "cpsim/grid/model.hpp"

#include <fstream>
#include <sstream>

namespace cpsim::grid {

using cplx = std::complex<double>;

CaseSpec CaseSpec::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid case: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

CaseSpec CaseSpec::parse(const std::string& text, const std::string& origin) {
  CaseSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tag == "base_mva") {
      if (!(ls >> spec.base_mva)) fail("base_mva value");
    } else if (tag == "base_kv") {
      if (!(ls >> spec.base_kv)) fail("base_kv value");
    } else if (tag == "nominal_hz") {
      if (!(ls >> spec.nominal_hz)) fail("nominal_hz value");
    } else if (tag == "bus") {
      BusSpec b;
      if (!(ls >> b.id >> b.p_load_mw >> b.q_load_mvar)) fail("bus fields");
      spec.buses.push_back(b);
    } else if (tag == "branch") {
      BranchSpec br;
      if (!(ls >> br.from >> br.to >> br.r_pu >> br.x_pu >> br.b_pu >> br.tap))
        fail("branch fields");
      spec.branches.push_back(br);
    } else if (tag == "gen") {
      GenSpec g;
      int slack = 0;
      if (!(ls >> g.id >> g.bus >> g.p_mw >> g.v_set_pu >> g.inertia_s >> g.xd_prime_pu >>
            g.damping_pu >> g.droop >> g.tg_s >> g.pmax_pu >> slack))
        fail("gen fields");
      g.slack = slack != 0;
      spec.gens.push_back(g);
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  if (spec.buses.empty()) throw ParseError(origin + ": no buses");
  int n = spec.bus_count();
  for (const auto& b : spec.buses)
    if (b.id < 1 || b.id > n) throw ParseError(origin + ": bus ids must be 1..n contiguous");
  int slacks = 0;
  for (const auto& g : spec.gens) slacks += g.slack ? 1 : 0;
  if (spec.gens.empty() || slacks != 1)
    throw ParseError(origin + ": exactly one slack generator required");
  return spec;
}

Eigen::MatrixXcd build_ybus(const CaseSpec& spec) {
  const int n = spec.bus_count();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : spec.branches) {
    int f = br.from - 1, t = br.to - 1;
    cplx ys = 1.0 / cplx(br.r_pu, br.x_pu);
    cplx bc(0.0, br.b_pu / 2.0);
    double a = br.tap > 0.0 ? br.tap : 1.0;
    y(f, f) += (ys + bc) / (a * a);
    y(t, t) += ys + bc;
    y(f, t) += -ys / a;
    y(t, f) += -ys / a;
  }
  return y;
}

PowerFlowResult solve_power_flow(const CaseSpec& spec, double tol_pu, int max_iter) {
  const int n = spec.bus_count();
  const double sbase = spec.base_mva;
  Eigen::MatrixXcd y = build_ybus(spec);

  // bus classification
  std::vector<int> bus_gen(n, -1);
  int slack_bus = -1;
  for (int gi = 0; gi < static_cast<int>(spec.gens.size()); ++gi) {
    const auto& g = spec.gens[gi];
    bus_gen[g.bus - 1] = gi;
    if (g.slack) slack_bus = g.bus - 1;
  }

  Eigen::VectorXd p_sched = Eigen::VectorXd::Zero(n);  // injections, pu
  Eigen::VectorXd q_sched = Eigen::VectorXd::Zero(n);
  for (const auto& b : spec.buses) {
    p_sched[b.id - 1] -= b.p_load_mw / sbase;
    q_sched[b.id - 1] -= b.q_load_mvar / sbase;
  }
  for (const auto& g : spec.gens)
    if (!g.slack) p_sched[g.bus - 1] += g.p_mw / sbase;

  Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
  for (const auto& g : spec.gens) vm[g.bus - 1] = g.v_set_pu;

  std::vector<int> pq, pv;  // index sets excluding slack
  for (int i = 0; i < n; ++i) {
    if (i == slack_bus) continue;
    if (bus_gen[i] >= 0) pv.push_back(i);
    else pq.push_back(i);
  }
  const int n_p = static_cast<int>(pq.size() + pv.size());
  const int n_q = static_cast<int>(pq.size());

  auto compute_power = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
    for (int i = 0; i < n; ++i) {
      cplx vi = std::polar(vm[i], va[i]);
      cplx s(0, 0);
      for (int k = 0; k < n; ++k) {
        cplx vk = std::polar(vm[k], va[k]);
        s += vi * std::conj(y(i, k) * vk);
      }
      p[i] = s.real();
      q[i] = s.imag();
    }
  };

  Eigen::VectorXd p(n), q(n);
  double max_mis = 0.0;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    compute_power(p, q);
    Eigen::VectorXd mis(n_p + n_q);
    {
      int r = 0;
      for (int i : pv) mis[r++] = p_sched[i] - p[i];
      for (int i : pq) mis[r++] = p_sched[i] - p[i];
      for (int i : pq) mis[r++] = q_sched[i] - q[i];
    }
    max_mis = mis.cwiseAbs().maxCoeff();
    if (max_mis < tol_pu) break;

    // Jacobian (polar, full Newton)
    std::vector<int> ang_idx;  // angle unknowns: pv then pq
    ang_idx.insert(ang_idx.end(), pv.begin(), pv.end());
    ang_idx.insert(ang_idx.end(), pq.begin(), pq.end());
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_p + n_q, n_p + n_q);
    auto dP_dth = [&](int i, int k) {
      if (i == k) return -q[i] - vm[i] * vm[i] * y(i, i).imag();
      cplx vi = std::polar(vm[i], va[i]), vk = std::polar(vm[k], va[k]);
      cplx t = vi * std::conj(y(i, k) * vk);
      return t.imag();
    };
    auto dP_dv = [&](int i, int k) {  // times vm[k]
      if (i == k) return p[i] + vm[i] * vm[i] * y(i, i).real();
      cplx vi = std::polar(vm[i], va[i]), vk = std::polar(vm[k], va[k]);
      cplx t = vi * std::conj(y(i, k) * vk);
      return t.real();
    };
    auto dQ_dth = [&](int i, int k) {
      if (i == k) return p[i] - vm[i] * vm[i] * y(i, i).real();
      cplx vi = std::polar(vm[i], va[i]), vk = std::polar(vm[k], va[k]);
      cplx t = vi * std::conj(y(i, k) * vk);
      return -t.real();
    };
    auto dQ_dv = [&](int i, int k) {  // times vm[k]
      if (i == k) return q[i] - vm[i] * vm[i] * y(i, i).imag();
      cplx vi = std::polar(vm[i], va[i]), vk = std::polar(vm[k], va[k]);
      cplx t = vi * std::conj(y(i, k) * vk);
      return t.imag();
    };
    for (int r = 0; r < n_p; ++r) {
      int i = ang_idx[r];
      for (int c = 0; c < n_p; ++c) jac(r, c) = dP_dth(i, ang_idx[c]);
      for (int c = 0; c < n_q; ++c) jac(r, n_p + c) = dP_dv(i, pq[c]);
    }
    for (int r = 0; r < n_q; ++r) {
      int i = pq[r];
      for (int c = 0; c < n_p; ++c) jac(n_p + r, c) = dQ_dth(i, ang_idx[c]);
      for (int c = 0; c < n_q; ++c) jac(n_p + r, n_p + c) = dQ_dv(i, pq[c]);
    }
    Eigen::VectorXd rhs(n_p + n_q);
    {
      int r = 0;
      for (int i : pv) rhs[r++] = p_sched[i] - p[i];
      for (int i : pq) rhs[r++] = p_sched[i] - p[i];
      for (int i : pq) rhs[r++] = q_sched[i] - q[i];
    }
    Eigen::VectorXd dx = jac.partialPivLu().solve(rhs);
    for (int r = 0; r < n_p; ++r) va[ang_idx[r]] += dx[r];
    for (int r = 0; r < n_q; ++r) vm[pq[r]] *= 1.0 + dx[n_p + r];
  }
  if (max_mis >= tol_pu)
    throw PowerFlowDiverged("power flow did not converge: mismatch " + std::to_string(max_mis));

  compute_power(p, q);
  PowerFlowResult res;
  res.v.resize(n);
  for (int i = 0; i < n; ++i) res.v[i] = std::polar(vm[i], va[i]);
  res.p_gen_mw.resize(spec.gens.size());
  res.q_gen_mvar.resize(spec.gens.size());
  for (int gi = 0; gi < static_cast<int>(spec.gens.size()); ++gi) {
    const auto& g = spec.gens[gi];
    int i = g.bus - 1;
    double pl = 0, ql = 0;
    for (const auto& b : spec.buses)
      if (b.id == g.bus) {
        pl = b.p_load_mw;
        ql = b.q_load_mvar;
      }
    res.p_gen_mw[gi] = p[i] * sbase + pl;
    res.q_gen_mvar[gi] = q[i] * sbase + ql;
  }
  res.max_mismatch_pu = max_mis;
  res.iterations = iter;
  return res;
}

PowerModel load_case(const CaseSpec& spec) {
  PowerModel model;
  model.spec = spec;
  model.ybus = build_ybus(spec);
  model.pf = solve_power_flow(spec);

  const int n = spec.bus_count();
  model.y_load = Eigen::VectorXcd::Zero(n);
  for (const auto& b : spec.buses) {
    if (b.p_load_mw == 0.0 && b.q_load_mvar == 0.0) continue;
    cplx s(b.p_load_mw / spec.base_mva, b.q_load_mvar / spec.base_mva);
    double v2 = std::norm(model.pf.v[b.id - 1]);
    model.y_load[b.id - 1] = std::conj(s) / v2;  // (P - jQ) / |V|^2
  }

  const int m = static_cast<int>(spec.gens.size());
  model.emf_mag.resize(m);
  model.delta0.resize(m);
  model.pm0.resize(m);
  model.total_gen_mw = 0.0;
  for (int gi = 0; gi < m; ++gi) {
    const auto& g = spec.gens[gi];
    cplx v = model.pf.v[g.bus - 1];
    cplx s(model.pf.p_gen_mw[gi] / spec.base_mva, model.pf.q_gen_mvar[gi] / spec.base_mva);
    cplx i_term = std::conj(s / v);
    cplx emf = v + cplx(0.0, g.xd_prime_pu) * i_term;
    model.emf_mag[gi] = std::abs(emf);
    model.delta0[gi] = std::arg(emf);
    model.pm0[gi] = model.pf.p_gen_mw[gi] / spec.base_mva;
    model.total_gen_mw += model.pf.p_gen_mw[gi];
  }
  return model;
}

PowerModel load_case_file(const std::string& path) {
  return load_case(CaseSpec::parse_file(path));
}

}  // namespace cpsim::grid
