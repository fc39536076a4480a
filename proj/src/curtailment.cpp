#include "fairpv/curtailment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace fairpv {

using json = nlohmann::json;

namespace {

std::string tag(const char* kind, int a, int t, int w) {
  return std::string(kind) + "[" + std::to_string(a) + "," + std::to_string(t) + "," + std::to_string(w) + "]";
}

// Range of c_p p + c_q q over the triangle 0 <= p <= p_hat, |q| <= zeta p.
std::pair<double, double> triangle_range(double c_p, double c_q, double p_hat, double zeta) {
  const double hi = p_hat * (c_p + zeta * std::abs(c_q));
  const double lo = p_hat * (c_p - zeta * std::abs(c_q));
  return {std::min(0.0, lo), std::max(0.0, hi)};
}

}  // namespace

void OptimizerConfig::check() const {
  if (!(alpha1 > 0.0)) throw ValidationError("alpha1 must be positive");
  if (!(alpha2 >= 0.0)) throw ValidationError("alpha2 must be non-negative");
  if (segments < 3) throw ValidationError("capability polygon needs at least 3 segments");
  if (v_min && v_max && !(*v_min < *v_max)) throw ValidationError("v_min must be below v_max");
  if (!(coverage_margin >= 0.0)) throw ValidationError("coverage margin must be non-negative");
}

Infeasible::Infeasible(const std::string& what, std::vector<std::pair<std::string, double>> rows)
    : Error(what), worst_rows(std::move(rows)) {}

std::vector<CapabilityCut> build_capability_cuts(double s_max, int segments) {
  if (segments < 3) throw ValidationError("capability polygon needs at least 3 segments");
  std::vector<CapabilityCut> cuts;
  cuts.reserve(static_cast<std::size_t>(2 * segments + 1));
  cuts.push_back({1.0, 0.0, s_max, 0.0});
  for (int l = 1; l <= segments; ++l) {
    const double theta = l * std::numbers::pi / (2.0 * segments);
    const double c = l == segments ? 0.0 : std::cos(theta);
    const double s = std::sin(theta);
    cuts.push_back({c, s, s_max, theta});
    cuts.push_back({c, -s, s_max, theta});
  }
  return cuts;
}

double capability_overshoot(int segments) { return 1.0 / std::cos(std::numbers::pi / (4.0 * segments)) - 1.0; }

DayAheadLP build_day_ahead_lp(const NetworkModel& net, const CLAModel& cla, const ScenarioSet& scen,
                              const OptimizerConfig& cfg) {
  cfg.check();
  validate(scen, net);
  const int nb = net.n_buses();
  if (cla.n_buses() != nb || cla.injection_buses != net.non_slack_buses())
    throw ValidationError("CLA model does not match the network");
  const int n_pv = scen.n_pv(), T = scen.steps, W = scen.n_scenarios();
  if (W == 0) throw ValidationError("scenario set is empty");
  const double v_lo = cfg.v_min.value_or(net.v_min), v_hi = cfg.v_max.value_or(net.v_max);
  const auto plants = net.plants();

  DayAheadLP out;
  out.pv_buses = scen.pv_buses;
  for (const auto& p : plants) out.zeta.push_back(p.zeta());
  for (const auto& s : scen.scenarios) out.mpp.push_back(s.pv_mpp);
  auto& lp = out.lp;
  auto& ix = out.index;
  ix.n_pv = n_pv;
  ix.steps = T;
  ix.n_scenarios = W;
  const std::size_t n_slots = static_cast<std::size_t>(n_pv) * T * W;
  ix.p.assign(n_slots, -1);
  ix.q.assign(n_slots, -1);

  // Extrapolation guard: every injection the LP can choose must sit inside the
  // training box widened by the margin.
  const int n_inj = nb - 1;
  for (int w = 0; w < W; ++w)
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd p_lo = Eigen::VectorXd::Zero(n_inj), p_hi = p_lo, q_lo = p_lo, q_hi = p_lo;
      const auto& s = scen.scenarios[static_cast<std::size_t>(w)];
      for (int j = 0; j < n_pv; ++j) {
        const int k = net.injection_index(scen.pv_buses[static_cast<std::size_t>(j)]);
        const double ph = s.pv_mpp(j, t);
        p_hi(k) += ph;
        q_lo(k) -= out.zeta[static_cast<std::size_t>(j)] * ph;
        q_hi(k) += out.zeta[static_cast<std::size_t>(j)] * ph;
      }
      for (int l = 0; l < scen.n_loads(); ++l) {
        const int k = net.injection_index(scen.load_buses[static_cast<std::size_t>(l)]);
        p_lo(k) -= s.load_p(l, t);
        p_hi(k) -= s.load_p(l, t);
        q_lo(k) -= s.load_q(l, t);
        q_hi(k) -= s.load_q(l, t);
      }
      const auto& r = cla.ranges;
      for (int k = 0; k < n_inj; ++k) {
        const double mp = cfg.coverage_margin * (r.p_max(k) - r.p_min(k)) + 1e-12;
        const double mq = cfg.coverage_margin * (r.q_max(k) - r.q_min(k)) + 1e-12;
        if (p_lo(k) < r.p_min(k) - mp || p_hi(k) > r.p_max(k) + mp || q_lo(k) < r.q_min(k) - mq ||
            q_hi(k) > r.q_max(k) + mq)
          throw CoverageError("scenario " + std::to_string(w) + " step " + std::to_string(t) + ": injections at bus " +
                              std::to_string(cla.injection_buses[static_cast<std::size_t>(k)]) +
                              " leave the CLA training range");
      }
    }

  // Variables.
  for (int w = 0; w < W; ++w)
    for (int j = 0; j < n_pv; ++j)
      for (int t = 0; t < T; ++t) {
        const double ph = scen.scenarios[static_cast<std::size_t>(w)].pv_mpp(j, t);
        if (!(ph > 0.0)) continue;
        const double z = out.zeta[static_cast<std::size_t>(j)];
        const auto s = ix.slot(j, t, w);
        ix.p[s] = lp.add_variable(0.0, ph, -cfg.alpha1, tag("p", j, t, w));
        ix.q[s] = lp.add_variable(-z * ph, z * ph, 0.0, tag("q", j, t, w));
        out.objective_offset += cfg.alpha1 * ph;
      }
  for (int j = 0; j < n_pv; ++j)
    ix.p_bar.push_back(lp.add_variable(0.0, plants[static_cast<std::size_t>(j)].s_max, cfg.alpha1,
                                       "p_bar[" + std::to_string(j) + "]"));
  for (int w = 0; w < W; ++w) ix.gamma.push_back(lp.add_variable(-kInf, kInf, 0.0, "gamma[" + std::to_string(w) + "]"));
  ix.e.assign(static_cast<std::size_t>(n_pv) * W, -1);
  ix.energy.assign(static_cast<std::size_t>(n_pv) * W, 0.0);
  for (int w = 0; w < W; ++w)
    for (int j = 0; j < n_pv; ++j) {
      const double energy = scen.scenarios[static_cast<std::size_t>(w)].pv_mpp.row(j).sum();
      const auto k = static_cast<std::size_t>(w) * n_pv + j;
      ix.energy[k] = energy;
      if (energy > 0.0)
        ix.e[k] = lp.add_variable(0.0, kInf, cfg.alpha2, "e[" + std::to_string(j) + "," + std::to_string(w) + "]");
    }

  // Device rows: capability polygon, power-factor cone, limit coupling.
  for (int j = 0; j < n_pv; ++j) {
    const double z = out.zeta[static_cast<std::size_t>(j)];
    const auto cuts = build_capability_cuts(plants[static_cast<std::size_t>(j)].s_max, cfg.segments);
    for (int w = 0; w < W; ++w)
      for (int t = 0; t < T; ++t) {
        const auto s = ix.slot(j, t, w);
        if (ix.p[s] < 0) continue;
        const double ph = scen.scenarios[static_cast<std::size_t>(w)].pv_mpp(j, t);
        for (std::size_t c = 0; c < cuts.size(); ++c) {
          if (triangle_range(cuts[c].p_coeff, cuts[c].q_coeff, ph, z).second <= cuts[c].rhs) {
            ++out.rows_presolved;
            continue;
          }
          std::vector<std::pair<int, double>> row{{ix.p[s], cuts[c].p_coeff}};
          if (cuts[c].q_coeff != 0.0) row.emplace_back(ix.q[s], cuts[c].q_coeff);
          lp.add_row(std::move(row), Sense::le, cuts[c].rhs, tag("cap", j, t, w) + "#" + std::to_string(c));
        }
        lp.add_row({{ix.q[s], 1.0}, {ix.p[s], -z}}, Sense::le, 0.0, tag("pf_hi", j, t, w));
        lp.add_row({{ix.q[s], -1.0}, {ix.p[s], -z}}, Sense::le, 0.0, tag("pf_lo", j, t, w));
        lp.add_row({{ix.p[s], 1.0}, {ix.p_bar[static_cast<std::size_t>(j)], -1.0}}, Sense::le, 0.0,
                   tag("limit", j, t, w));
      }
  }

  // Voltage rows from the CLA model, loads folded into the right-hand side.
  const double vmax2 = v_hi * v_hi, vmin2 = v_lo * v_lo;
  std::vector<int> pv_slot(static_cast<std::size_t>(n_pv));
  for (int j = 0; j < n_pv; ++j) pv_slot[static_cast<std::size_t>(j)] = net.injection_index(scen.pv_buses[static_cast<std::size_t>(j)]);
  std::vector<std::pair<std::string, double>> impossible;
  for (int w = 0; w < W; ++w) {
    const auto& sc = scen.scenarios[static_cast<std::size_t>(w)];
    for (int t = 0; t < T; ++t) {
      auto fixed = InjectionVector::zeros(n_inj);
      for (int l = 0; l < scen.n_loads(); ++l) {
        const int k = net.injection_index(scen.load_buses[static_cast<std::size_t>(l)]);
        fixed.p(k) -= sc.load_p(l, t);
        fixed.q(k) -= sc.load_q(l, t);
      }
      const Eigen::VectorXd fixed_x = fixed.stacked();
      for (int node : cla.injection_buses) {
        for (Direction dir : {Direction::over, Direction::under}) {
          const auto& c = cla.coeffs(node, dir);
          const double rhs = (dir == Direction::over ? vmax2 : vmin2) - c.evaluate(fixed_x);
          std::vector<std::pair<int, double>> row;
          double lo = 0.0, hi = 0.0;
          for (int j = 0; j < n_pv; ++j) {
            const auto s = ix.slot(j, t, w);
            if (ix.p[s] < 0) continue;
            const int k = pv_slot[static_cast<std::size_t>(j)];
            const double cp = c.a1(k), cq = c.a1(n_inj + k);
            const auto [l, h] = triangle_range(cp, cq, sc.pv_mpp(j, t), out.zeta[static_cast<std::size_t>(j)]);
            lo += l;
            hi += h;
            if (cp != 0.0) row.emplace_back(ix.p[s], cp);
            if (cq != 0.0) row.emplace_back(ix.q[s], cq);
          }
          const std::string name = std::string(dir == Direction::over ? "v_over" : "v_under") + "[" +
                                   std::to_string(node) + "," + std::to_string(t) + "," + std::to_string(w) + "]";
          if (dir == Direction::over) {
            if (hi <= rhs) { ++out.rows_presolved; continue; }
            if (lo > rhs + 1e-9) impossible.emplace_back(name, lo - rhs);
            lp.add_row(std::move(row), Sense::le, rhs, name);
          } else {
            if (lo >= rhs) { ++out.rows_presolved; continue; }
            if (hi < rhs - 1e-9) impossible.emplace_back(name, rhs - hi);
            lp.add_row(std::move(row), Sense::ge, rhs, name);
          }
        }
      }
    }
  }
  if (!impossible.empty()) {
    std::stable_sort(impossible.begin(), impossible.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (impossible.size() > 5) impossible.resize(5);
    throw Infeasible("voltage limits unattainable even with full curtailment", std::move(impossible));
  }

  // Fairness epigraph: e >= gamma - Gamma and e >= Gamma - gamma.
  for (int w = 0; w < W; ++w)
    for (int j = 0; j < n_pv; ++j) {
      const auto k = static_cast<std::size_t>(w) * n_pv + j;
      if (ix.e[k] < 0) continue;
      std::vector<std::pair<int, double>> share;
      for (int t = 0; t < T; ++t)
        if (const int v = ix.p[ix.slot(j, t, w)]; v >= 0) share.emplace_back(v, 1.0 / ix.energy[k]);
      auto up = share, down = share;
      up.emplace_back(ix.e[k], 1.0);
      up.emplace_back(ix.gamma[static_cast<std::size_t>(w)], -1.0);
      lp.add_row(std::move(up), Sense::ge, 0.0, "fair_hi[" + std::to_string(j) + "," + std::to_string(w) + "]");
      for (auto& [v, a] : down) a = -a;
      down.emplace_back(ix.e[k], 1.0);
      down.emplace_back(ix.gamma[static_cast<std::size_t>(w)], 1.0);
      lp.add_row(std::move(down), Sense::ge, 0.0, "fair_lo[" + std::to_string(j) + "," + std::to_string(w) + "]");
    }
  return out;
}

CurtailmentPlan solve_plan(const DayAheadLP& problem, const SimplexOptions& opts) {
  const auto& ix = problem.index;
  const auto sol = solve_lp(problem.lp, opts);
  if (sol.status == LPStatus::infeasible) {
    std::vector<std::pair<std::string, double>> rows;
    for (const auto& [r, v] : most_violated_rows(problem.lp, sol.x, 5))
      rows.emplace_back(problem.lp.rows[static_cast<std::size_t>(r)].name, v);
    throw Infeasible("curtailment LP is infeasible", std::move(rows));
  }
  if (sol.status == LPStatus::unbounded) throw Error("curtailment LP reported unbounded; the model is malformed");

  CurtailmentPlan plan;
  plan.pv_buses = problem.pv_buses;
  plan.p_bar.resize(ix.n_pv);
  for (int j = 0; j < ix.n_pv; ++j) plan.p_bar(j) = sol.x(ix.p_bar[static_cast<std::size_t>(j)]);
  plan.gamma.resize(ix.n_scenarios);
  for (int w = 0; w < ix.n_scenarios; ++w) {
    plan.gamma(w) = sol.x(ix.gamma[static_cast<std::size_t>(w)]);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ix.n_pv, ix.steps), q = p;
    for (int j = 0; j < ix.n_pv; ++j)
      for (int t = 0; t < ix.steps; ++t) {
        const auto s = ix.slot(j, t, w);
        if (ix.p[s] < 0) continue;
        p(j, t) = sol.x(ix.p[s]);
        q(j, t) = sol.x(ix.q[s]);
      }
    plan.dispatch_p.push_back(std::move(p));
    plan.dispatch_q.push_back(std::move(q));
  }
  plan.objective = sol.objective + problem.objective_offset;
  plan.stats = {sol.iterations, problem.lp.n_vars, problem.lp.n_rows(), problem.rows_presolved};

  const double viol = check_feasibility(problem.lp, sol.x);
  if (viol > 1e-7) throw Error("curtailment LP solution violates its rows by " + format_double(viol));
  return plan;
}

std::vector<std::string> check_plan_invariants(const CurtailmentPlan& plan, const NetworkModel& net,
                                               const ScenarioSet& scen, int segments, double tol) {
  std::vector<std::string> bad;
  const auto plants = net.plants();
  const int n_pv = scen.n_pv();
  auto where = [](int j, int t, int w) {
    return " at plant " + std::to_string(j) + " step " + std::to_string(t) + " scenario " + std::to_string(w);
  };
  if (plan.p_bar.size() != n_pv || static_cast<int>(plan.dispatch_p.size()) != scen.n_scenarios() ||
      static_cast<int>(plan.dispatch_q.size()) != scen.n_scenarios()) {
    bad.push_back("plan shape does not match the scenario set");
    return bad;
  }
  for (int j = 0; j < n_pv; ++j) {
    const auto& plant = plants[static_cast<std::size_t>(j)];
    const double z = plant.zeta();
    const auto cuts = build_capability_cuts(plant.s_max, segments);
    if (plan.p_bar(j) < -tol || plan.p_bar(j) > plant.s_max + tol)
      bad.push_back("p_bar outside [0, s_max] at plant " + std::to_string(j));
    for (int w = 0; w < scen.n_scenarios(); ++w) {
      const auto& P = plan.dispatch_p[static_cast<std::size_t>(w)];
      const auto& Q = plan.dispatch_q[static_cast<std::size_t>(w)];
      if (P.rows() != n_pv || P.cols() != scen.steps || Q.rows() != n_pv || Q.cols() != scen.steps) {
        bad.push_back("dispatch shape mismatch in scenario " + std::to_string(w));
        continue;
      }
      const auto& mpp = scen.scenarios[static_cast<std::size_t>(w)].pv_mpp;
      for (int t = 0; t < scen.steps; ++t) {
        const double p = P(j, t), q = Q(j, t);
        if (p < -tol || p > mpp(j, t) + tol) bad.push_back("dispatch outside [0, mpp]" + where(j, t, w));
        if (p > plan.p_bar(j) + tol) bad.push_back("dispatch above the generation limit" + where(j, t, w));
        if (std::abs(q) > z * p + tol) bad.push_back("power factor below minimum" + where(j, t, w));
        for (const auto& c : cuts)
          if (c.p_coeff * p + c.q_coeff * q > c.rhs + tol) {
            bad.push_back("capability cut violated" + where(j, t, w));
            break;
          }
      }
    }
  }
  return bad;
}

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& rows, Eigen::Index n_rows) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n_rows)
    throw ValidationError("plan file: dispatch row count mismatch");
  const auto n_cols = n_rows ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != n_cols) throw ValidationError("plan file: ragged dispatch matrix");
    for (Eigen::Index c = 0; c < n_cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

std::string plan_to_json(const CurtailmentPlan& plan, const NetworkModel& net, const OptimizerConfig& cfg,
                         const Provenance& prov, bool include_dispatch) {
  json doc;
  doc["config_hash"] = prov.config_hash;
  doc["seed"] = prov.seed;
  doc["alpha1"] = cfg.alpha1;
  doc["alpha2"] = cfg.alpha2;
  doc["segments"] = cfg.segments;
  doc["pv_buses"] = plan.pv_buses;
  json kw = json::array(), pu = json::array();
  for (Eigen::Index j = 0; j < plan.p_bar.size(); ++j) {
    kw.push_back(plan.p_bar(j) * net.s_base_kva);
    pu.push_back(plan.p_bar(j));
  }
  doc["p_bar_kw"] = std::move(kw);
  doc["p_bar_pu"] = std::move(pu);
  json gamma = json::array();
  for (Eigen::Index w = 0; w < plan.gamma.size(); ++w) gamma.push_back(plan.gamma(w));
  doc["gamma"] = std::move(gamma);
  doc["objective"] = plan.objective;
  doc["solver"] = {{"iterations", plan.stats.iterations},
                   {"n_vars", plan.stats.n_vars},
                   {"n_rows", plan.stats.n_rows},
                   {"rows_presolved", plan.stats.rows_presolved}};
  if (include_dispatch) {
    json p = json::array(), q = json::array();
    for (std::size_t w = 0; w < plan.dispatch_p.size(); ++w) {
      p.push_back(matrix_json(plan.dispatch_p[w]));
      q.push_back(matrix_json(plan.dispatch_q[w]));
    }
    doc["dispatch_p_pu"] = std::move(p);
    doc["dispatch_q_pu"] = std::move(q);
  }
  return doc.dump(1) + "\n";
}

CurtailmentPlan plan_from_json(std::string_view text, const NetworkModel& net) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("plan file: ") + e.what());
  }
  try {
    CurtailmentPlan plan;
    plan.pv_buses = doc.at("pv_buses").get<std::vector<int>>();
    if (plan.pv_buses != net.pv_buses()) throw ValidationError("plan file: PV buses do not match the network");
    const auto pu = doc.at("p_bar_pu").get<std::vector<double>>();
    plan.p_bar = Eigen::Map<const Eigen::VectorXd>(pu.data(), static_cast<Eigen::Index>(pu.size()));
    const auto g = doc.at("gamma").get<std::vector<double>>();
    plan.gamma = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    plan.objective = doc.at("objective").get<double>();
    const auto& st = doc.at("solver");
    plan.stats = {st.at("iterations").get<int>(), st.at("n_vars").get<int>(), st.at("n_rows").get<int>(),
                  st.at("rows_presolved").get<int>()};
    if (!doc.contains("dispatch_p_pu") || !doc.contains("dispatch_q_pu"))
      throw ValidationError("plan file has no dispatch arrays");
    const auto n_pv = static_cast<Eigen::Index>(plan.pv_buses.size());
    for (const auto& m : doc.at("dispatch_p_pu")) plan.dispatch_p.push_back(json_matrix(m, n_pv));
    for (const auto& m : doc.at("dispatch_q_pu")) plan.dispatch_q.push_back(json_matrix(m, n_pv));
    if (plan.dispatch_p.size() != plan.dispatch_q.size() ||
        static_cast<Eigen::Index>(plan.dispatch_p.size()) != plan.gamma.size())
      throw ValidationError("plan file: scenario count mismatch");
    return plan;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan file: ") + e.what());
  }
}

CurtailmentPlan load_plan(const std::filesystem::path& path, const NetworkModel& net) {
  if (!std::filesystem::exists(path)) throw Error("plan file not found: " + path.string());
  return plan_from_json(read_text_file(path), net);
}

}  // namespace fairpv
