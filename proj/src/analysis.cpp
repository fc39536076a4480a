#include "fairpv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fairpv/parallel.hpp"

namespace fairpv {

using json = nlohmann::json;

namespace {

ScenarioFairness fairness_of(const Eigen::MatrixXd& dispatch, const Eigen::MatrixXd& mpp) {
  ScenarioFairness f;
  const Eigen::VectorXd produced = dispatch.rowwise().sum();
  const Eigen::VectorXd available = mpp.rowwise().sum();
  std::vector<double> beta;
  for (Eigen::Index j = 0; j < available.size(); ++j)
    if (available(j) > 0.0) {
      beta.push_back(produced(j) / available(j));
      f.plants.push_back(static_cast<int>(j));
    }
  f.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  f.jfi = jain_index(f.beta);
  const double total = available.sum();
  // LP tolerances can leave dispatch a hair above the MPP
  f.net_curtailment_pct = total > 0.0 ? std::clamp(100.0 * (1.0 - produced.sum() / total), 0.0, 100.0) : 0.0;
  return f;
}

ErrorStats stats_of(const std::vector<double>& v) {
  ErrorStats s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json fairness_json(const ScenarioFairness& f) {
  return {{"plants", f.plants}, {"beta", vec_json(f.beta)}, {"jfi", f.jfi},
          {"net_curtailment_pct", f.net_curtailment_pct}};
}

}  // namespace

FairnessReport compute_fairness(const CurtailmentPlan& plan, const ScenarioSet& scen, int stress_scenario) {
  if (static_cast<int>(plan.dispatch_p.size()) != scen.n_scenarios())
    throw ValidationError("plan and scenario set disagree on the scenario count");
  if (stress_scenario < 0 || stress_scenario >= scen.n_scenarios())
    throw ValidationError("stress scenario index out of range");
  FairnessReport r;
  r.stress_scenario = stress_scenario;
  Eigen::MatrixXd all_p = Eigen::MatrixXd::Zero(scen.n_pv(), 1), all_mpp = all_p;
  for (int w = 0; w < scen.n_scenarios(); ++w) {
    const auto& p = plan.dispatch_p[static_cast<std::size_t>(w)];
    const auto& mpp = scen.scenarios[static_cast<std::size_t>(w)].pv_mpp;
    if (p.rows() != mpp.rows() || p.cols() != mpp.cols())
      throw ValidationError("dispatch shape does not match scenario " + std::to_string(w));
    r.scenarios.push_back(fairness_of(p, mpp));
    all_p += p.rowwise().sum();
    all_mpp += mpp.rowwise().sum();
  }
  r.pooled = fairness_of(all_p, all_mpp);
  return r;
}

ValidationReport validate_plan(const CurtailmentPlan& plan, const NetworkModel& net, const CLAModel& cla,
                               const ScenarioSet& scen, double tol) {
  validate(scen, net);
  if (static_cast<int>(plan.dispatch_p.size()) != scen.n_scenarios())
    throw ValidationError("plan and scenario set disagree on the scenario count");
  const PowerFlowSolver solver(net);
  const int T = scen.steps, W = scen.n_scenarios();
  const auto buses = net.non_slack_buses();
  const std::size_t per_step = buses.size();

  ValidationReport r;
  r.v_min_limit = net.v_min;
  r.v_max_limit = net.v_max;
  r.points.resize(static_cast<std::size_t>(T) * W * per_step);
  std::vector<std::string> fail(static_cast<std::size_t>(T) * W);
  std::vector<char> solved(static_cast<std::size_t>(T) * W, 0);

  parallel_for(static_cast<std::size_t>(T) * W, [&](std::size_t k) {
    const int w = static_cast<int>(k / T), t = static_cast<int>(k % T);
    const Eigen::VectorXd p = plan.dispatch_p[static_cast<std::size_t>(w)].col(t);
    const Eigen::VectorXd q = plan.dispatch_q[static_cast<std::size_t>(w)].col(t);
    const auto inj = assemble_injections(net, scen, w, t, p, q);
    PowerFlowSolution sol;
    try {
      sol = solver.solve(inj);
    } catch (const Error& e) {
      fail[k] = "scenario " + std::to_string(w) + " step " + std::to_string(t) + ": " + e.what();
      return;
    }
    const Eigen::VectorXd x = inj.stacked();
    for (std::size_t b = 0; b < per_step; ++b) {
      const int node = buses[b];
      VoltagePoint& pt = r.points[k * per_step + b];
      pt.t = t;
      pt.scenario = w;
      pt.node = node;
      pt.v_true = sol.v_mag(node);
      pt.v_over = std::sqrt(std::max(0.0, cla.coeffs(node, Direction::over).evaluate(x)));
      pt.v_under = std::sqrt(std::max(0.0, cla.coeffs(node, Direction::under).evaluate(x)));
    }
    solved[k] = 1;
  });

  std::vector<double> over_err, under_err;
  std::vector<VoltagePoint> kept;
  kept.reserve(r.points.size());
  r.max_v = -kInf;
  r.min_v = kInf;
  for (std::size_t k = 0; k < solved.size(); ++k) {
    if (!solved[k]) {
      r.failures.push_back(fail[k]);
      continue;
    }
    for (std::size_t b = 0; b < per_step; ++b) {
      const auto& pt = r.points[k * per_step + b];
      over_err.push_back(pt.v_over - pt.v_true);
      under_err.push_back(pt.v_true - pt.v_under);
      r.max_v = std::max(r.max_v, pt.v_true);
      r.min_v = std::min(r.min_v, pt.v_true);
      if (pt.v_true > net.v_max + tol) ++r.n_above_limit;
      if (pt.v_true < net.v_min - tol) ++r.n_below_limit;
      if (pt.v_under > pt.v_over) ++r.n_inverted;
      if (pt.v_over > net.v_max + 1e-6) ++r.n_cla_above_limit;
      kept.push_back(pt);
    }
  }
  r.points = std::move(kept);
  r.over_error = stats_of(over_err);
  r.under_error = stats_of(under_err);
  return r;
}

double max_v_uncurtailed(const NetworkModel& net, const ScenarioSet& scen, int scenario) {
  validate(scen, net);
  const PowerFlowSolver solver(net);
  const auto& mpp = scen.scenarios.at(static_cast<std::size_t>(scenario)).pv_mpp;
  const Eigen::VectorXd zero_q = Eigen::VectorXd::Zero(scen.n_pv());
  double best = 0.0;
  for (int t = 0; t < scen.steps; ++t) {
    const auto sol = solver.solve(assemble_injections(net, scen, scenario, t, mpp.col(t), zero_q));
    best = std::max(best, sol.v_mag.maxCoeff());
  }
  return best;
}

std::vector<SweepRow> sweep_alpha2(const std::vector<double>& alphas, const NetworkModel& net, const CLAModel& cla,
                                   const ScenarioSet& scen, const OptimizerConfig& base, int stress_scenario) {
  if (alphas.empty()) throw ValidationError("alpha2 sweep needs at least one value");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0)) throw ValidationError("alpha2 values must be non-negative");
    if (i > 0 && alphas[i] < alphas[i - 1]) throw ValidationError("alpha2 values must be sorted ascending");
  }
  std::vector<SweepRow> rows(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.alpha2 = alphas[i];
    OptimizerConfig cfg = base;
    cfg.alpha2 = alphas[i];
    try {
      const auto plan = solve_plan(build_day_ahead_lp(net, cla, scen, cfg));
      const auto fair = compute_fairness(plan, scen, stress_scenario);
      row.ok = true;
      row.jfi = fair.jfi();
      row.net_curtailment_pct = fair.net_curtailment_pct();
      row.objective = plan.objective;
    } catch (const Error& e) {
      row.error = e.what();
    }
  });
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, const Provenance& prov) {
  std::ostringstream os;
  os << provenance_comment(prov) << "\nalpha2,status,jfi,net_curtailment_pct,objective\n";
  for (const auto& r : rows) {
    os << format_double(r.alpha2) << ',';
    if (r.ok) {
      os << "ok," << format_double(r.jfi) << ',' << format_double(r.net_curtailment_pct) << ','
         << format_double(r.objective) << '\n';
    } else {
      std::string why = r.error;
      std::replace(why.begin(), why.end(), ',', ';');
      std::replace(why.begin(), why.end(), '\n', ' ');
      os << "failed: " << why << ",,,\n";
    }
  }
  return os.str();
}

std::string fairness_to_json(const FairnessReport& report, const CurtailmentPlan& plan, const Provenance& prov) {
  json doc;
  doc["config_hash"] = prov.config_hash;
  doc["seed"] = prov.seed;
  doc["pv_buses"] = plan.pv_buses;
  doc["stress_scenario"] = report.stress_scenario;
  doc["jfi"] = report.jfi();
  doc["net_curtailment_pct"] = report.net_curtailment_pct();
  json per = json::array();
  for (const auto& s : report.scenarios) per.push_back(fairness_json(s));
  doc["scenarios"] = std::move(per);
  doc["pooled"] = fairness_json(report.pooled);
  return doc.dump(1) + "\n";
}

std::string validation_stats_csv(const ValidationReport& r, const Provenance& prov) {
  std::ostringstream os;
  os << provenance_comment(prov) << '\n'
     << "# points=" << r.points.size() << " max_v=" << format_double(r.max_v) << " min_v=" << format_double(r.min_v)
     << " above_limit=" << r.n_above_limit << " below_limit=" << r.n_below_limit << " inverted=" << r.n_inverted
     << " failed_steps=" << r.failures.size() << '\n'
     << "error,min_pu,mean_pu,max_pu\n"
     << "over_minus_true," << format_double(r.over_error.min) << ',' << format_double(r.over_error.mean) << ','
     << format_double(r.over_error.max) << '\n'
     << "true_minus_under," << format_double(r.under_error.min) << ',' << format_double(r.under_error.mean) << ','
     << format_double(r.under_error.max) << '\n';
  return os.str();
}

std::string voltages_csv(const ValidationReport& r, const Provenance& prov) {
  std::ostringstream os;
  os << provenance_comment(prov) << "\nt,scenario,node,v_true,v_over,v_under,v_min,v_max\n";
  const std::string lim = format_double(r.v_min_limit) + ',' + format_double(r.v_max_limit);
  for (const auto& p : r.points)
    os << p.t << ',' << p.scenario << ',' << p.node << ',' << format_double(p.v_true) << ','
       << format_double(p.v_over) << ',' << format_double(p.v_under) << ',' << lim << '\n';
  return os.str();
}

}  // namespace fairpv
