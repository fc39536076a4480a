#include "fairpv/cla.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fairpv/lp.hpp"
#include "fairpv/parallel.hpp"

namespace fairpv {

using json = nlohmann::json;

namespace {

// Independent stream per (seed, index); thread layout never leaks into results.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

InjectionVector draw(const NetworkModel& net, const std::vector<int>& pv, const std::vector<int>& loads,
                     const SamplingSpec& spec, std::mt19937_64& rng) {
  auto inj = InjectionVector::zeros(net.n_buses() - 1);
  for (std::size_t j = 0; j < pv.size(); ++j) {
    const auto J = static_cast<Eigen::Index>(j);
    const double p = spec.pv_p_max(J) * unit(rng);
    const double q = spec.pv_zeta(J) * p * (2.0 * unit(rng) - 1.0);
    const int k = net.injection_index(pv[j]);
    inj.p(k) += p;
    inj.q(k) += q;
  }
  for (std::size_t l = 0; l < loads.size(); ++l) {
    const auto L = static_cast<Eigen::Index>(l);
    const double u = unit(rng);
    const int k = net.injection_index(loads[l]);
    inj.p(k) -= spec.load_p_min(L) + u * (spec.load_p_max(L) - spec.load_p_min(L));
    inj.q(k) -= spec.load_q_min(L) + u * (spec.load_q_max(L) - spec.load_q_min(L));
  }
  return inj;
}

ErrorStats stats(const std::vector<double>& v) {
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

Eigen::VectorXd json_vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

const char* to_string(Direction d) { return d == Direction::over ? "over" : "under"; }

SamplingSpec sampling_spec(const NetworkModel& net, const ScenarioSet& scen) {
  validate(scen, net);
  if (scen.scenarios.empty()) throw ValidationError("scenario set is empty");
  SamplingSpec s;
  const auto plants = net.plants();
  s.pv_p_max = Eigen::VectorXd::Zero(scen.n_pv());
  s.pv_zeta.resize(scen.n_pv());
  for (int j = 0; j < scen.n_pv(); ++j) s.pv_zeta(j) = plants[static_cast<std::size_t>(j)].zeta();
  const auto nl = scen.n_loads();
  s.load_p_min = s.load_q_min = Eigen::VectorXd::Constant(nl, kInf);
  s.load_p_max = s.load_q_max = Eigen::VectorXd::Constant(nl, -kInf);
  for (const auto& sc : scen.scenarios) {
    if (scen.n_pv() > 0) s.pv_p_max = s.pv_p_max.cwiseMax(sc.pv_mpp.rowwise().maxCoeff());
    if (nl > 0) {
      s.load_p_min = s.load_p_min.cwiseMin(sc.load_p.rowwise().minCoeff());
      s.load_p_max = s.load_p_max.cwiseMax(sc.load_p.rowwise().maxCoeff());
      s.load_q_min = s.load_q_min.cwiseMin(sc.load_q.rowwise().minCoeff());
      s.load_q_max = s.load_q_max.cwiseMax(sc.load_q.rowwise().maxCoeff());
    }
  }
  return s;
}

InjectionRanges injection_ranges(const NetworkModel& net, const SamplingSpec& spec) {
  const int n = net.n_buses() - 1;
  InjectionRanges r{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                    Eigen::VectorXd::Zero(n)};
  const auto pv = net.pv_buses();
  const auto loads = net.load_buses();
  for (std::size_t j = 0; j < pv.size(); ++j) {
    const int k = net.injection_index(pv[j]);
    const auto J = static_cast<Eigen::Index>(j);
    const double qmax = spec.pv_zeta(J) * spec.pv_p_max(J);
    r.p_max(k) += spec.pv_p_max(J);
    r.q_min(k) -= qmax;
    r.q_max(k) += qmax;
  }
  for (std::size_t l = 0; l < loads.size(); ++l) {
    const int k = net.injection_index(loads[l]);
    const auto L = static_cast<Eigen::Index>(l);
    r.p_min(k) -= spec.load_p_max(L);
    r.p_max(k) -= spec.load_p_min(L);
    r.q_min(k) -= spec.load_q_max(L);
    r.q_max(k) -= spec.load_q_min(L);
  }
  return r;
}

SampleSet sample_injections(const NetworkModel& net, const SamplingSpec& spec, int n_samples, std::uint64_t seed) {
  const int nb = net.n_buses();
  const int dim = 2 * (nb - 1);
  if (n_samples < dim + 1)
    throw ValidationError("need at least " + std::to_string(dim + 1) + " samples, got " + std::to_string(n_samples));
  const auto pv = net.pv_buses();
  const auto loads = net.load_buses();
  if (spec.pv_p_max.size() != static_cast<Eigen::Index>(pv.size()) ||
      spec.load_p_min.size() != static_cast<Eigen::Index>(loads.size()))
    throw ValidationError("sampling spec does not match the network devices");

  const PowerFlowSolver solver(net);
  const int attempt_cap = n_samples / 10 + 1;
  SampleSet out;
  out.seed = seed;
  out.injection_buses = net.non_slack_buses();
  out.ranges = injection_ranges(net, spec);
  out.inputs.resize(n_samples, dim);
  out.labels.resize(n_samples, nb);
  std::vector<int> failures(static_cast<std::size_t>(n_samples), 0);

  parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t i) {
    auto rng = stream(seed, i);
    for (;;) {
      const auto inj = draw(net, pv, loads, spec, rng);
      try {
        const auto sol = solver.solve(inj);
        out.inputs.row(static_cast<Eigen::Index>(i)) = inj.stacked().transpose();
        out.labels.row(static_cast<Eigen::Index>(i)) = sol.v_mag.array().square().transpose();
        return;
      } catch (const NonConvergence&) {
      } catch (const SingularJacobian&) {
      }
      if (++failures[i] > attempt_cap) return;
    }
  });

  for (int f : failures) out.n_divergent += f;
  if (out.n_divergent > n_samples / 10)
    throw TooManyDivergent(std::to_string(out.n_divergent) + " of " + std::to_string(n_samples) +
                           " sampled power flows diverged; sampling range is far outside feasible operation");
  return out;
}

SampleSet sample_injections(const NetworkModel& net, const ScenarioSet& scen, int n_samples, std::uint64_t seed) {
  return sample_injections(net, sampling_spec(net, scen), n_samples, seed);
}

CLACoefficients fit_cla(const SampleSet& samples, int node, Direction dir) {
  const int S = samples.size();
  const auto dim = samples.inputs.cols();
  if (S == 0 || node < 0 || node >= samples.labels.cols()) throw ValidationError("fit_cla: bad node or empty samples");

  // minimize sum_s +-(a0 + a1'x_s) / S; the label sum is a constant.
  const double sign = dir == Direction::over ? 1.0 : -1.0;
  const Eigen::RowVectorXd col_mean = samples.inputs.colwise().mean();
  LPProblem lp;
  lp.add_variable(-kInf, kInf, sign, "a0");
  for (Eigen::Index k = 0; k < dim; ++k)
    lp.add_variable(-kInf, kInf, sign * col_mean(k), "a1[" + std::to_string(k) + "]");
  const Sense sense = dir == Direction::over ? Sense::ge : Sense::le;
  for (int s = 0; s < S; ++s) {
    std::vector<std::pair<int, double>> row;
    row.reserve(static_cast<std::size_t>(dim) + 1);
    row.emplace_back(0, 1.0);
    for (Eigen::Index k = 0; k < dim; ++k)
      if (const double v = samples.inputs(s, k); v != 0.0) row.emplace_back(static_cast<int>(k) + 1, v);
    lp.add_row(std::move(row), sense, samples.labels(s, node));
  }

  const auto sol = solve_lp(lp);
  if (sol.status != LPStatus::optimal)
    throw Error(std::string("CLA regression for bus ") + std::to_string(node) + " (" + to_string(dir) +
                ") returned " + to_string(sol.status));

  CLACoefficients c;
  c.a0 = sol.x(0);
  c.a1 = sol.x.tail(dim);
  // Absorb solver-tolerance slack so training conservativeness is exact.
  const Eigen::VectorXd est = (samples.inputs * c.a1).array() + c.a0;
  const Eigen::VectorXd gap = sign * (samples.labels.col(node) - est);
  const double worst = gap.maxCoeff();
  if (worst > 0.0) c.a0 += sign * worst;
  return c;
}

double evaluate_cla(const CLAModel& model, int node, Direction dir, const InjectionVector& inj) {
  return model.coeffs(node, dir).evaluate(inj.stacked());
}

CLAModel build_cla(const SampleSet& samples) {
  const int nb = static_cast<int>(samples.labels.cols());
  CLAModel m;
  m.over.resize(static_cast<std::size_t>(nb));
  m.under.resize(static_cast<std::size_t>(nb));
  parallel_for(static_cast<std::size_t>(2 * nb), [&](std::size_t task) {
    const int node = static_cast<int>(task / 2);
    const Direction dir = task % 2 == 0 ? Direction::over : Direction::under;
    (dir == Direction::over ? m.over : m.under)[static_cast<std::size_t>(node)] = fit_cla(samples, node, dir);
  });
  m.ranges = samples.ranges;
  m.n_samples = samples.size();
  m.seed = samples.seed;
  m.injection_buses = samples.injection_buses;
  if (m.injection_buses.empty())
    for (int j = 1; j < nb; ++j) m.injection_buses.push_back(j);
  const auto rep = audit_samples(m, samples);
  m.max_training_violation = rep.max_violation_pu2;
  return m;
}

AuditReport audit_samples(const CLAModel& model, const SampleSet& samples) {
  const int nb = model.n_buses();
  if (samples.labels.cols() != nb || samples.inputs.cols() != 2 * (nb - 1))
    throw ValidationError("sample set does not match the CLA model dimensions");
  AuditReport r;
  r.n_samples = samples.size();
  std::vector<double> over_err, under_err;
  std::vector<bool> is_injection(static_cast<std::size_t>(nb), false);
  for (int b : model.injection_buses) is_injection[static_cast<std::size_t>(b)] = true;
  for (int s = 0; s < samples.size(); ++s) {
    const Eigen::VectorXd x = samples.inputs.row(s).transpose();
    for (int j = 0; j < nb; ++j) {
      if (!is_injection[static_cast<std::size_t>(j)]) continue;
      const double label = samples.labels(s, j);
      const double hi = model.over[static_cast<std::size_t>(j)].evaluate(x);
      const double lo = model.under[static_cast<std::size_t>(j)].evaluate(x);
      const double v = std::sqrt(label);
      const double v_hi = std::sqrt(std::max(hi, 0.0));
      const double v_lo = std::sqrt(std::max(lo, 0.0));
      over_err.push_back(v_hi - v);
      under_err.push_back(v - v_lo);
      ++r.n_checks;
      const double viol2 = std::max(label - hi, lo - label);
      if (viol2 > 1e-9) ++r.n_violations;
      if (viol2 > 0.0) {
        r.max_violation_pu2 = std::max(r.max_violation_pu2, viol2);
        r.max_violation_pu = std::max({r.max_violation_pu, v - v_hi, v_lo - v});
      }
    }
  }
  r.violation_rate = r.n_checks ? static_cast<double>(r.n_violations) / r.n_checks : 0.0;
  r.over_error = stats(over_err);
  r.under_error = stats(under_err);
  return r;
}

AuditReport audit_conservativeness(const CLAModel& model, const NetworkModel& net, const ScenarioSet& scen,
                                   int n_holdout, std::uint64_t seed) {
  if (seed == model.seed) throw ValidationError("holdout seed must differ from the training seed");
  return audit_samples(model, sample_injections(net, scen, n_holdout, seed));
}

std::string cla_to_json(const CLAModel& model, const Provenance& prov) {
  json doc;
  doc["config_hash"] = prov.config_hash;
  doc["seed"] = prov.seed;
  doc["n_buses"] = model.n_buses();
  doc["injection_buses"] = model.injection_buses;
  doc["training"] = {{"n_samples", model.n_samples},
                     {"seed", model.seed},
                     {"max_violation_pu2", model.max_training_violation},
                     {"ranges",
                      {{"p_min", vec_json(model.ranges.p_min)},
                       {"p_max", vec_json(model.ranges.p_max)},
                       {"q_min", vec_json(model.ranges.q_min)},
                       {"q_max", vec_json(model.ranges.q_max)}}}};
  json sets = json::array();
  for (int j = 0; j < model.n_buses(); ++j)
    for (Direction d : {Direction::over, Direction::under}) {
      const auto& c = model.coeffs(j, d);
      sets.push_back({{"node", j}, {"direction", to_string(d)}, {"a0", c.a0}, {"a1", vec_json(c.a1)}});
    }
  doc["sets"] = std::move(sets);
  return doc.dump(1) + "\n";
}

CLAModel cla_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("CLA file: ") + e.what());
  }
  try {
    CLAModel m;
    const int nb = doc.at("n_buses").get<int>();
    if (nb < 2) throw ValidationError("CLA file: n_buses must be at least 2");
    m.injection_buses = doc.at("injection_buses").get<std::vector<int>>();
    const auto& tr = doc.at("training");
    m.n_samples = tr.at("n_samples").get<int>();
    m.seed = tr.at("seed").get<std::uint64_t>();
    m.max_training_violation = tr.at("max_violation_pu2").get<double>();
    const auto& rg = tr.at("ranges");
    m.ranges = {json_vec(rg.at("p_min")), json_vec(rg.at("p_max")), json_vec(rg.at("q_min")),
                json_vec(rg.at("q_max"))};
    m.over.resize(static_cast<std::size_t>(nb));
    m.under.resize(static_cast<std::size_t>(nb));
    std::vector<int> seen(static_cast<std::size_t>(2 * nb), 0);
    for (const auto& s : doc.at("sets")) {
      const int node = s.at("node").get<int>();
      const auto dir = s.at("direction").get<std::string>();
      if (node < 0 || node >= nb || (dir != "over" && dir != "under"))
        throw ValidationError("CLA file: bad coefficient set for node " + std::to_string(node));
      CLACoefficients c{s.at("a0").get<double>(), json_vec(s.at("a1"))};
      if (c.a1.size() != 2 * (nb - 1)) throw ValidationError("CLA file: a1 length mismatch at node " + std::to_string(node));
      (dir == "over" ? m.over : m.under)[static_cast<std::size_t>(node)] = std::move(c);
      ++seen[static_cast<std::size_t>(2 * node + (dir == "over" ? 0 : 1))];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int k) { return k != 1; }))
      throw ValidationError("CLA file: need exactly one over and one under set per bus");
    if (static_cast<int>(m.injection_buses.size()) != nb - 1 || m.ranges.p_min.size() != nb - 1)
      throw ValidationError("CLA file: injection layout mismatch");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("CLA file: ") + e.what());
  }
}

CLAModel load_cla(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("CLA file not found: " + path.string());
  return cla_from_json(read_text_file(path));
}

std::string audit_to_csv(const AuditReport& r, const Provenance& prov) {
  std::ostringstream os;
  os << provenance_comment(prov) << '\n'
     << "# samples=" << r.n_samples << " checks=" << r.n_checks << " violations=" << r.n_violations
     << " violation_rate=" << format_double(r.violation_rate) << " max_violation_pu=" << format_double(r.max_violation_pu)
     << " max_violation_pu2=" << format_double(r.max_violation_pu2) << '\n'
     << "error,min_pu,mean_pu,max_pu\n"
     << "over_minus_true," << format_double(r.over_error.min) << ',' << format_double(r.over_error.mean) << ','
     << format_double(r.over_error.max) << '\n'
     << "true_minus_under," << format_double(r.under_error.min) << ',' << format_double(r.under_error.mean) << ','
     << format_double(r.under_error.max) << '\n';
  return os.str();
}

}  // namespace fairpv
