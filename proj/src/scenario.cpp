#include "fairpv/scenario.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace fairpv {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

double solar_shape(double hour, const DayParams& day) {
  if (hour <= day.sunrise_h || hour >= day.sunset_h) return 0.0;
  const double noon = 0.5 * (day.sunrise_h + day.sunset_h);
  const double half = 0.5 * (day.sunset_h - day.sunrise_h);
  const double x = (hour - noon) / half;
  return std::pow(std::cos(0.5 * std::numbers::pi * x), day.shape_exponent);
}

double bump(double hour, double centre, double width) {
  const double z = (hour - centre) / width;
  return std::exp(-0.5 * z * z);
}

// Daily consumption shapes relative to the load's peak (maximum close to 1).
double load_shape(const std::string& ref, double hour) {
  if (ref == "residential") {
    return 0.30 + 0.30 * bump(hour, 7.5, 1.2) + 0.70 * bump(hour, 19.0, 1.8) - 0.08 * bump(hour, 13.0, 2.5);
  }
  if (ref == "commercial") {
    const double open = 1.0 / (1.0 + std::exp(-(hour - 8.0) * 2.0));
    const double close = 1.0 / (1.0 + std::exp((hour - 18.0) * 2.0));
    return 0.25 + 0.75 * open * close;
  }
  throw ValidationError("unknown load profile '" + ref + "'");
}

}  // namespace

void validate(const ScenarioSet& scen, const NetworkModel& net) {
  require(scen.steps > 0, "scenario set has no timesteps");
  require(scen.timestep_minutes * scen.steps == 1440, "timesteps do not cover one day");
  require(scen.pv_buses == net.pv_buses(), "scenario PV buses do not match the network");
  require(scen.load_buses == net.load_buses(), "scenario load buses do not match the network");
  const auto plants = net.plants();
  for (int w = 0; w < scen.n_scenarios(); ++w) {
    const auto& s = scen.scenarios[static_cast<std::size_t>(w)];
    const std::string tag = "scenario " + std::to_string(w) + ": ";
    require(s.pv_mpp.rows() == scen.n_pv() && s.pv_mpp.cols() == scen.steps, tag + "pv_mpp shape mismatch");
    require(s.load_p.rows() == scen.n_loads() && s.load_p.cols() == scen.steps, tag + "load_p shape mismatch");
    require(s.load_q.rows() == scen.n_loads() && s.load_q.cols() == scen.steps, tag + "load_q shape mismatch");
    require(s.pv_mpp.allFinite() && s.load_p.allFinite() && s.load_q.allFinite(), tag + "non-finite value");
    require((s.pv_mpp.array() >= 0.0).all(), tag + "negative MPP");
    require((s.load_p.array() >= 0.0).all(), tag + "negative load");
    for (int j = 0; j < scen.n_pv(); ++j)
      require(s.pv_mpp.row(j).maxCoeff() <= plants[static_cast<std::size_t>(j)].s_max * (1.0 + 1e-12),
              tag + "MPP above plant rating at bus " + std::to_string(scen.pv_buses[static_cast<std::size_t>(j)]));
  }
}

InjectionVector assemble_injections(const NetworkModel& net, const ScenarioSet& scen, int scenario, int step,
                                    const Eigen::VectorXd& pv_p, const Eigen::VectorXd& pv_q) {
  const auto& s = scen.scenarios[static_cast<std::size_t>(scenario)];
  auto inj = InjectionVector::zeros(net.n_buses() - 1);
  for (int j = 0; j < scen.n_pv(); ++j) {
    const int k = net.injection_index(scen.pv_buses[static_cast<std::size_t>(j)]);
    inj.p(k) += pv_p(j);
    inj.q(k) += pv_q(j);
  }
  for (int l = 0; l < scen.n_loads(); ++l) {
    const int k = net.injection_index(scen.load_buses[static_cast<std::size_t>(l)]);
    inj.p(k) -= s.load_p(l, step);
    inj.q(k) -= s.load_q(l, step);
  }
  return inj;
}

Eigen::MatrixXd generate_pv_mpp(std::span<const PlantSpec> plants, Percentile pct, const DayParams& day) {
  require(day.steps > 0 && 1440 % day.steps == 0, "steps must divide the day into whole minutes");
  require(0.0 <= day.sunrise_h && day.sunrise_h < day.sunset_h && day.sunset_h <= 24.0,
          "sunrise must precede sunset within the day");
  require(day.peak_fraction > 0.0 && day.peak_fraction <= 1.0, "peak_fraction must lie in (0, 1]");
  require(day.p10_factor > 0.0 && day.p10_factor <= 1.0, "p10 factor must lie in (0, 1]");
  require(day.shape_exponent > 0.0, "shape exponent must be positive");

  const double factor = pct == Percentile::p90 ? 1.0 : day.p10_factor;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(plants.size()), day.steps);
  for (int t = 0; t < day.steps; ++t) {
    const double shape = solar_shape(24.0 * t / day.steps, day);
    for (std::size_t j = 0; j < plants.size(); ++j)
      out(static_cast<Eigen::Index>(j), t) = plants[j].s_max * day.peak_fraction * factor * shape;
  }
  return out;
}

Eigen::VectorXd DemandModel::sample_day(std::mt19937_64& rng) const {
  std::normal_distribution<double> n01;
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
  return mean + cholesky.triangularView<Eigen::Lower>() * z;
}

DemandModel fit_demand_model(const Eigen::MatrixXd& history, int n_loads, int steps) {
  if (history.rows() < kMinHistoryDays)
    throw DegenerateHistory("demand history has " + std::to_string(history.rows()) + " days, need at least " +
                            std::to_string(kMinHistoryDays));
  require(n_loads > 0 && steps > 0 && history.cols() == static_cast<Eigen::Index>(n_loads) * steps,
          "demand history width does not match loads x steps");

  DemandModel m;
  m.n_loads = n_loads;
  m.steps = steps;
  m.mean = history.colwise().mean().transpose();
  const Eigen::MatrixXd centred = history.rowwise() - m.mean.transpose();
  m.covariance = (centred.transpose() * centred) / static_cast<double>(history.rows() - 1);
  const auto dim = static_cast<double>(m.covariance.rows());
  m.shrinkage = 1e-6 * m.covariance.trace() / dim;
  m.covariance.diagonal().array() += m.shrinkage;

  Eigen::LLT<Eigen::MatrixXd> llt(m.covariance);
  for (double jitter = 1e-12; llt.info() != Eigen::Success; jitter *= 10.0) {
    if (jitter > 1e-9) throw DegenerateHistory("demand covariance is not positive definite");
    Eigen::MatrixXd c = m.covariance;
    c.diagonal().array() += jitter;
    llt.compute(c);
    if (llt.info() == Eigen::Success) m.covariance = c;
  }
  m.cholesky = llt.matrixL();
  return m;
}

DemandProfile sample_demand(const DemandModel& model, Percentile pct, const Eigen::VectorXd& power_factors) {
  require(power_factors.size() == model.n_loads, "one power factor per load required");
  const double z = pct == Percentile::p90 ? kZ90 : -kZ90;
  const Eigen::VectorXd level = (model.mean + z * model.sigma()).cwiseMax(0.0);
  DemandProfile d;
  d.load_p.resize(model.n_loads, model.steps);
  d.load_q.resize(model.n_loads, model.steps);
  for (int l = 0; l < model.n_loads; ++l) {
    const double pf = power_factors(l);
    require(pf > 0.0 && pf <= 1.0, "power factor must lie in (0, 1]");
    const double ratio = std::tan(std::acos(pf));
    for (int t = 0; t < model.steps; ++t) {
      d.load_p(l, t) = level(static_cast<Eigen::Index>(l) * model.steps + t);
      d.load_q(l, t) = d.load_p(l, t) * ratio;
    }
  }
  return d;
}

DemandProfile sample_demand(const DemandModel& model, Percentile pct, double power_factor) {
  return sample_demand(model, pct, Eigen::VectorXd::Constant(model.n_loads, power_factor));
}

ScenarioSet couple_extremes(const Eigen::MatrixXd& pv_hi, const Eigen::MatrixXd& pv_lo, const DemandProfile& dem_hi,
                            const DemandProfile& dem_lo) {
  const auto steps = pv_hi.cols();
  require(pv_lo.rows() == pv_hi.rows() && pv_lo.cols() == steps, "PV profile shapes differ");
  for (const auto* d : {&dem_hi, &dem_lo}) {
    require(d->load_p.cols() == steps && d->load_q.cols() == steps, "demand and PV step counts differ");
    require(d->load_p.rows() == dem_hi.load_p.rows() && d->load_q.rows() == dem_hi.load_p.rows(),
            "demand profile shapes differ");
  }
  require(steps > 0 && 1440 % steps == 0, "steps must divide the day into whole minutes");
  ScenarioSet s;
  s.steps = static_cast<int>(steps);
  s.timestep_minutes = static_cast<int>(1440 / steps);
  s.scenarios.push_back({pv_hi, dem_lo.load_p, dem_lo.load_q});
  s.scenarios.push_back({pv_lo, dem_hi.load_p, dem_hi.load_q});
  return s;
}

Eigen::MatrixXd synthesize_history(const NetworkModel& net, int steps, const HistoryParams& params,
                                   std::uint64_t seed) {
  require(params.days > 0 && steps > 0, "history needs days and steps");
  require(std::abs(params.ar_coefficient) < 1.0, "AR coefficient must lie in (-1, 1)");
  const auto loads = net.load_buses();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const double innov = params.ar_sigma * std::sqrt(1.0 - params.ar_coefficient * params.ar_coefficient);

  Eigen::MatrixXd hist(params.days, static_cast<Eigen::Index>(loads.size()) * steps);
  for (int d = 0; d < params.days; ++d) {
    for (std::size_t l = 0; l < loads.size(); ++l) {
      const auto& spec = *net.buses[static_cast<std::size_t>(loads[l])].load;
      const double level = 1.0 + params.day_sigma * n01(rng);
      double ar = params.ar_sigma * n01(rng);
      for (int t = 0; t < steps; ++t) {
        if (t > 0) ar = params.ar_coefficient * ar + innov * n01(rng);
        const double v = spec.peak_p * load_shape(spec.profile_ref, 24.0 * t / steps) * (level + ar);
        hist(d, static_cast<Eigen::Index>(l) * steps + t) = std::max(0.0, v);
      }
    }
  }
  return hist;
}

ScenarioSet synthesize_scenarios(const NetworkModel& net, const SynthesisParams& params) {
  const auto plants = net.plants();
  const Eigen::MatrixXd pv_hi = generate_pv_mpp(plants, Percentile::p90, params.day);
  const Eigen::MatrixXd pv_lo = generate_pv_mpp(plants, Percentile::p10, params.day);

  const auto loads = net.load_buses();
  DemandProfile hi, lo;
  if (loads.empty()) {
    hi.load_p = hi.load_q = Eigen::MatrixXd::Zero(0, params.day.steps);
    lo = hi;
  } else {
    const auto hist = synthesize_history(net, params.day.steps, params.history, params.seed);
    const auto model = fit_demand_model(hist, static_cast<int>(loads.size()), params.day.steps);
    Eigen::VectorXd pf(static_cast<Eigen::Index>(loads.size()));
    for (std::size_t l = 0; l < loads.size(); ++l)
      pf(static_cast<Eigen::Index>(l)) = net.buses[static_cast<std::size_t>(loads[l])].load->power_factor;
    hi = sample_demand(model, Percentile::p90, pf);
    lo = sample_demand(model, Percentile::p10, pf);
  }
  ScenarioSet s = couple_extremes(pv_hi, pv_lo, hi, lo);
  s.pv_buses = net.pv_buses();
  s.load_buses = loads;
  validate(s, net);
  return s;
}

namespace {

const char* const kQuantities[] = {"pv_mpp", "load_p", "load_q"};

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<int>& buses, const Provenance& prov) {
  std::ostringstream os;
  os << provenance_comment(prov) << '\n' << 't';
  for (int b : buses) os << ',' << b;
  os << '\n';
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    os << t;
    for (Eigen::Index r = 0; r < m.rows(); ++r) os << ',' << format_double(m(r, t));
    os << '\n';
  }
  return os.str();
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path, std::vector<int>& buses) {
  const auto table = parse_csv(read_text_file(path), path.string());
  if (table.header.empty() || table.header.front() != "t") throw ParseError(path.string() + ": first column must be t");
  buses.clear();
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    try {
      buses.push_back(std::stoi(table.header[c]));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": column '" + table.header[c] + "' is not a bus id");
    }
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(buses.size()), static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t t = 0; t < table.rows.size(); ++t) {
    if (table.rows[t][0] != static_cast<double>(t)) throw ParseError(path.string() + ": timestep column out of order");
    for (std::size_t c = 0; c < buses.size(); ++c)
      m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = table.rows[t][c + 1];
  }
  return m;
}

}  // namespace

void save_scenarios(const ScenarioSet& scen, const std::filesystem::path& dir, const Provenance& prov) {
  std::filesystem::create_directories(dir);
  for (int w = 0; w < scen.n_scenarios(); ++w) {
    const auto& s = scen.scenarios[static_cast<std::size_t>(w)];
    const Eigen::MatrixXd* mats[] = {&s.pv_mpp, &s.load_p, &s.load_q};
    for (int k = 0; k < 3; ++k) {
      const auto& buses = k == 0 ? scen.pv_buses : scen.load_buses;
      write_text_file(dir / ("scenario" + std::to_string(w) + "_" + kQuantities[k] + ".csv"),
                      matrix_csv(*mats[k], buses, prov));
    }
  }
}

ScenarioSet load_scenarios(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("scenario directory not found: " + dir.string());
  ScenarioSet set;
  for (int w = 0;; ++w) {
    const auto first = dir / ("scenario" + std::to_string(w) + "_pv_mpp.csv");
    if (!std::filesystem::exists(first)) break;
    Scenario s;
    Eigen::MatrixXd* mats[] = {&s.pv_mpp, &s.load_p, &s.load_q};
    for (int k = 0; k < 3; ++k) {
      const auto path = dir / ("scenario" + std::to_string(w) + "_" + kQuantities[k] + ".csv");
      std::vector<int> buses;
      *mats[k] = read_matrix(path, buses);
      auto& expect = k == 0 ? set.pv_buses : set.load_buses;
      if (w == 0 && k < 2) expect = buses;
      if (buses != expect) throw ParseError(path.string() + ": bus columns differ from the first scenario");
      if (w == 0 && k == 0) set.steps = static_cast<int>(mats[k]->cols());
      if (mats[k]->cols() != set.steps)
        throw ParseError(path.string() + ": " + std::to_string(mats[k]->cols()) + " timesteps, expected " +
                         std::to_string(set.steps));
    }
    set.scenarios.push_back(std::move(s));
  }
  if (set.scenarios.empty()) throw Error("no scenario files in " + dir.string());
  if (set.steps <= 0 || 1440 % set.steps != 0) throw ParseError("scenario step count must divide 1440 minutes");
  set.timestep_minutes = 1440 / set.steps;
  return set;
}

}  // namespace fairpv
