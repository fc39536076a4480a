// fairpv: day-ahead fairness-aware PV curtailment pipeline.
//
//   fairpv synth      synthesize two extreme scenarios for a network
//   fairpv build-cla  fit and audit the linear voltage models
//   fairpv optimize   solve the curtailment LP, validate, report fairness
//   fairpv validate   re-run the AC validation of a stored plan
//   fairpv sweep      JFI / curtailment over a list of alpha2 values
//   fairpv demo       everything above on the shipped feeder
//
// Exit codes: 0 ok, 1 usage or runtime error, 2 audit failed, 3 infeasible.

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairpv/analysis.hpp"
#include "fairpv/cla.hpp"
#include "fairpv/curtailment.hpp"
#include "fairpv/grid.hpp"
#include "fairpv/io.hpp"
#include "fairpv/scenario.hpp"

namespace fs = std::filesystem;
using namespace fairpv;

namespace {

enum Exit { kOk = 0, kError = 1, kAuditFail = 2, kInfeasible = 3 };

struct RunConfig {
  std::string network = std::string(FAIRPV_DATA_DIR) + "/feeder19.json";
  std::string scenarios;  // empty: synthesize from the network
  std::string cla;        // empty: <out>/cla.json
  std::string plan;       // empty: <out>/plan.json
  std::string out = "out";
  double alpha1 = 1.0;
  double alpha2 = 0.0;
  std::vector<double> alpha2_list;
  int samples = 10000;
  int holdout = 500;
  std::uint64_t seed = 42;
  int segments = 8;
  int steps = 96;
  double max_violation_rate = 0.01;
  double max_violation_pu = 5e-3;
  bool no_dispatch = false;
};

// Settings that shape the results; paths to outputs are deliberately left out
// so identical runs into different directories stay byte-identical.
std::string config_hash(const RunConfig& c, const std::string& command) {
  std::ostringstream os;
  os << "command=" << command << '\n' << "network=" << fnv1a_hex(read_text_file(c.network)) << '\n';
  if (!c.scenarios.empty()) {
    os << "scenarios=";
    for (int w = 0;; ++w) {
      const auto f = fs::path(c.scenarios) / ("scenario" + std::to_string(w) + "_pv_mpp.csv");
      if (!fs::exists(f)) break;
      for (const char* q : {"pv_mpp", "load_p", "load_q"})
        os << fnv1a_hex(read_text_file(fs::path(c.scenarios) / ("scenario" + std::to_string(w) + "_" + q + ".csv")));
    }
    os << '\n';
  }
  os << "alpha1=" << format_double(c.alpha1) << "\nalpha2=" << format_double(c.alpha2) << "\nalpha2_list=";
  for (double a : c.alpha2_list) os << format_double(a) << ';';
  os << "\nsamples=" << c.samples << "\nholdout=" << c.holdout << "\nseed=" << c.seed << "\nsegments=" << c.segments
     << "\nsteps=" << c.steps << '\n';
  return fnv1a_hex(os.str());
}

void fail_line(const std::string& kind, const std::string& msg) {
  std::string one = msg;
  for (auto& ch : one)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: " << kind << ": " << one << '\n';
}

NetworkModel network_of(const RunConfig& c) { return load_network(c.network); }

ScenarioSet scenarios_of(const RunConfig& c, const NetworkModel& net) {
  if (!c.scenarios.empty()) {
    auto s = load_scenarios(c.scenarios);
    validate(s, net);
    return s;
  }
  SynthesisParams p;
  p.day.steps = c.steps;
  p.seed = c.seed;
  return synthesize_scenarios(net, p);
}

fs::path cla_path(const RunConfig& c) { return c.cla.empty() ? fs::path(c.out) / "cla.json" : fs::path(c.cla); }
fs::path plan_path(const RunConfig& c) { return c.plan.empty() ? fs::path(c.out) / "plan.json" : fs::path(c.plan); }

OptimizerConfig optimizer_of(const RunConfig& c) {
  OptimizerConfig o;
  o.alpha1 = c.alpha1;
  o.alpha2 = c.alpha2;
  o.segments = c.segments;
  return o;
}

int cmd_synth(const RunConfig& c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  const fs::path dir = fs::path(c.out) / "scenarios";
  save_scenarios(scen, dir, prov);
  std::cout << "scenarios: " << scen.n_scenarios() << " x " << scen.steps << " steps -> " << dir.string() << '\n';
  return kOk;
}

int cmd_build_cla(const RunConfig& c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = sample_injections(net, scen, c.samples, c.seed);
  const auto model = build_cla(samples);
  const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto train = audit_samples(model, samples);
  const auto hold = audit_conservativeness(model, net, scen, c.holdout, c.seed + 1);

  write_text_file(cla_path(c), cla_to_json(model, prov));
  write_text_file(fs::path(c.out) / "cla_audit.csv", audit_to_csv(hold, prov));
  std::printf("CLA: %d buses, %d training samples (%d redrawn), fitted in %.1f s\n", model.n_buses(),
              samples.size(), samples.n_divergent, seconds);
  std::printf("training violations: %d of %d\n", train.n_violations, train.n_checks);
  std::printf("holdout (%d samples): violation rate %.4f%%, max violation %.3e pu\n", hold.n_samples,
              100.0 * hold.violation_rate, hold.max_violation_pu);
  std::printf("%-18s %12s %12s %12s\n", "error (pu)", "min", "mean", "max");
  std::printf("%-18s %12.3e %12.3e %12.3e\n", "over - true", hold.over_error.min, hold.over_error.mean,
              hold.over_error.max);
  std::printf("%-18s %12.3e %12.3e %12.3e\n", "true - under", hold.under_error.min, hold.under_error.mean,
              hold.under_error.max);
  if (train.n_violations > 0 || hold.violation_rate > c.max_violation_rate || hold.max_violation_pu > c.max_violation_pu) {
    fail_line("audit", "CLA conservativeness audit failed");
    return kAuditFail;
  }
  return kOk;
}

void print_infeasible(const Infeasible& e) {
  std::string rows;
  for (const auto& [name, v] : e.worst_rows) rows += " " + name + "=" + format_double(v);
  fail_line("infeasible", std::string(e.what()) + ";" + rows);
}

struct OptimizeResult {
  int code = kOk;
  double jfi = 0.0, curtailment = 0.0;
};

OptimizeResult run_optimize(const RunConfig& c, const Provenance& prov, const NetworkModel& net,
                            const ScenarioSet& scen, const CLAModel& cla, const fs::path& dir) {
  OptimizeResult res;
  const auto cfg = optimizer_of(c);
  CurtailmentPlan plan;
  try {
    plan = solve_plan(build_day_ahead_lp(net, cla, scen, cfg));
  } catch (const Infeasible& e) {
    print_infeasible(e);
    res.code = kInfeasible;
    return res;
  }
  const auto bad = check_plan_invariants(plan, net, scen, cfg.segments);
  const auto fair = compute_fairness(plan, scen);
  const auto val = validate_plan(plan, net, cla, scen);

  write_text_file(dir / "plan.json", plan_to_json(plan, net, cfg, prov, !c.no_dispatch));
  write_text_file(dir / "fairness.json", fairness_to_json(fair, plan, prov));
  write_text_file(dir / "validation.csv", validation_stats_csv(val, prov));
  write_text_file(dir / "voltages.csv", voltages_csv(val, prov));

  std::printf("alpha1 = %g, alpha2 = %g, L = %d: %d vars, %d rows, %d simplex iterations\n", cfg.alpha1, cfg.alpha2,
              cfg.segments, plan.stats.n_vars, plan.stats.n_rows, plan.stats.iterations);
  std::printf("%-26s %10s %8s\n", "stress scenario", "curtail %", "JFI");
  std::printf("%-26s %10.2f %8.4f\n", cfg.alpha2 > 0 ? "with fairness" : "without fairness",
              fair.net_curtailment_pct(), fair.jfi());
  std::printf("generation limits (kW):");
  for (Eigen::Index j = 0; j < plan.p_bar.size(); ++j)
    std::printf(" %d:%.2f", plan.pv_buses[static_cast<std::size_t>(j)], plan.p_bar(j) * net.s_base_kva);
  std::printf("\nAC check: max v %.4f pu, min v %.4f pu, CLA error over %.2e / under %.2e pu (max)\n", val.max_v,
              val.min_v, val.over_error.max, val.under_error.max);
  res.jfi = fair.jfi();
  res.curtailment = fair.net_curtailment_pct();
  for (const auto& msg : bad) fail_line("plan", msg);
  for (const auto& msg : val.failures) fail_line("powerflow", msg);
  if (!bad.empty() || !val.ok()) {
    fail_line("audit", "optimized plan fails AC validation");
    res.code = kAuditFail;
  }
  return res;
}

int cmd_optimize(const RunConfig& c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  const auto cla = load_cla(cla_path(c));
  return run_optimize(c, prov, net, scen, cla, c.out).code;
}

int cmd_validate(const RunConfig& c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  const auto cla = load_cla(cla_path(c));
  const auto plan = load_plan(plan_path(c), net);
  const auto val = validate_plan(plan, net, cla, scen);
  write_text_file(fs::path(c.out) / "validation.csv", validation_stats_csv(val, prov));
  std::printf("max v %.6f pu, min v %.6f pu, %d above / %d below limit, %zu failed steps\n", val.max_v, val.min_v,
              val.n_above_limit, val.n_below_limit, val.failures.size());
  std::printf("%-18s %12.3e %12.3e %12.3e\n", "over - true", val.over_error.min, val.over_error.mean,
              val.over_error.max);
  std::printf("%-18s %12.3e %12.3e %12.3e\n", "true - under", val.under_error.min, val.under_error.mean,
              val.under_error.max);
  return val.ok() ? kOk : kAuditFail;
}

int run_sweep(const RunConfig& c, const Provenance& prov, const NetworkModel& net, const ScenarioSet& scen,
              const CLAModel& cla, const fs::path& dir) {
  const auto rows = sweep_alpha2(c.alpha2_list, net, cla, scen, optimizer_of(c));
  write_text_file(dir / "sweep.csv", sweep_to_csv(rows, prov));
  std::printf("%8s %10s %8s\n", "alpha2", "curtail %", "JFI");
  int failed = 0;
  for (const auto& r : rows) {
    if (r.ok)
      std::printf("%8g %10.2f %8.4f\n", r.alpha2, r.net_curtailment_pct, r.jfi);
    else {
      std::printf("%8g %10s %8s\n", r.alpha2, "failed", "-");
      fail_line("sweep", "alpha2=" + format_double(r.alpha2) + ": " + r.error);
      ++failed;
    }
  }
  return failed ? kError : kOk;
}

int cmd_sweep(const RunConfig& c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  const auto cla = load_cla(cla_path(c));
  return run_sweep(c, prov, net, scen, cla, c.out);
}

int cmd_demo(RunConfig c, const Provenance& prov) {
  const auto net = network_of(c);
  const auto scen = scenarios_of(c, net);
  save_scenarios(scen, fs::path(c.out) / "scenarios", prov);
  std::printf("uncurtailed stress scenario: max v %.4f pu\n\n", max_v_uncurtailed(net, scen, 0));

  int code = cmd_build_cla(c, prov);
  if (code != kOk && code != kAuditFail) return code;
  const auto cla = load_cla(cla_path(c));

  std::printf("\n");
  c.alpha2 = 0.0;
  const auto unfair = run_optimize(c, prov, net, scen, cla, fs::path(c.out) / "unfair");
  std::printf("\n");
  c.alpha2 = 7.0;
  const auto fair = run_optimize(c, prov, net, scen, cla, fs::path(c.out) / "fair");
  for (int r : {unfair.code, fair.code}) code = std::max(code, r);
  if (unfair.code == kOk && fair.code == kOk) {
    std::printf("\n%-20s %18s %6s\n", "Metrics", "Net curtailment (%)", "JFI");
    std::printf("%-20s %18.2f %6.2f\n", "Without fairness", unfair.curtailment, unfair.jfi);
    std::printf("%-20s %18.2f %6.2f\n", "With fairness", fair.curtailment, fair.jfi);
  }
  std::printf("\n");
  if (run_sweep(c, prov, net, scen, cla, c.out) != kOk && code == kOk) code = kError;
  return code;
}

std::vector<double> default_sweep() {
  std::vector<double> a;
  for (int i = 0; i <= 20; ++i) a.push_back(0.5 * i);
  return a;
}

std::optional<std::vector<double>> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) return std::nullopt;
    const auto e = item.find_last_not_of(" \t");
    double v = 0.0;
    const char* first = item.data() + b;
    const char* last = item.data() + e + 1;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Day-ahead fairness-aware PV curtailment"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (TOML/INI key = value, keys mirror the long flags)");

  RunConfig c;
  app.add_option("--network", c.network, "Network JSON file")->capture_default_str();
  app.add_option("--scenarios", c.scenarios, "Scenario CSV directory (default: synthesize)");
  app.add_option("--cla", c.cla, "CLA model file (default: <out>/cla.json)");
  app.add_option("--plan", c.plan, "Plan file for validate (default: <out>/plan.json)");
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--alpha1", c.alpha1, "Curtailment weight")->capture_default_str();
  app.add_option("--alpha2", c.alpha2, "Fairness weight")->capture_default_str();
  std::optional<std::string> alpha2_list;
  app.add_option("--alpha2-list", alpha2_list, "Sweep values, comma separated (default 0,0.5,...,10)");
  app.add_option("--samples", c.samples, "CLA training samples")->capture_default_str();
  app.add_option("--holdout", c.holdout, "CLA holdout samples")->capture_default_str();
  app.add_option("--seed", c.seed, "Seed for synthesis and sampling (holdout uses seed + 1)")->capture_default_str();
  app.add_option("--segments", c.segments, "Capability polygon segments L")->capture_default_str();
  app.add_option("--steps", c.steps, "Timesteps per day for synthesized scenarios")->capture_default_str();
  app.add_option("--max-violation-rate", c.max_violation_rate, "CLA audit threshold")->capture_default_str();
  app.add_option("--max-violation-pu", c.max_violation_pu, "CLA audit threshold")->capture_default_str();
  app.add_flag("--no-dispatch", c.no_dispatch, "Omit dispatch arrays from plan.json");

  auto* synth = app.add_subcommand("synth", "Synthesize extreme PV/demand scenarios");
  auto* build = app.add_subcommand("build-cla", "Fit and audit the linear voltage models");
  auto* optimize = app.add_subcommand("optimize", "Solve the day-ahead curtailment LP");
  auto* check = app.add_subcommand("validate", "Re-run AC validation of a stored plan");
  auto* sweep = app.add_subcommand("sweep", "Sweep the fairness weight alpha2");
  auto* demo = app.add_subcommand("demo", "Full pipeline on the shipped feeder");
  for (auto* s : {synth, build, optimize, check, sweep, demo}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fail_line("usage", e.what());
    return kError;
  }

  if (alpha2_list) {
    const auto list = parse_list(*alpha2_list);
    if (!list || list->empty()) {
      fail_line("usage", "--alpha2-list needs one or more comma separated numbers, got '" + *alpha2_list + "'");
      return kError;
    }
    c.alpha2_list = *list;
  } else {
    c.alpha2_list = default_sweep();
  }
  if (c.samples <= 0 || c.holdout <= 0 || c.steps <= 0) {
    fail_line("usage", "--samples, --holdout and --steps must be positive");
    return kError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (!fs::exists(c.network)) throw Error("network file not found: " + c.network);
    const Provenance prov{config_hash(c, command), c.seed};
    if (command == "synth") return cmd_synth(c, prov);
    if (command == "build-cla") return cmd_build_cla(c, prov);
    if (command == "optimize") return cmd_optimize(c, prov);
    if (command == "validate") return cmd_validate(c, prov);
    if (command == "sweep") return cmd_sweep(c, prov);
    return cmd_demo(c, prov);
  } catch (const Infeasible& e) {
    print_infeasible(e);
    return kInfeasible;
  } catch (const std::exception& e) {
    fail_line("runtime", e.what());
    return kError;
  }
}
