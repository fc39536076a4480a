#include "fairpv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace fairpv {

using json = nlohmann::json;

double PlantSpec::zeta() const { return std::sqrt((1.0 - pf_min * pf_min) / (pf_min * pf_min)); }

int NetworkModel::slack() const {
  for (const auto& b : buses)
    if (b.kind == BusKind::slack) return b.id;
  throw ValidationError("no slack bus");
}

int NetworkModel::injection_index(int bus) const {
  const int s = slack();
  if (bus == s) return -1;
  return bus < s ? bus : bus - 1;
}

std::vector<int> NetworkModel::non_slack_buses() const {
  std::vector<int> out;
  const int s = slack();
  for (int i = 0; i < n_buses(); ++i)
    if (i != s) out.push_back(i);
  return out;
}

std::vector<int> NetworkModel::pv_buses() const {
  std::vector<int> out;
  for (const auto& b : buses)
    if (b.pv_plant) out.push_back(b.id);
  return out;
}

std::vector<int> NetworkModel::load_buses() const {
  std::vector<int> out;
  for (const auto& b : buses)
    if (b.load) out.push_back(b.id);
  return out;
}

std::vector<PlantSpec> NetworkModel::plants() const {
  std::vector<PlantSpec> out;
  for (const auto& b : buses)
    if (b.pv_plant) out.push_back(*b.pv_plant);
  return out;
}

void validate(const NetworkModel& net) {
  const int n = net.n_buses();
  if (n < 2) throw ValidationError("network needs at least two buses");
  if (!(net.v_min < 1.0 && 1.0 < net.v_max))
    throw ValidationError("voltage bounds must satisfy v_min < 1 < v_max");

  int slacks = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses[static_cast<std::size_t>(i)];
    if (b.id != i) throw ValidationError("bus ids must be contiguous 0..N_b-1");
    if (b.kind == BusKind::slack) {
      ++slacks;
      if (b.pv_plant || b.load) throw ValidationError("slack bus cannot carry a PV plant or load");
    }
    if (b.pv_plant) {
      if (!(b.pv_plant->s_max > 0.0))
        throw ValidationError("bus " + std::to_string(i) + ": PV s_max must be positive");
      if (!(b.pv_plant->pf_min > 0.0 && b.pv_plant->pf_min <= 1.0))
        throw ValidationError("bus " + std::to_string(i) + ": pf_min must lie in (0, 1]");
    }
    if (b.load) {
      if (b.load->peak_p < 0.0)
        throw ValidationError("bus " + std::to_string(i) + ": negative load peak");
      if (!(b.load->power_factor > 0.0 && b.load->power_factor <= 1.0))
        throw ValidationError("bus " + std::to_string(i) + ": load power factor must lie in (0, 1]");
    }
  }
  if (slacks == 0) throw ValidationError("no slack bus");
  if (slacks > 1) throw ValidationError("two slack buses");

  for (const auto& br : net.branches) {
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw ValidationError("branch references unknown bus");
    if (br.from_bus == br.to_bus) throw ValidationError("branch is a self loop");
    if (br.r < 0.0 || br.x < 0.0) throw ValidationError("branch impedance must be non-negative");
    if (!(br.r > 0.0 || br.x > 0.0)) throw ValidationError("branch has zero impedance");
  }

  if (static_cast<int>(net.branches.size()) != n - 1) {
    if (static_cast<int>(net.branches.size()) > n - 1) throw ValidationError("network not radial");
    throw ValidationError("network not connected");
  }

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& br : net.branches) {
    adj[static_cast<std::size_t>(br.from_bus)].push_back(br.to_bus);
    adj[static_cast<std::size_t>(br.to_bus)].push_back(br.from_bus);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<int> frontier;
  frontier.push(net.slack());
  seen[static_cast<std::size_t>(net.slack())] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      ++reached;
      frontier.push(v);
    }
  }
  // N_b-1 branches and not connected means a cycle exists somewhere
  if (reached != n) throw ValidationError("network not radial");
}

namespace {

std::string line_context(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
  const auto start = text.rfind('\n', byte == 0 ? 0 : byte - 1);
  const std::size_t begin = start == std::string_view::npos ? 0 : start + 1;
  const std::size_t end = std::min(text.find('\n', begin), text.size());
  std::ostringstream os;
  os << "line " << line << ", column " << (byte - begin + 1) << ": "
     << text.substr(begin, std::min<std::size_t>(end - begin, 120));
  return os.str();
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

NetworkModel parse_network(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("network JSON parse error at " + line_context(json_text, e.byte));
  }
  if (!doc.is_object()) throw ParseError("network JSON must be an object");

  NetworkModel net;
  net.s_base_kva = field<double>(doc, "s_base_kva", "network");
  net.v_base_v = field<double>(doc, "v_base_v", "network");
  net.v_min = field<double>(doc, "v_min_pu", "network");
  net.v_max = field<double>(doc, "v_max_pu", "network");
  if (!(net.s_base_kva > 0.0 && net.v_base_v > 0.0)) throw ValidationError("base values must be positive");

  if (!doc.contains("buses") || !doc.contains("branches"))
    throw ParseError("network: missing 'buses' or 'branches'");
  const auto& buses = doc["buses"];
  const auto& branches = doc["branches"];
  if (!buses.is_array() || !branches.is_array()) throw ParseError("network: 'buses' and 'branches' must be arrays");

  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto& jb = buses[i];
    const std::string where = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = field<int>(jb, "id", where);
    const auto kind = field<std::string>(jb, "kind", where);
    if (kind == "slack")
      b.kind = BusKind::slack;
    else if (kind == "pq")
      b.kind = BusKind::pq;
    else
      throw ParseError(where + ": unknown bus kind '" + kind + "'");
    b.base_kv = net.v_base_v / 1e3;
    if (auto pv = jb.find("pv"); pv != jb.end() && !pv->is_null()) {
      PlantSpec plant;
      plant.s_max = field<double>(*pv, "s_max_kva", where + ".pv") / net.s_base_kva;
      plant.pf_min = field<double>(*pv, "pf_min", where + ".pv");
      b.pv_plant = plant;
    }
    if (auto ref = jb.find("load_profile_ref"); ref != jb.end() && !ref->is_null()) {
      LoadSpec load;
      load.profile_ref = ref->get<std::string>();
      load.peak_p = jb.value("load_peak_kw", 0.0) / net.s_base_kva;
      load.power_factor = jb.value("load_pf", 0.95);
      b.load = load;
    }
    net.buses.push_back(std::move(b));
  }
  std::sort(net.buses.begin(), net.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });

  const double z_base = net.z_base_ohm();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& jb = branches[i];
    const std::string where = "branches[" + std::to_string(i) + "]";
    Branch br;
    br.from_bus = field<int>(jb, "from", where);
    br.to_bus = field<int>(jb, "to", where);
    br.r = field<double>(jb, "r_ohm", where) / z_base;
    br.x = field<double>(jb, "x_ohm", where) / z_base;
    br.b_shunt = jb.value("b_uS", 0.0) * 1e-6 * z_base;
    net.branches.push_back(br);
  }

  validate(net);
  return net;
}

NetworkModel load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("network file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string network_to_json(const NetworkModel& net) {
  json doc;
  doc["s_base_kva"] = net.s_base_kva;
  doc["v_base_v"] = net.v_base_v;
  doc["v_min_pu"] = net.v_min;
  doc["v_max_pu"] = net.v_max;
  doc["buses"] = json::array();
  for (const auto& b : net.buses) {
    json jb{{"id", b.id}, {"kind", b.kind == BusKind::slack ? "slack" : "pq"}};
    if (b.pv_plant)
      jb["pv"] = {{"s_max_kva", b.pv_plant->s_max * net.s_base_kva}, {"pf_min", b.pv_plant->pf_min}};
    if (b.load) {
      jb["load_profile_ref"] = b.load->profile_ref;
      jb["load_peak_kw"] = b.load->peak_p * net.s_base_kva;
      jb["load_pf"] = b.load->power_factor;
    }
    doc["buses"].push_back(jb);
  }
  doc["branches"] = json::array();
  const double z_base = net.z_base_ohm();
  for (const auto& br : net.branches)
    doc["branches"].push_back({{"from", br.from_bus},
                               {"to", br.to_bus},
                               {"r_ohm", br.r * z_base},
                               {"x_ohm", br.x * z_base},
                               {"b_uS", br.b_shunt / z_base * 1e6}});
  return doc.dump(2);
}

Eigen::MatrixXcd build_ybus(const NetworkModel& net) {
  const int n = net.n_buses();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : net.branches) {
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> ysh(0.0, br.b_shunt / 2.0);
    y(br.from_bus, br.to_bus) -= ys;
    y(br.to_bus, br.from_bus) -= ys;
    y(br.from_bus, br.from_bus) += ys + ysh;
    y(br.to_bus, br.to_bus) += ys + ysh;
  }
  return y;
}

}  // namespace fairpv
