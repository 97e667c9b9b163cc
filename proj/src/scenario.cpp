#include "tricharge/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <json.hpp>

namespace tricharge {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Strict object reader: every key must be consumed by finish().
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ScenarioError(fmt::format("{} must be an object", where_));
  }

  bool has(const char* key) const { return obj_.contains(key); }

  template <class T>
  void optional(const char* key, T& field) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    field = convert<T>(obj_.at(key), key);
  }

  template <class T>
  void optional(const char* key, std::optional<T>& field) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    const json& v = obj_.at(key);
    field = v.is_null() ? std::nullopt : std::optional<T>(convert<T>(v, key));
  }

  template <class T>
  T required(const char* key) {
    if (!obj_.contains(key)) throw ScenarioError(fmt::format("missing key '{}' in {}", key, where_));
    seen_.insert(key);
    return convert<T>(obj_.at(key), key);
  }

  const json& raw(const char* key) {
    if (!obj_.contains(key)) throw ScenarioError(fmt::format("missing key '{}' in {}", key, where_));
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      (void)value;
      if (!seen_.count(key)) throw ScenarioError(fmt::format("unknown key '{}' in {}", key, where_));
    }
  }

 private:
  template <class T>
  T convert(const json& v, const char* key) const {
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ScenarioError(fmt::format("key '{}' in {} has the wrong type", key, where_));
    }
  }

  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class V>
std::map<int, V> int_keyed(const json& obj, const char* where) {
  if (!obj.is_object()) throw ScenarioError(fmt::format("{} must be an object keyed by hub id", where));
  std::map<int, V> out;
  for (const auto& [key, value] : obj.items()) {
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size()) throw ScenarioError(fmt::format("'{}' in {} is not a hub id", key, where));
    try {
      out[id] = value.template get<V>();
    } catch (const json::exception&) {
      throw ScenarioError(fmt::format("value for hub {} in {} has the wrong type", id, where));
    }
  }
  return out;
}

template <class V>
json int_keyed_json(const std::map<int, V>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = v;
  return out;
}

json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(fmt::format("{} is not valid JSON: {}", what, e.what()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path resolve(const Scenario& scenario, const std::string& name) {
  const std::filesystem::path p(name);
  if (p.is_absolute()) return p;
  if (!scenario.base_dir.empty() && std::filesystem::exists(scenario.base_dir / p)) return scenario.base_dir / p;
  return std::filesystem::path(TRICHARGE_DATA_DIR) / p;
}

struct NetworkHub {
  Hub hub;
  std::optional<double> total_mwh;
};

struct NetworkFile {
  std::vector<int> nodes;
  std::vector<Arc> arcs;
  std::vector<NetworkHub> hubs;
  std::vector<std::tuple<int, int, double>> demands;  // origin, destination, vehicles
};

NetworkFile read_network(const std::filesystem::path& path) {
  const json doc = parse_text(read_file(path), path.string());
  Reader top(doc, "network file");
  std::string description;
  top.optional("description", description);
  NetworkFile net;
  for (const auto& n : top.raw("nodes")) {
    if (n.is_number_integer()) {
      net.nodes.push_back(n.get<int>());
      continue;
    }
    Reader r(n, "network node");
    net.nodes.push_back(r.required<int>("id"));
    double coord = 0.0;
    r.optional("x", coord);
    r.optional("y", coord);
    r.finish();
  }
  for (const auto& a : top.raw("arcs")) {
    Reader r(a, "network arc");
    Arc arc;
    arc.id = r.required<int>("id");
    arc.tail = r.required<int>("tail");
    arc.head = r.required<int>("head");
    arc.length_km = r.required<double>("length_km");
    arc.speed_kmh = r.required<double>("speed_kmh");
    arc.capacity_frac = r.required<double>("capacity_frac");
    r.finish();
    net.arcs.push_back(arc);
  }
  for (const auto& h : top.raw("hubs")) {
    Reader r(h, "network hub");
    NetworkHub nh;
    nh.hub.id = r.required<int>("id");
    nh.hub.node = r.required<int>("node");
    try {
      nh.hub.owner = parse_hub_owner(r.required<std::string>("owner"));
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(fmt::format("hub {}: {}", nh.hub.id, e.what()));
    }
    r.optional("pt_fare_eur", nh.hub.pt_fare_eur);
    nh.hub.bus = r.required<int>("bus");
    r.optional("nonflex_kwh", nh.hub.nonflex_kwh);
    double total = 0.0;
    if (r.has("nonflex_total_mwh")) {
      r.optional("nonflex_total_mwh", total);
      nh.total_mwh = total;
    }
    if (nh.hub.nonflex_kwh.empty() && !nh.total_mwh)
      throw ScenarioError(fmt::format("hub {} needs nonflex_kwh or nonflex_total_mwh", nh.hub.id));
    r.finish();
    net.hubs.push_back(std::move(nh));
  }
  for (const auto& d : top.raw("od_demands")) {
    Reader r(d, "OD demand");
    net.demands.emplace_back(r.required<int>("origin"), r.required<int>("destination"), r.required<double>("vehicles"));
    r.finish();
  }
  top.finish();
  return net;
}

void check_positive(double v, const char* name) {
  if (!(v > 0.0)) throw ScenarioError(fmt::format("{} must be > 0 (got {})", name, v));
}
void check_nonnegative(double v, const char* name) {
  if (!(v >= 0.0)) throw ScenarioError(fmt::format("{} must be >= 0 (got {})", name, v));
}
void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ScenarioError(fmt::format("{} must be in [0, 1] (got {})", name, v));
}

}  // namespace

void ScenarioConfig::validate() const {
  check_unit(ev_share, "ev_share");
  check_unit(e0_share, "e0_share");
  if (slots < 1) throw ScenarioError("slots must be >= 1");
  if (k_paths < 1) throw ScenarioError("k_paths must be >= 1");
  check_positive(value_of_time, "value_of_time");
  check_positive(ev_consumption, "ev_consumption");
  check_positive(gv_consumption, "gv_consumption");
  check_nonnegative(fuel_price, "fuel_price");
  check_nonnegative(home_price, "home_price");
  check_nonnegative(city_hub_price, "city_hub_price");
  check_nonnegative(top_up_e1, "top_up_e1");
  if (!(top_up_e0 >= top_up_e1)) throw ScenarioError("top_up_e0 must be >= top_up_e1");
  if (!(city_hub_price > home_price)) throw ScenarioError("city_hub_price must exceed home_price");
  if (speed_kmh) check_positive(*speed_kmh, "speed_kmh");
  if (capacity_frac) check_positive(*capacity_frac, "capacity_frac");
  check_positive(alpha_max, "alpha_max");
  check_positive(p_max_kw, "p_max_kw");
  check_positive(q, "q");
  if (!(q_bar_ratio > 1.0)) throw ScenarioError("q_bar_ratio must be > 1");
  check_nonnegative(beta, "beta");
  check_positive(price_threshold_unit_kw, "price_threshold_unit_kw");
  check_positive(grid_power_unit_kva, "grid_power_unit_kva");
  for (const auto& [hub, fare] : pt_fares) check_nonnegative(fare, "pt_fares");
  if (cso_pt_fare) check_nonnegative(*cso_pt_fare, "cso_pt_fare");
  for (const auto& [hub, total] : nonflex_totals_mwh) check_nonnegative(total, "nonflex_totals_mwh");
  check_positive(solver.wardrop_relative_tolerance, "solver.wardrop_relative_tolerance");
  if (solver.wardrop_max_sweeps < 1) throw ScenarioError("solver.wardrop_max_sweeps must be >= 1");
  if (solver.restarts < 1) throw ScenarioError("solver.restarts must be >= 1");
  check_positive(solver.eta, "solver.eta");
  if (solver.eps_mid) check_positive(*solver.eps_mid, "solver.eps_mid");
  if (solver.brent_windows < 1) throw ScenarioError("solver.brent_windows must be >= 1");
  if (solver.max_outer_iterations < 1) throw ScenarioError("solver.max_outer_iterations must be >= 1");
  if (solver.max_candidates < solver.restarts) throw ScenarioError("solver.max_candidates must be >= restarts");
  if (solver.workers < 1) throw ScenarioError("solver.workers must be >= 1");
  check_nonnegative(baseline.alpha_tilde, "baseline.alpha_tilde");
  if (!(baseline.theta > 0.0 && baseline.theta <= 1.0)) throw ScenarioError("baseline.theta must be in (0, 1]");
  check_positive(baseline.tolerance_kwh, "baseline.tolerance_kwh");
  if (baseline.max_iterations < 1) throw ScenarioError("baseline.max_iterations must be >= 1");
  check_positive(baseline.fd_step_kwh, "baseline.fd_step_kwh");
  check_positive(baseline.grid_power_unit_kva, "baseline.grid_power_unit_kva");
  if (baseline.stall_window < 1) throw ScenarioError("baseline.stall_window must be >= 1");
  if (!(baseline.min_theta > 0.0 && baseline.min_theta <= baseline.theta))
    throw ScenarioError("baseline.min_theta must be in (0, theta]");
}

ScenarioConfig parse_scenario_config(const std::string& json_text) {
  const json doc = parse_text(json_text, "scenario file");
  Reader r(doc, "scenario file");
  ScenarioConfig c;
  std::string description;
  r.optional("description", description);
  r.optional("network_file", c.network_file);
  r.optional("grid_file", c.grid_file);
  r.optional("seed", c.seed);
  r.optional("nonflex_seed", c.nonflex_seed);
  r.optional("ev_share", c.ev_share);
  r.optional("e0_share", c.e0_share);
  r.optional("slots", c.slots);
  r.optional("k_paths", c.k_paths);
  r.optional("value_of_time", c.value_of_time);
  r.optional("ev_consumption", c.ev_consumption);
  r.optional("gv_consumption", c.gv_consumption);
  r.optional("fuel_price", c.fuel_price);
  r.optional("home_price", c.home_price);
  r.optional("city_hub_price", c.city_hub_price);
  r.optional("top_up_e0", c.top_up_e0);
  r.optional("top_up_e1", c.top_up_e1);
  r.optional("speed_kmh", c.speed_kmh);
  r.optional("capacity_frac", c.capacity_frac);
  r.optional("alpha_max", c.alpha_max);
  r.optional("p_max_kw", c.p_max_kw);
  r.optional("q", c.q);
  r.optional("q_bar_ratio", c.q_bar_ratio);
  r.optional("beta", c.beta);
  r.optional("price_threshold_unit_kw", c.price_threshold_unit_kw);
  r.optional("grid_power_unit_kva", c.grid_power_unit_kva);
  if (r.has("pt_fares")) c.pt_fares = int_keyed<double>(r.raw("pt_fares"), "pt_fares");
  r.optional("cso_pt_fare", c.cso_pt_fare);
  if (r.has("hub_buses")) c.hub_buses = int_keyed<int>(r.raw("hub_buses"), "hub_buses");
  if (r.has("nonflex_totals_mwh")) c.nonflex_totals_mwh = int_keyed<double>(r.raw("nonflex_totals_mwh"), "nonflex_totals_mwh");
  r.optional("hub_subset", c.hub_subset);
  if (r.has("solver")) {
    Reader s(r.raw("solver"), "solver settings");
    s.optional("wardrop_relative_tolerance", c.solver.wardrop_relative_tolerance);
    s.optional("wardrop_max_sweeps", c.solver.wardrop_max_sweeps);
    s.optional("restarts", c.solver.restarts);
    s.optional("eta", c.solver.eta);
    s.optional("eps_mid", c.solver.eps_mid);
    s.optional("brent_windows", c.solver.brent_windows);
    s.optional("max_outer_iterations", c.solver.max_outer_iterations);
    s.optional("max_candidates", c.solver.max_candidates);
    s.optional("workers", c.solver.workers);
    s.finish();
  }
  if (r.has("baseline")) {
    Reader b(r.raw("baseline"), "baseline settings");
    b.optional("alpha_tilde", c.baseline.alpha_tilde);
    b.optional("theta", c.baseline.theta);
    b.optional("tolerance_kwh", c.baseline.tolerance_kwh);
    b.optional("max_iterations", c.baseline.max_iterations);
    b.optional("fd_step_kwh", c.baseline.fd_step_kwh);
    b.optional("grid_power_unit_kva", c.baseline.grid_power_unit_kva);
    b.optional("stall_window", c.baseline.stall_window);
    b.optional("min_theta", c.baseline.min_theta);
    b.finish();
  }
  r.finish();
  c.validate();
  return c;
}

std::string scenario_config_json(const ScenarioConfig& c) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  json doc = json::object();
  doc["network_file"] = c.network_file;
  doc["grid_file"] = c.grid_file;
  doc["seed"] = c.seed;
  doc["nonflex_seed"] = opt(c.nonflex_seed);
  doc["ev_share"] = c.ev_share;
  doc["e0_share"] = c.e0_share;
  doc["slots"] = c.slots;
  doc["k_paths"] = c.k_paths;
  doc["value_of_time"] = c.value_of_time;
  doc["ev_consumption"] = c.ev_consumption;
  doc["gv_consumption"] = c.gv_consumption;
  doc["fuel_price"] = c.fuel_price;
  doc["home_price"] = c.home_price;
  doc["city_hub_price"] = c.city_hub_price;
  doc["top_up_e0"] = c.top_up_e0;
  doc["top_up_e1"] = c.top_up_e1;
  doc["speed_kmh"] = opt(c.speed_kmh);
  doc["capacity_frac"] = opt(c.capacity_frac);
  doc["alpha_max"] = c.alpha_max;
  doc["p_max_kw"] = c.p_max_kw;
  doc["q"] = c.q;
  doc["q_bar_ratio"] = c.q_bar_ratio;
  doc["beta"] = c.beta;
  doc["price_threshold_unit_kw"] = c.price_threshold_unit_kw;
  doc["grid_power_unit_kva"] = c.grid_power_unit_kva;
  doc["pt_fares"] = int_keyed_json(c.pt_fares);
  doc["cso_pt_fare"] = opt(c.cso_pt_fare);
  doc["hub_buses"] = int_keyed_json(c.hub_buses);
  doc["nonflex_totals_mwh"] = int_keyed_json(c.nonflex_totals_mwh);
  doc["hub_subset"] = c.hub_subset;
  doc["solver"] = {{"wardrop_relative_tolerance", c.solver.wardrop_relative_tolerance},
                   {"wardrop_max_sweeps", c.solver.wardrop_max_sweeps},
                   {"restarts", c.solver.restarts},
                   {"eta", c.solver.eta},
                   {"eps_mid", opt(c.solver.eps_mid)},
                   {"brent_windows", c.solver.brent_windows},
                   {"max_outer_iterations", c.solver.max_outer_iterations},
                   {"max_candidates", c.solver.max_candidates},
                   {"workers", c.solver.workers}};
  doc["baseline"] = {{"alpha_tilde", c.baseline.alpha_tilde},
                     {"theta", c.baseline.theta},
                     {"tolerance_kwh", c.baseline.tolerance_kwh},
                     {"max_iterations", c.baseline.max_iterations},
                     {"fd_step_kwh", c.baseline.fd_step_kwh},
                     {"grid_power_unit_kva", c.baseline.grid_power_unit_kva},
                     {"stall_window", c.baseline.stall_window},
                     {"min_theta", c.baseline.min_theta}};
  return doc.dump(2) + "\n";
}

Scenario load_scenario(const std::filesystem::path& path) {
  Scenario s;
  s.config = parse_scenario_config(read_file(path));
  s.base_dir = path.parent_path();
  return s;
}

Scenario default_scenario() { return load_scenario(std::filesystem::path(TRICHARGE_DATA_DIR) / "scenario_default.json"); }

std::vector<std::vector<double>> synthesize_nonflex(const std::vector<double>& totals_mwh, int slots, std::uint64_t seed) {
  if (slots < 1) throw ScenarioError("slots must be >= 1");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> unit_exp(1.0);
  std::vector<std::vector<double>> out;
  for (double total : totals_mwh) {
    if (!(total >= 0.0)) throw ScenarioError(fmt::format("nonflexible total {} MWh < 0", total));
    std::vector<double> w(static_cast<std::size_t>(slots));
    double sum = 0.0;
    for (double& v : w) sum += v = unit_exp(rng);
    for (double& v : w) v = total * 1000.0 * v / sum;
    out.push_back(std::move(w));
  }
  return out;
}

ScenarioInstance build_instance(const Scenario& scenario) {
  const ScenarioConfig& c = scenario.config;
  c.validate();
  ScenarioInstance inst;
  inst.config = c;
  NetworkFile net = read_network(resolve(scenario, c.network_file));

  std::vector<NetworkHub> hubs;
  for (const auto& h : net.hubs)
    if (c.hub_subset.empty() || std::count(c.hub_subset.begin(), c.hub_subset.end(), h.hub.id)) hubs.push_back(h);
  for (int id : c.hub_subset)
    if (std::none_of(net.hubs.begin(), net.hubs.end(), [&](const NetworkHub& h) { return h.hub.id == id; }))
      throw ScenarioError(fmt::format("hub_subset names unknown hub {}", id));
  if (hubs.empty()) throw ScenarioError("scenario has no hubs");
  auto known = [&](int id) {
    return std::any_of(hubs.begin(), hubs.end(), [&](const NetworkHub& h) { return h.hub.id == id; });
  };
  for (const auto& m : {c.pt_fares, c.nonflex_totals_mwh})
    for (const auto& [id, v] : m)
      if (!known(id)) throw ScenarioError(fmt::format("override for unknown hub {}", id));
  for (const auto& [id, bus] : c.hub_buses)
    if (!known(id)) throw ScenarioError(fmt::format("bus override for unknown hub {}", id));

  std::vector<double> totals;
  std::vector<std::size_t> synthesized;
  for (std::size_t i = 0; i < hubs.size(); ++i) {
    Hub& hub = hubs[i].hub;
    if (auto it = c.pt_fares.find(hub.id); it != c.pt_fares.end()) hub.pt_fare_eur = it->second;
    if (c.cso_pt_fare && hub.owner == HubOwner::cso) hub.pt_fare_eur = *c.cso_pt_fare;
    if (auto it = c.hub_buses.find(hub.id); it != c.hub_buses.end()) hub.bus = it->second;
    std::optional<double> total = hubs[i].total_mwh;
    if (auto it = c.nonflex_totals_mwh.find(hub.id); it != c.nonflex_totals_mwh.end()) total = it->second;
    if (total && (c.nonflex_totals_mwh.count(hub.id) || hub.nonflex_kwh.empty())) {
      totals.push_back(*total);
      synthesized.push_back(i);
    } else if (hub.nonflex_kwh.size() != static_cast<std::size_t>(c.slots)) {
      throw ScenarioError(fmt::format("hub {} nonflexible profile has {} slots, scenario has {}", hub.id,
                                      hub.nonflex_kwh.size(), c.slots));
    }
  }
  const auto profiles = synthesize_nonflex(totals, c.slots, c.nonflex_seed.value_or(c.seed));
  for (std::size_t j = 0; j < synthesized.size(); ++j) hubs[synthesized[j]].hub.nonflex_kwh = profiles[j];

  TransportScenario ts;
  ts.nodes = net.nodes;
  ts.arcs = net.arcs;
  for (Arc& a : ts.arcs) {
    if (c.speed_kmh) a.speed_kmh = *c.speed_kmh;
    if (c.capacity_frac) a.capacity_frac = *c.capacity_frac;
  }
  for (const auto& h : hubs) {
    ts.hubs.push_back(h.hub);
    inst.hub_ids.push_back(h.hub.id);
  }
  ts.classes[static_cast<std::size_t>(VehicleKind::gasoline)] = {VehicleKind::gasoline, c.gv_consumption, 0.0, c.fuel_price};
  ts.classes[static_cast<std::size_t>(VehicleKind::ev_hub_only)] = {VehicleKind::ev_hub_only, c.ev_consumption, c.top_up_e0, 0.0};
  ts.classes[static_cast<std::size_t>(VehicleKind::ev_flexible)] = {VehicleKind::ev_flexible, c.ev_consumption, c.top_up_e1, c.home_price};
  for (const auto& [origin, destination, vehicles] : net.demands) {
    OdDemand d;
    d.origin = origin;
    d.destination = destination;
    const double ev = vehicles * c.ev_share;
    d.vehicles[static_cast<std::size_t>(VehicleKind::gasoline)] = vehicles - ev;
    d.vehicles[static_cast<std::size_t>(VehicleKind::ev_hub_only)] = ev * c.e0_share;
    d.vehicles[static_cast<std::size_t>(VehicleKind::ev_flexible)] = ev - ev * c.e0_share;
    ts.demands.push_back(d);
    ts.fleet_size += vehicles;
  }
  ts.value_of_time = c.value_of_time;
  ts.city_charge_price = c.city_hub_price;
  ts.slots = c.slots;
  ts.validate();

  PathSet paths = enumerate_paths(ts, static_cast<std::size_t>(c.k_paths));
  inst.warnings = paths.warnings;
  auto model = std::make_shared<const EquilibriumModel>(ts, std::move(paths));

  std::vector<int> buses;
  std::vector<std::vector<double>> nonflex;
  for (const auto& h : ts.hubs) {
    buses.push_back(h.bus);
    nonflex.push_back(h.nonflex_kwh);
  }
  PowerFlowOptions pf;
  pf.tolerance = 1e-12;
  auto grid = std::make_shared<const GridCostModel>(load_grid_file(resolve(scenario, c.grid_file)), buses, nonflex,
                                                    static_cast<std::size_t>(c.slots), pf);

  OperatorSetting setting;
  setting.q_per_kw = c.q / c.price_threshold_unit_kw;
  setting.q_bar_per_kw = c.q * c.q_bar_ratio / c.price_threshold_unit_kw;
  setting.grid_weight = c.beta / (c.grid_power_unit_kva * c.grid_power_unit_kva);
  setting.alpha_max = c.alpha_max;
  setting.p_max_kw = c.p_max_kw;

  inst.wardrop.relative_tolerance = c.solver.wardrop_relative_tolerance;
  inst.wardrop.max_sweeps = c.solver.wardrop_max_sweeps;

  inst.trilevel.alpha_max = c.alpha_max;
  inst.trilevel.p_max = c.p_max_kw;
  inst.trilevel.eps_mid = c.solver.eps_mid;
  inst.trilevel.restarts = c.solver.restarts;
  inst.trilevel.eta = c.solver.eta;
  inst.trilevel.brent_windows = c.solver.brent_windows;
  inst.trilevel.max_outer_iterations = c.solver.max_outer_iterations;
  inst.trilevel.max_candidates = c.solver.max_candidates;
  inst.trilevel.workers = c.solver.workers;
  inst.trilevel.seed = c.seed;
  inst.trilevel.validate();

  inst.baseline.alpha_tilde = c.baseline.alpha_tilde;
  inst.baseline.theta = c.baseline.theta;
  inst.baseline.tolerance_kwh = c.baseline.tolerance_kwh;
  inst.baseline.max_iterations = c.baseline.max_iterations;
  inst.baseline.fd_step_kwh = c.baseline.fd_step_kwh;
  inst.baseline.stall_window = c.baseline.stall_window;
  inst.baseline.min_theta = c.baseline.min_theta;
  inst.baseline.validate();
  inst.baseline_grid_weight = c.beta / (c.baseline.grid_power_unit_kva * c.baseline.grid_power_unit_kva);

  inst.model = model;
  inst.grid = grid;
  inst.objectives = std::make_shared<const ScenarioObjectives>(model, grid, setting, inst.wardrop);
  return inst;
}

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::ev_share: return "ev_share";
    case SweepParameter::pt_fare: return "pt_fare";
    case SweepParameter::alpha_tilde: return "alpha_tilde";
  }
  return "?";
}

std::string_view to_string(SweepMethod m) {
  switch (m) {
    case SweepMethod::trilevel: return "trilevel";
    case SweepMethod::lmp_pc: return "lmp_pc";
    case SweepMethod::lmp_sc: return "lmp_sc";
  }
  return "?";
}

SweepParameter parse_sweep_parameter(std::string_view s) {
  for (auto p : {SweepParameter::ev_share, SweepParameter::pt_fare, SweepParameter::alpha_tilde})
    if (to_string(p) == s) return p;
  throw ScenarioError(fmt::format("unknown sweep parameter '{}'", s));
}

SweepMethod parse_sweep_method(std::string_view s) {
  for (auto m : {SweepMethod::trilevel, SweepMethod::lmp_pc, SweepMethod::lmp_sc})
    if (to_string(m) == s) return m;
  throw ScenarioError(fmt::format("unknown sweep method '{}'", s));
}

void SweepSpec::validate() const {
  if (values.empty()) throw ScenarioError("sweep needs at least one value");
  if (!std::is_sorted(values.begin(), values.end())) throw ScenarioError("sweep values must be sorted");
  if (methods.empty()) throw ScenarioError("sweep needs at least one method");
  for (double a : alpha_tildes)
    if (!(a >= 0.0)) throw ScenarioError("sweep alpha_tildes must be >= 0");
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  const json doc = parse_text(read_file(path), path.string());
  Reader r(doc, "sweep file");
  SweepSpec spec;
  spec.parameter = parse_sweep_parameter(r.required<std::string>("parameter"));
  spec.values = r.required<std::vector<double>>("values");
  if (r.has("methods")) {
    spec.methods.clear();
    for (const auto& m : r.required<std::vector<std::string>>("methods")) spec.methods.push_back(parse_sweep_method(m));
  }
  r.optional("alpha_tildes", spec.alpha_tildes);
  r.finish();
  spec.validate();
  return spec;
}

ScenarioConfig apply_sweep_value(ScenarioConfig config, SweepParameter parameter, double value) {
  switch (parameter) {
    case SweepParameter::ev_share: config.ev_share = value; break;
    case SweepParameter::pt_fare: config.cso_pt_fare = value; break;
    case SweepParameter::alpha_tilde: config.baseline.alpha_tilde = value; break;
  }
  config.validate();
  return config;
}

SweepRow solve_point(const Scenario& scenario, SweepMethod method, double param_value) {
  SweepRow row;
  row.param_value = param_value;
  row.method = method;
  row.ev_share = scenario.config.ev_share;
  row.threshold_kw = row.alpha = row.pi_up = row.pi_mid = row.grid_cost = row.revenue = kNaN;
  row.alpha_tilde = method == SweepMethod::trilevel ? kNaN : scenario.config.baseline.alpha_tilde;
  std::string aborted;
  try {
    const ScenarioInstance inst = build_instance(scenario);
    if (method == SweepMethod::trilevel) {
      const TrilevelSolution sol = trilevel_solve(*inst.objectives, inst.trilevel);
      const PayoffBreakdown b = inst.objectives->breakdown(sol.alpha, sol.threshold_kw);
      row.threshold_kw = sol.threshold_kw;
      row.alpha = sol.alpha;
      row.pi_up = b.pi_up;
      row.pi_mid = b.pi_mid;
      row.needs = inst.objectives->equilibrium(sol.alpha)->needs;
      row.grid_cost = b.grid_term;
      row.revenue = b.revenue;
      row.converged = true;
      row.iterations = sol.outer_iterations;
      row.trace = sol.trace;
    } else {
      const ScheduleMode mode = method == SweepMethod::lmp_pc ? ScheduleMode::plug_and_charge : ScheduleMode::smart;
      const BaselineRun run =
          baseline_fixed_point(*inst.model, *inst.grid, inst.baseline_grid_weight, mode, inst.baseline, inst.wardrop);
      // grid cost back in the unit of the trilevel grid term (it is linear in the weight)
      row.grid_cost = run.grid_cost * inst.objectives->setting().grid_weight / inst.baseline_grid_weight;
      row.needs = run.final_needs;
      row.revenue = run.iterations > 0 ? run.revenue : kNaN;
      row.converged = run.converged;
      row.iterations = run.iterations;
      aborted = run.abort_reason;
    }
    double total = 0.0;
    for (double l : row.needs) total += l;
    row.normalized_needs.assign(row.needs.size(), 0.0);
    if (total > 0.0)
      for (std::size_t i = 0; i < row.needs.size(); ++i) row.normalized_needs[i] = row.needs[i] / total;
    row.status = aborted.empty() ? "ok" : "aborted: " + aborted;
  } catch (const std::exception& e) {
    row.status = e.what();
    row.converged = false;
  }
  return row;
}

SweepResults run_sweep(const Scenario& scenario, const SweepSpec& spec, int threads) {
  spec.validate();
  SweepResults out;
  out.hub_ids = build_instance(scenario).hub_ids;
  struct Job {
    double value;
    SweepMethod method;
    std::optional<double> alpha_tilde;
  };
  std::vector<Job> jobs;
  for (double v : spec.values)
    for (SweepMethod m : spec.methods) {
      if (m == SweepMethod::trilevel || spec.alpha_tildes.empty()) {
        jobs.push_back({v, m, std::nullopt});
        continue;
      }
      for (double a : spec.alpha_tildes) jobs.push_back({v, m, a});
    }
  out.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      Scenario point = scenario;
      try {
        point.config = apply_sweep_value(scenario.config, spec.parameter, jobs[j].value);
        if (jobs[j].alpha_tilde) point.config.baseline.alpha_tilde = *jobs[j].alpha_tilde;
      } catch (const std::exception& e) {
        SweepRow row;
        row.param_value = jobs[j].value;
        row.method = jobs[j].method;
        row.status = e.what();
        out.rows[j] = std::move(row);
        continue;
      }
      out.rows[j] = solve_point(point, jobs[j].method, jobs[j].value);
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace tricharge
