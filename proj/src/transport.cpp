#include "tricharge/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <fmt/core.h>

#include "tricharge/errors.hpp"

namespace tricharge {

std::string_view to_string(VehicleKind kind) {
  switch (kind) {
    case VehicleKind::gasoline: return "g";
    case VehicleKind::ev_hub_only: return "e0";
    case VehicleKind::ev_flexible: return "e1";
  }
  return "?";
}

VehicleKind parse_vehicle_kind(std::string_view tag) {
  if (tag == "g") return VehicleKind::gasoline;
  if (tag == "e0") return VehicleKind::ev_hub_only;
  if (tag == "e1") return VehicleKind::ev_flexible;
  throw ScenarioError(fmt::format("unknown vehicle class '{}'", tag));
}

std::string_view to_string(ChargeDecision decision) {
  switch (decision) {
    case ChargeDecision::at_hub: return "hub";
    case ChargeDecision::later: return "later";
    case ChargeDecision::not_applicable: return "none";
  }
  return "?";
}

std::string_view to_string(HubOwner owner) {
  return owner == HubOwner::cso ? "cso" : "city";
}

HubOwner parse_hub_owner(std::string_view tag) {
  if (tag == "cso") return HubOwner::cso;
  if (tag == "city") return HubOwner::city;
  throw ScenarioError(fmt::format("unknown hub owner '{}'", tag));
}

double TransportScenario::total_demand() const {
  double total = 0.0;
  for (const auto& od : demands)
    for (double v : od.vehicles) total += v;
  return total;
}

void TransportScenario::validate() const {
  std::set<int> node_ids(nodes.begin(), nodes.end());
  if (node_ids.size() != nodes.size()) throw ScenarioError("duplicate node id");
  for (const auto& a : arcs) {
    if (!node_ids.count(a.tail) || !node_ids.count(a.head))
      throw ScenarioError(fmt::format("arc {} references an unknown node", a.id));
    if (!(a.length_km > 0.0)) throw ScenarioError(fmt::format("arc {}: length must be > 0", a.id));
    if (!(a.speed_kmh > 0.0)) throw ScenarioError(fmt::format("arc {}: speed must be > 0", a.id));
    if (!(a.capacity_frac > 0.0))
      throw ScenarioError(fmt::format("arc {}: capacity must be > 0", a.id));
  }
  if (slots < 1) throw ScenarioError("number of time slots must be >= 1");
  if (hubs.empty()) throw ScenarioError("no hubs");
  for (const auto& h : hubs) {
    if (!node_ids.count(h.node))
      throw ScenarioError(fmt::format("hub {} sits on unknown node {}", h.id, h.node));
    if (h.nonflex_kwh.size() != static_cast<std::size_t>(slots))
      throw ScenarioError(fmt::format("hub {}: nonflexible profile needs {} slots", h.id, slots));
    for (double v : h.nonflex_kwh)
      if (!(v >= 0.0)) throw ScenarioError(fmt::format("hub {}: negative nonflexible load", h.id));
  }
  for (auto kind : kAllVehicleKinds) {
    const auto& c = vehicle_class(kind);
    if (c.kind != kind) throw ScenarioError("vehicle classes out of order");
    if (!(c.consumption_per_km > 0.0))
      throw ScenarioError(fmt::format("class {}: consumption must be > 0", to_string(kind)));
    if (c.top_up_kwh < 0.0)
      throw ScenarioError(fmt::format("class {}: top-up must be >= 0", to_string(kind)));
  }
  if (vehicle_class(VehicleKind::ev_hub_only).top_up_kwh <
      vehicle_class(VehicleKind::ev_flexible).top_up_kwh)
    throw ScenarioError("top-up of e0 must be >= top-up of e1");
  if (!(city_charge_price > vehicle_class(VehicleKind::ev_flexible).unit_price))
    throw ScenarioError("city hub charging price must exceed the home charging price");
  if (!(value_of_time >= 0.0)) throw ScenarioError("value of time must be >= 0");
  for (const auto& od : demands) {
    if (!node_ids.count(od.origin))
      throw ScenarioError(fmt::format("OD origin {} is not a node", od.origin));
    for (double v : od.vehicles)
      if (!(v >= 0.0)) throw ScenarioError("OD demands must be >= 0");
  }
  if (!(fleet_size > 0.0)) throw ScenarioError("fleet size must be > 0");
  if (std::abs(total_demand() - fleet_size) > 1e-9 * fleet_size)
    throw ScenarioError(fmt::format("OD demands sum to {} but the fleet size is {}",
                                    total_demand(), fleet_size));
}

namespace {

double free_flow_cost(const Arc& arc, const TransportScenario& s) {
  return s.value_of_time * arc.length_km / arc.speed_kmh;
}

}  // namespace

double bpr_travel_cost(const Arc& arc, double total_arc_flow, const TransportScenario& scenario) {
  if (!(total_arc_flow >= 0.0))
    throw std::domain_error(fmt::format("arc {}: negative flow {}", arc.id, total_arc_flow));
  const double r = total_arc_flow / scenario.fleet_size / arc.capacity_frac;
  const double r2 = r * r;
  return free_flow_cost(arc, scenario) * (1.0 + 2.0 * r2 * r2);
}

double bpr_cost_integral(const Arc& arc, double total_arc_flow, const TransportScenario& scenario) {
  if (!(total_arc_flow >= 0.0))
    throw std::domain_error(fmt::format("arc {}: negative flow {}", arc.id, total_arc_flow));
  const double share = total_arc_flow / scenario.fleet_size;
  const double r = share / arc.capacity_frac;
  const double r2 = r * r;
  // N * tau*l/v * (x + (2/5) x^5 / C^4), x the fleet share
  return scenario.fleet_size * free_flow_cost(arc, scenario) * share * (1.0 + 0.4 * r2 * r2);
}

double bpr_cost_derivative(const Arc& arc, double total_arc_flow, const TransportScenario& scenario) {
  const double scale = scenario.fleet_size * arc.capacity_frac;
  const double r = std::max(total_arc_flow, 0.0) / scale;
  return free_flow_cost(arc, scenario) * 8.0 * r * r * r / scale;
}

double energy_need(const VehicleClass& vehicle, const GlobalPath& path) {
  if (vehicle.kind != path.kind)
    throw ContractViolation(fmt::format("path {} belongs to class {}, not {}", path.id,
                                        to_string(path.kind), to_string(vehicle.kind)));
  const double driving = path.length_km * vehicle.consumption_per_km;
  return vehicle.kind == VehicleKind::gasoline ? driving : driving + vehicle.top_up_kwh;
}

PriceSource required_price_source(const TransportScenario& scenario, const GlobalPath& path) {
  switch (path.decision) {
    case ChargeDecision::not_applicable: return PriceSource::fuel;
    case ChargeDecision::later: return PriceSource::home;
    case ChargeDecision::at_hub:
      return scenario.hubs.at(path.hub).owner == HubOwner::cso ? PriceSource::cso_hub
                                                               : PriceSource::city_hub;
  }
  return PriceSource::fuel;
}

double path_cost(const TransportScenario& scenario, const GlobalPath& path,
                 std::span<const double> arc_flows, UnitPrice price) {
  if (price.source != required_price_source(scenario, path))
    throw ContractViolation(
        fmt::format("path {} ({}, {}) priced with the wrong source", path.id,
                    to_string(path.kind), to_string(path.decision)));
  if (arc_flows.size() != scenario.arcs.size())
    throw ContractViolation("arc flow vector has the wrong length");
  double congestion = 0.0;
  for (std::size_t a : path.arcs) congestion += bpr_travel_cost(scenario.arcs[a], arc_flows[a], scenario);
  const double energy = energy_need(scenario.vehicle_class(path.kind), path);
  return congestion + scenario.hubs[path.hub].pt_fare_eur + energy * price.value;
}

namespace {

// Directed graph over node indices used by the route enumeration.
struct RoadGraph {
  std::unordered_map<int, std::size_t> index_of;
  std::vector<std::vector<std::size_t>> out_arcs;  // arc indices, ascending
  std::vector<std::size_t> tail, head;
  std::vector<double> length;
};

RoadGraph build_graph(const TransportScenario& s) {
  RoadGraph g;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) g.index_of[s.nodes[i]] = i;
  g.out_arcs.resize(s.nodes.size());
  for (std::size_t a = 0; a < s.arcs.size(); ++a) {
    g.tail.push_back(g.index_of.at(s.arcs[a].tail));
    g.head.push_back(g.index_of.at(s.arcs[a].head));
    g.length.push_back(s.arcs[a].length_km);
    g.out_arcs[g.tail.back()].push_back(a);
  }
  return g;
}

struct Candidate {
  double length = 0.0;
  std::vector<std::size_t> arcs;
};

constexpr double kLengthTieTol = 1e-9;

bool shorter(const Candidate& a, const Candidate& b) {
  if (std::abs(a.length - b.length) > kLengthTieTol) return a.length < b.length;
  return a.arcs < b.arcs;
}

// Dijkstra from source to target avoiding blocked arcs and nodes.
bool shortest_route(const RoadGraph& g, std::size_t source, std::size_t target,
                    const std::vector<char>& blocked_arc, const std::vector<char>& blocked_node,
                    Candidate& out) {
  const std::size_t n = g.out_arcs.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> via(n, static_cast<std::size_t>(-1));
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    if (u == target) break;
    for (std::size_t a : g.out_arcs[u]) {
      if (blocked_arc[a]) continue;
      const std::size_t v = g.head[a];
      if (blocked_node[v]) continue;
      const double nd = d + g.length[a];
      if (nd < dist[v] - kLengthTieTol) {
        dist[v] = nd;
        via[v] = a;
        queue.emplace(nd, v);
      }
    }
  }
  if (!std::isfinite(dist[target])) return false;
  out.arcs.clear();
  for (std::size_t v = target; v != source; v = g.tail[via[v]]) out.arcs.push_back(via[v]);
  std::reverse(out.arcs.begin(), out.arcs.end());
  out.length = dist[target];
  return true;
}

std::vector<std::size_t> route_nodes(const RoadGraph& g, std::size_t source, const Candidate& c) {
  std::vector<std::size_t> nodes{source};
  for (std::size_t a : c.arcs) nodes.push_back(g.head[a]);
  return nodes;
}

// Yen's k shortest loopless paths.
std::vector<Candidate> k_shortest_routes(const RoadGraph& g, std::size_t source,
                                         std::size_t target, std::size_t k) {
  std::vector<Candidate> accepted;
  if (source == target) {
    accepted.push_back(Candidate{});
    return accepted;
  }
  const std::size_t n_arcs = g.length.size();
  std::vector<char> blocked_arc(n_arcs, 0), blocked_node(g.out_arcs.size(), 0);
  Candidate first;
  if (!shortest_route(g, source, target, blocked_arc, blocked_node, first)) return accepted;
  accepted.push_back(first);
  std::vector<Candidate> pool;
  auto known = [&](const Candidate& c) {
    auto same = [&](const Candidate& o) { return o.arcs == c.arcs; };
    return std::any_of(accepted.begin(), accepted.end(), same) ||
           std::any_of(pool.begin(), pool.end(), same);
  };
  while (accepted.size() < k) {
    const Candidate& prev = accepted.back();
    const auto prev_nodes = route_nodes(g, source, prev);
    for (std::size_t i = 0; i + 1 < prev_nodes.size(); ++i) {
      std::fill(blocked_arc.begin(), blocked_arc.end(), 0);
      std::fill(blocked_node.begin(), blocked_node.end(), 0);
      const std::vector<std::size_t> root(prev.arcs.begin(), prev.arcs.begin() + i);
      for (const auto& p : accepted)
        if (p.arcs.size() > i && std::equal(root.begin(), root.end(), p.arcs.begin()))
          blocked_arc[p.arcs[i]] = 1;
      for (std::size_t j = 0; j < i; ++j) blocked_node[prev_nodes[j]] = 1;
      Candidate spur;
      if (!shortest_route(g, prev_nodes[i], target, blocked_arc, blocked_node, spur)) continue;
      Candidate total;
      total.arcs = root;
      total.arcs.insert(total.arcs.end(), spur.arcs.begin(), spur.arcs.end());
      total.length = 0.0;
      for (std::size_t a : total.arcs) total.length += g.length[a];
      if (!known(total)) pool.push_back(std::move(total));
    }
    if (pool.empty()) break;
    auto best = std::min_element(pool.begin(), pool.end(), shorter);
    accepted.push_back(std::move(*best));
    pool.erase(best);
  }
  return accepted;
}

}  // namespace

PathSet enumerate_paths(const TransportScenario& scenario, std::size_t k) {
  if (k < 1) throw std::invalid_argument("path-count limit k must be >= 1");
  const RoadGraph g = build_graph(scenario);
  PathSet set;
  for (std::size_t od = 0; od < scenario.demands.size(); ++od) {
    const std::size_t source = g.index_of.at(scenario.demands[od].origin);
    for (std::size_t h = 0; h < scenario.hubs.size(); ++h) {
      const std::size_t target = g.index_of.at(scenario.hubs[h].node);
      auto routes = k_shortest_routes(g, source, target, k);
      if (routes.empty()) {
        set.warnings.push_back(fmt::format("hub {} unreachable from origin {}",
                                           scenario.hubs[h].id, scenario.demands[od].origin));
        continue;
      }
      for (auto& r : routes) {
        Route route{od, h, std::move(r.arcs), 0.0};
        for (std::size_t a : route.arcs) route.length_km += scenario.arcs[a].length_km;
        set.routes.push_back(std::move(route));
      }
    }
  }
  // every origin must reach at least one hub
  for (std::size_t od = 0; od < scenario.demands.size(); ++od) {
    bool reachable = std::any_of(set.routes.begin(), set.routes.end(),
                                 [&](const Route& r) { return r.od == od; });
    if (!reachable)
      throw ScenarioError(
          fmt::format("no hub is reachable from origin {}", scenario.demands[od].origin));
  }
  for (std::size_t r = 0; r < set.routes.size(); ++r) {
    const Route& route = set.routes[r];
    auto add = [&](VehicleKind kind, ChargeDecision decision) {
      GlobalPath p;
      p.id = set.paths.size();
      p.route = r;
      p.od = route.od;
      p.hub = route.hub;
      p.kind = kind;
      p.decision = decision;
      p.length_km = route.length_km;
      p.arcs = route.arcs;
      set.paths.push_back(std::move(p));
    };
    add(VehicleKind::gasoline, ChargeDecision::not_applicable);
    add(VehicleKind::ev_hub_only, ChargeDecision::at_hub);
    add(VehicleKind::ev_flexible, ChargeDecision::at_hub);
    add(VehicleKind::ev_flexible, ChargeDecision::later);
  }
  return set;
}

}  // namespace tricharge
