#pragma once

// Road network, Park & Ride hubs, vehicle classes and per-vehicle costs.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tricharge {

// g: gasoline, e0: EV that must charge at a hub, e1: EV that may charge later.
enum class VehicleKind { gasoline = 0, ev_hub_only = 1, ev_flexible = 2 };
inline constexpr std::size_t kVehicleKinds = 3;
inline constexpr std::array<VehicleKind, kVehicleKinds> kAllVehicleKinds = {
    VehicleKind::gasoline, VehicleKind::ev_hub_only, VehicleKind::ev_flexible};

std::string_view to_string(VehicleKind kind);
VehicleKind parse_vehicle_kind(std::string_view tag);

enum class ChargeDecision { at_hub, later, not_applicable };
std::string_view to_string(ChargeDecision decision);

enum class HubOwner { cso, city };
std::string_view to_string(HubOwner owner);
HubOwner parse_hub_owner(std::string_view tag);

struct Arc {
  int id = 0;
  int tail = 0;
  int head = 0;
  double length_km = 0.0;
  double speed_kmh = 0.0;
  double capacity_frac = 0.0;  // share of the whole fleet
};

struct Hub {
  int id = 0;
  int node = 0;
  HubOwner owner = HubOwner::cso;
  double pt_fare_eur = 0.0;
  int bus = 0;
  std::vector<double> nonflex_kwh;  // one entry per time slot
};

struct VehicleClass {
  VehicleKind kind = VehicleKind::gasoline;
  double consumption_per_km = 0.0;  // kWh/km for EVs, L/km for GVs
  double top_up_kwh = 0.0;          // s_j, EV classes only
  // Fuel price (GV, EUR/L) or home charging price (e1, EUR/kWh). Unused for e0.
  double unit_price = 0.0;
};

struct OdDemand {
  int origin = 0;
  int destination = 0;
  std::array<double, kVehicleKinds> vehicles{};  // indexed by VehicleKind
};

struct TransportScenario {
  std::vector<int> nodes;
  std::vector<Arc> arcs;
  std::vector<Hub> hubs;
  std::array<VehicleClass, kVehicleKinds> classes{};  // indexed by VehicleKind
  std::vector<OdDemand> demands;
  double fleet_size = 0.0;         // N, vehicles
  double value_of_time = 0.0;      // tau, EUR/h
  double city_charge_price = 0.0;  // lambda0_S, EUR/kWh
  int slots = 0;                   // T

  const VehicleClass& vehicle_class(VehicleKind kind) const {
    return classes[static_cast<std::size_t>(kind)];
  }
  double total_demand() const;

  // Throws ScenarioError naming the first violated invariant.
  void validate() const;
};

struct Route {
  std::size_t od = 0;
  std::size_t hub = 0;  // index into TransportScenario::hubs
  std::vector<std::size_t> arcs;  // indices into TransportScenario::arcs
  double length_km = 0.0;
};

// A driving route expanded with a vehicle class and a charging decision.
struct GlobalPath {
  std::size_t id = 0;
  std::size_t route = 0;
  std::size_t od = 0;
  std::size_t hub = 0;
  VehicleKind kind = VehicleKind::gasoline;
  ChargeDecision decision = ChargeDecision::not_applicable;
  double length_km = 0.0;
  std::vector<std::size_t> arcs;
};

struct PathSet {
  std::vector<Route> routes;
  std::vector<GlobalPath> paths;
  std::vector<std::string> warnings;  // unreachable (origin, hub) pairs
};

// BPR congestion cost of one arc in EUR. The flow is a vehicle count and is
// normalised by the fleet size before applying the capacity share.
double bpr_travel_cost(const Arc& arc, double total_arc_flow,
                       const TransportScenario& scenario);
// Antiderivative of bpr_travel_cost from 0 to total_arc_flow (EUR x vehicles).
double bpr_cost_integral(const Arc& arc, double total_arc_flow,
                         const TransportScenario& scenario);
double bpr_cost_derivative(const Arc& arc, double total_arc_flow,
                           const TransportScenario& scenario);

// Energy drawn by one vehicle of this class on the path: kWh for EVs
// (driving consumption plus top-up), litres for GVs.
double energy_need(const VehicleClass& vehicle, const GlobalPath& path);

enum class PriceSource { fuel, home, city_hub, cso_hub };

struct UnitPrice {
  PriceSource source = PriceSource::fuel;
  double value = 0.0;
};

// Source of the energy price a (class, path) pair must pay.
PriceSource required_price_source(const TransportScenario& scenario,
                                  const GlobalPath& path);

// Total cost of one vehicle: congestion + PT fare + energy. Throws
// ContractViolation if the price source does not match the path.
double path_cost(const TransportScenario& scenario, const GlobalPath& path,
                 std::span<const double> arc_flows, UnitPrice price);

// k shortest loopless routes (by free-flow length) from every origin to every
// hub, expanded into per-class global paths. Ordering: OD, hub, route rank,
// then g, e0/hub, e1/hub, e1/later.
PathSet enumerate_paths(const TransportScenario& scenario, std::size_t k);

}  // namespace tricharge
