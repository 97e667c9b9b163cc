#pragma once

// Small hand-built instances and independent reference computations shared by
// the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "tricharge/grid.hpp"
#include "tricharge/transport.hpp"

namespace test_support {

using namespace tricharge;

inline VehicleClass make_class(VehicleKind kind, double consumption, double top_up, double price) {
  VehicleClass c;
  c.kind = kind;
  c.consumption_per_km = consumption;
  c.top_up_kwh = top_up;
  c.unit_price = price;
  return c;
}

// Nodes 1 and 2 joined by parallel arcs (lengths in km, 50 km/h), one hub on
// node 2, all demand from node 1. Vehicles ordered g, e0, e1.
inline TransportScenario parallel_arcs(std::vector<double> lengths, double capacity, std::array<double, 3> vehicles,
                                       HubOwner owner = HubOwner::city, int slots = 3) {
  TransportScenario s;
  s.nodes = {1, 2};
  for (std::size_t i = 0; i < lengths.size(); ++i)
    s.arcs.push_back({static_cast<int>(i + 1), 1, 2, lengths[i], 50.0, capacity});
  Hub h;
  h.id = 2;
  h.node = 2;
  h.owner = owner;
  h.bus = 2;
  h.nonflex_kwh = std::vector<double>(slots, 10.0);
  s.hubs.push_back(h);
  s.classes = {make_class(VehicleKind::gasoline, 0.06, 0.0, 1.5), make_class(VehicleKind::ev_hub_only, 0.2, 5.0, 0.0),
               make_class(VehicleKind::ev_flexible, 0.2, 0.0, 0.2)};
  OdDemand od;
  od.origin = 1;
  od.destination = 2;
  od.vehicles = vehicles;
  s.demands.push_back(od);
  s.fleet_size = vehicles[0] + vehicles[1] + vehicles[2];
  s.value_of_time = 10.0;
  s.city_charge_price = 0.25;
  s.slots = slots;
  return s;
}

// Composite Simpson rule with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// min sum_t (l_t + l0_t)^2 s.t. sum l = L, l >= 0: the optimum is the
// Euclidean projection of -l0 onto the simplex of radius L, found here by
// bisection on the multiplier (a different route than the closed form).
inline std::vector<double> qp_oracle(const std::vector<double>& l0, double need) {
  std::vector<double> out(l0.size(), 0.0);
  if (need <= 0.0) return out;
  auto filled = [&](double level) {
    double s = 0.0;
    for (double v : l0) s += std::max(0.0, level - v);
    return s;
  };
  double lo = *std::min_element(l0.begin(), l0.end());
  double hi = *std::max_element(l0.begin(), l0.end()) + need;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (filled(mid) < need ? lo : hi) = mid;
  }
  const double level = 0.5 * (lo + hi);
  for (std::size_t t = 0; t < l0.size(); ++t) out[t] = std::max(0.0, level - l0[t]);
  return out;
}

inline double qp_value(const std::vector<double>& l0, const std::vector<double>& l) {
  double s = 0.0;
  for (std::size_t t = 0; t < l0.size(); ++t) s += (l[t] + l0[t]) * (l[t] + l0[t]);
  return s;
}

// Two buses, one line, base 12.66 kV / 1000 kVA.
inline GridCase two_bus(double r_ohm, double x_ohm, double p_kw = 0.0, double q_kvar = 0.0) {
  std::vector<GridBus> buses{{1, {0.0}, {0.0}}, {2, {p_kw}, {q_kvar}}};
  return GridCase(std::move(buses), {{1, 2, r_ohm, x_ohm}}, 1, 12.66, 1000.0);
}

}  // namespace test_support
