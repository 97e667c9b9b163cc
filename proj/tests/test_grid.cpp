#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tricharge/grid.hpp"

using namespace tricharge;
using test_support::two_bus;

namespace {

// Textbook backward-forward sweep in physical units (V, A, ohm), written
// against the line list only.
double reference_head_kva(const GridCase& g, std::span<const Complex> loads_kva) {
  const std::size_t n = g.bus_count();
  const double v0 = g.base_kv() * 1000.0;
  std::vector<std::vector<std::size_t>> children(n);
  std::vector<std::size_t> parent(n, n);
  std::vector<Complex> z(n);
  std::vector<std::size_t> order{g.slack_index()};
  std::vector<char> seen(n, 0);
  seen[g.slack_index()] = 1;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int id = g.buses()[order[i]].id;
    for (const auto& l : g.lines()) {
      int other = l.from == id ? l.to : l.to == id ? l.from : -1;
      if (other < 0) continue;
      const std::size_t k = g.index_of(other);
      if (seen[k]) continue;
      seen[k] = 1;
      parent[k] = order[i];
      z[k] = {l.r_ohm, l.x_ohm};
      order.push_back(k);
    }
  }
  std::vector<Complex> v(n, v0);
  std::vector<Complex> branch(n);
  for (int it = 0; it < 500; ++it) {
    for (std::size_t k = 0; k < n; ++k) branch[k] = k == g.slack_index() ? 0.0 : std::conj(loads_kva[k] * 1000.0 / v[k]);
    for (std::size_t i = order.size(); i-- > 1;) branch[parent[order[i]]] += branch[order[i]];
    std::vector<Complex> next = v;
    for (std::size_t i = 1; i < order.size(); ++i) next[order[i]] = next[parent[order[i]]] - z[order[i]] * branch[order[i]];
    double change = 0.0;
    for (std::size_t k = 0; k < n; ++k) change = std::max(change, std::abs(next[k] - v[k]));
    v = next;
    if (change < 1e-9) break;
  }
  // the head current is the sum of the slack bus's children currents
  Complex head = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (parent[k] == g.slack_index()) head += branch[k];
  return std::abs(v0 * std::conj(head)) / 1000.0;
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("IEEE 33-bus data") {
  const GridCase g = load_ieee33();
  CHECK(g.bus_count() == 33);
  CHECK(g.line_count() == 32);
  double p = 0.0;
  double q = 0.0;
  for (const auto& l : g.base_loads_kva(0)) {
    p += l.real();
    q += l.imag();
  }
  CHECK(p == doctest::Approx(3715.0));
  CHECK(q == doctest::Approx(2300.0));
  CHECK_THROWS_AS(g.index_of(99), ScenarioError);
}

TEST_CASE("no load gives a flat profile") {
  const GridCase g = load_ieee33();
  const std::vector<Complex> zero(g.bus_count(), 0.0);
  for (auto m : {PowerFlowMethod::sweep, PowerFlowMethod::newton}) {
    PowerFlowOptions o;
    o.method = m;
    const PowerFlowSolution s = solve_power_flow(g, zero, o);
    for (const auto& u : s.voltage) CHECK(u == Complex(1.0, 0.0));
    CHECK(s.head_apparent_kva == 0.0);
  }
}

TEST_CASE("two-bus feeder against the closed form") {
  const double r = 0.8;
  const double x = 0.5;
  const GridCase g = two_bus(r, x);
  for (Complex s_kva : {Complex(500.0, 200.0), Complex(2500.0, 1200.0), Complex(100.0, 0.0)}) {
    const std::vector<Complex> loads{0.0, s_kva};
    const PowerFlowSolution sol = solve_power_flow(g, loads);
    // |U|^4 + (2(RP + XQ) - 1)|U|^2 + |z|^2 |S|^2 = 0, per unit
    const double zb = g.base_ohm();
    const double rp = r / zb;
    const double xp = x / zb;
    const Complex s = s_kva / g.base_kva();
    const double b = 2.0 * (rp * s.real() + xp * s.imag()) - 1.0;
    const double c = (rp * rp + xp * xp) * std::norm(s);
    const double u2 = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
    const Complex head = s + Complex(rp, xp) * std::norm(s) / u2;
    CHECK(std::norm(sol.voltage[1]) == doctest::Approx(u2).epsilon(1e-10));
    CHECK(sol.head_apparent_kva == doctest::Approx(std::abs(head) * g.base_kva()).epsilon(1e-10));
    CHECK(sol.head_apparent_kva >= std::abs(s_kva));
  }
}

TEST_CASE("IEEE 33-bus power flow residual and solver agreement") {
  const GridCase g = load_ieee33();
  const auto loads = g.base_loads_kva(0);
  PowerFlowOptions sweep;
  PowerFlowOptions newton;
  newton.method = PowerFlowMethod::newton;
  const auto a = solve_power_flow(g, loads, sweep);
  const auto b = solve_power_flow(g, loads, newton);
  CHECK(power_flow_residual(g, loads, a.voltage) <= 1e-8);
  CHECK(power_flow_residual(g, loads, b.voltage) <= 1e-8);
  CHECK(a.head_apparent_kva == doctest::Approx(b.head_apparent_kva).epsilon(1e-6));
  const double ref = reference_head_kva(g, loads);
  CHECK(std::abs(a.head_apparent_kva - ref) <= 0.01 * ref);
  // standard case: 202.7 kW of losses, minimum voltage 0.9131 pu at bus 18
  CHECK(a.head_power_kva.real() - 3715.0 == doctest::Approx(202.7).epsilon(1e-3));
  double vmin = 1.0;
  for (const auto& u : a.voltage) vmin = std::min(vmin, std::abs(u));
  CHECK(vmin == doctest::Approx(0.9131).epsilon(1e-4));
  CHECK(std::abs(a.voltage[g.index_of(18)]) == doctest::Approx(vmin));
}

TEST_CASE("overload collapses the feeder") {
  const GridCase g = load_ieee33();
  auto loads = g.base_loads_kva(0);
  loads[g.index_of(18)] += 20000.0;
  CHECK_THROWS_AS(solve_power_flow(g, loads), GridInfeasible);
}

TEST_CASE("grid cost") {
  const GridCostModel m(load_ieee33(), {18, 33}, {{100.0, 50.0, 0.0}, {20.0, 20.0, 20.0}}, 3);
  const std::vector<double> zero{0.0, 0.0};
  for (std::size_t t = 0; t < 3; ++t) CHECK(m.slot_cost(t, zero) == doctest::Approx(0.0).epsilon(1e-9));
  double last = 0.0;
  for (int i = 1; i <= 20; ++i) {
    const std::vector<double> l{50.0 * i, 0.0};
    const double g = grid_cost(m, l, 1);
    CHECK(g > last);
    last = g;
  }
  const std::vector<double> one{300.0, 200.0};
  const std::vector<double> two{600.0, 400.0};
  CHECK(m.slot_cost(0, two) > 2.0 * m.slot_cost(0, one));
}

TEST_CASE("grid cost is nonnegative and slot-order independent") {
  const GridCostModel m(load_ieee33(), {18, 22, 25, 33}, std::vector<std::vector<double>>(4, std::vector<double>(4, 30.0)), 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> load(0.0, 600.0);
  for (int k = 0; k < 30; ++k) {
    std::vector<std::vector<double>> ev(4, std::vector<double>(4));
    for (auto& h : ev)
      for (double& v : h) v = load(rng);
    const auto costs = m.slot_costs(ev);
    for (double c : costs) CHECK(c >= 0.0);
    double reversed = 0.0;
    for (std::size_t t = 4; t-- > 0;) {
      std::vector<double> col{ev[0][t], ev[1][t], ev[2][t], ev[3][t]};
      reversed += m.slot_cost(t, col);
    }
    CHECK(m.total_cost(ev) == doctest::Approx(reversed).epsilon(1e-12));
  }
}

TEST_CASE("bad grid input") {
  CHECK_THROWS_AS(load_grid_file("/nonexistent/grid.json"), ScenarioError);
  std::vector<GridBus> buses{{1, {0.0}, {0.0}}, {2, {0.0}, {0.0}}, {3, {0.0}, {0.0}}};
  // a loop instead of a tree
  CHECK_THROWS_AS(GridCase(buses, {{1, 2, 1.0, 1.0}, {2, 3, 1.0, 1.0}, {3, 1, 1.0, 1.0}}, 1, 12.66, 1000.0),
                  ScenarioError);
  CHECK_THROWS_AS(GridCase(buses, {{1, 2, 0.0, 1.0}, {2, 3, 1.0, 1.0}}, 1, 12.66, 1000.0), ScenarioError);
}

}
