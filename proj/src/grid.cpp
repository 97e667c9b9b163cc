#include "tricharge/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>

#include <Eigen/Dense>
#include <fmt/core.h>
#include <json.hpp>

namespace tricharge {

namespace {

constexpr double kCollapseVoltage = 0.5;

void check_voltages(std::span<const Complex> v) {
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!(std::abs(v[k]) >= kCollapseVoltage))
      throw GridInfeasible(fmt::format("voltage collapse: |U| = {:.4f} pu at bus index {}", std::abs(v[k]), k));
}

std::vector<Complex> loads_pu(const GridCase& grid, std::span<const Complex> loads_kva) {
  if (loads_kva.size() != grid.bus_count())
    throw ContractViolation(fmt::format("{} loads given for {} buses", loads_kva.size(), grid.bus_count()));
  std::vector<Complex> s(grid.bus_count());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = k == grid.slack_index() ? Complex{} : loads_kva[k] / grid.base_kva();
  return s;
}

// Net current injected into the network at every bus.
std::vector<Complex> bus_currents(const GridCase& grid, std::span<const Complex> v) {
  std::vector<Complex> current(grid.bus_count(), Complex{});
  for (std::size_t k = 0; k < grid.bus_count(); ++k) {
    if (k == grid.slack_index()) continue;
    const std::size_t m = grid.parent(k);
    const Complex i_line = (v[m] - v[k]) / grid.line_impedance_pu(k);  // from parent to k
    current[m] += i_line;
    current[k] -= i_line;
  }
  return current;
}

Complex head_power(const GridCase& grid, std::span<const Complex> v) {
  const std::vector<Complex> current = bus_currents(grid, v);
  const std::size_t s = grid.slack_index();
  return v[s] * std::conj(current[s]) * grid.base_kva();
}

PowerFlowSolution finish(const GridCase& grid, std::vector<Complex> v, double residual, int iterations,
                         std::vector<double> trace) {
  PowerFlowSolution out;
  out.head_power_kva = head_power(grid, v);
  out.head_apparent_kva = std::abs(out.head_power_kva);
  out.voltage = std::move(v);
  out.residual_pu = residual;
  out.iterations = iterations;
  out.residual_trace = std::move(trace);
  return out;
}

PowerFlowSolution solve_newton(const GridCase& grid, std::span<const Complex> loads_kva,
                               const PowerFlowOptions& options, std::vector<Complex> v,
                               std::vector<double> trace) {
  const std::size_t n = grid.bus_count();
  const std::vector<Complex> spec = loads_pu(grid, loads_kva);
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    if (k == grid.slack_index()) continue;
    const auto a = static_cast<Eigen::Index>(k);
    const auto b = static_cast<Eigen::Index>(grid.parent(k));
    const Complex yl = 1.0 / grid.line_impedance_pu(k);
    y(a, a) += yl;
    y(b, b) += yl;
    y(a, b) -= yl;
    y(b, a) -= yl;
  }
  std::vector<Eigen::Index> pq;
  for (std::size_t k = 0; k < n; ++k)
    if (k != grid.slack_index()) pq.push_back(static_cast<Eigen::Index>(k));
  const auto m = static_cast<Eigen::Index>(pq.size());

  Eigen::VectorXcd u(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) u(static_cast<Eigen::Index>(k)) = v[k];
  const int base_iterations = static_cast<int>(trace.size());
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Eigen::VectorXcd ibus = y * u;
    Eigen::VectorXd mismatch(2 * m);
    double residual = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const Eigen::Index k = pq[static_cast<std::size_t>(r)];
      const Complex f = u(k) * std::conj(ibus(k)) + spec[static_cast<std::size_t>(k)];
      mismatch(r) = f.real();
      mismatch(m + r) = f.imag();
      residual = std::max(residual, std::abs(f));
    }
    trace.push_back(residual);
    std::vector<Complex> vv(u.data(), u.data() + u.size());
    check_voltages(vv);
    if (residual <= options.tolerance)
      return finish(grid, std::move(vv), residual, base_iterations + it, std::move(trace));
    if (it == options.max_iterations) break;

    // dS/dtheta and dS/d|U| (complex), restricted to non-slack buses
    const Eigen::VectorXcd unit = u.array() / u.array().abs();
    const Eigen::MatrixXcd du = u.asDiagonal();
    const Eigen::MatrixXcd di = ibus.asDiagonal();
    const Eigen::MatrixXcd ds_dth = Complex(0.0, 1.0) * du * (di - y * du).conjugate();
    const Eigen::MatrixXcd ds_dvm = du * (y * unit.asDiagonal()).conjugate() + di.conjugate() * unit.asDiagonal();
    Eigen::MatrixXd jac(2 * m, 2 * m);
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < m; ++c) {
        const Complex a = ds_dth(pq[static_cast<std::size_t>(r)], pq[static_cast<std::size_t>(c)]);
        const Complex b = ds_dvm(pq[static_cast<std::size_t>(r)], pq[static_cast<std::size_t>(c)]);
        jac(r, c) = a.real();
        jac(r, m + c) = b.real();
        jac(m + r, c) = a.imag();
        jac(m + r, m + c) = b.imag();
      }
    const Eigen::VectorXd step = jac.partialPivLu().solve(-mismatch);
    for (Eigen::Index r = 0; r < m; ++r) {
      const Eigen::Index k = pq[static_cast<std::size_t>(r)];
      const double th = std::arg(u(k)) + step(r);
      const double vm = std::abs(u(k)) + step(m + r);
      u(k) = std::polar(vm, th);
    }
  }
  throw PowerFlowNotConverged(
      fmt::format("Newton power flow did not reach {:.1e} pu in {} iterations (residual {:.3e})", options.tolerance,
                  options.max_iterations, trace.empty() ? 0.0 : trace.back()),
      std::move(trace));
}

PowerFlowSolution solve_sweep(const GridCase& grid, std::span<const Complex> loads_kva,
                              const PowerFlowOptions& options) {
  const std::size_t n = grid.bus_count();
  const std::vector<Complex> load = loads_pu(grid, loads_kva);
  std::vector<Complex> v(n, Complex{1.0, 0.0});
  std::vector<Complex> branch(n);
  std::vector<double> trace;
  const auto order = grid.topological_order();
  double best = power_flow_residual(grid, loads_kva, v);
  int stalled = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    // backward: branch currents towards the slack
    for (std::size_t k = 0; k < n; ++k) branch[k] = std::conj(load[k] / v[k]);
    for (auto it_k = order.rbegin(); it_k != order.rend(); ++it_k) {
      const std::size_t k = *it_k;
      if (k != grid.slack_index()) branch[grid.parent(k)] += branch[k];
    }
    // forward: voltage drops from the slack
    for (std::size_t k : order)
      if (k != grid.slack_index()) v[k] = v[grid.parent(k)] - grid.line_impedance_pu(k) * branch[k];
    check_voltages(v);
    const double residual = power_flow_residual(grid, loads_kva, v);
    trace.push_back(residual);
    if (residual <= options.tolerance) return finish(grid, std::move(v), residual, it, std::move(trace));
    if (residual < 0.5 * best) {
      best = residual;
      stalled = 0;
    } else if (++stalled >= 5) {
      break;
    }
  }
  if (options.newton_fallback) return solve_newton(grid, loads_kva, options, std::move(v), std::move(trace));
  throw PowerFlowNotConverged(
      fmt::format("backward-forward sweep stalled at residual {:.3e} pu", trace.empty() ? 0.0 : trace.back()),
      std::move(trace));
}

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!obj.is_object()) throw ScenarioError(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ScenarioError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <class T>
T required(const json& obj, const char* key, std::string_view where) {
  if (!obj.contains(key)) throw ScenarioError(fmt::format("missing key '{}' in {}", key, where));
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError(fmt::format("bad value for '{}' in {}: {}", key, where, e.what()));
  }
}

}  // namespace

GridCase::GridCase(std::vector<GridBus> buses, std::vector<GridLine> lines, int slack_bus, double base_kv,
                   double base_kva)
    : buses_(std::move(buses)), lines_(std::move(lines)), base_kv_(base_kv), base_kva_(base_kva) {
  if (buses_.empty()) throw ScenarioError("grid has no buses");
  if (!(base_kv_ > 0.0) || !(base_kva_ > 0.0)) throw ScenarioError("grid bases must be positive");
  std::set<int> ids;
  for (const auto& b : buses_) {
    if (!ids.insert(b.id).second) throw ScenarioError(fmt::format("duplicate bus id {}", b.id));
    if (b.p_kw.empty() || b.q_kvar.empty())
      throw ScenarioError(fmt::format("bus {} needs at least one load entry", b.id));
  }
  if (lines_.size() + 1 != buses_.size())
    throw ScenarioError(fmt::format("radial feeder needs {} lines, got {}", buses_.size() - 1, lines_.size()));
  slack_ = index_of(slack_bus);
  const std::size_t n = buses_.size();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacent(n);  // (bus, line)
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    const auto& line = lines_[l];
    if (!(line.r_ohm > 0.0)) throw ScenarioError(fmt::format("line {}-{} needs positive resistance", line.from, line.to));
    const std::size_t a = index_of(line.from);
    const std::size_t b = index_of(line.to);
    if (a == b) throw ScenarioError(fmt::format("line {}-{} is a loop", line.from, line.to));
    adjacent[a].emplace_back(b, l);
    adjacent[b].emplace_back(a, l);
  }
  parent_.assign(n, n);
  z_pu_.assign(n, Complex{});
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(slack_);
  seen[slack_] = true;
  parent_[slack_] = slack_;
  while (!frontier.empty()) {
    const std::size_t k = frontier.front();
    frontier.pop();
    order_.push_back(k);
    for (auto [m, l] : adjacent[k]) {
      if (seen[m]) continue;
      seen[m] = true;
      parent_[m] = k;
      z_pu_[m] = Complex(lines_[l].r_ohm, lines_[l].x_ohm) / base_ohm();
      frontier.push(m);
    }
  }
  if (order_.size() != n) throw ScenarioError("grid is not connected");
}

std::size_t GridCase::index_of(int bus_id) const {
  for (std::size_t k = 0; k < buses_.size(); ++k)
    if (buses_[k].id == bus_id) return k;
  throw ScenarioError(fmt::format("unknown bus id {}", bus_id));
}

Complex GridCase::base_load_kva(std::size_t bus, std::size_t slot) const {
  const auto pick = [&](const std::vector<double>& v) {
    if (v.size() == 1) return v.front();
    if (slot >= v.size())
      throw ScenarioError(fmt::format("bus {} has no load for slot {}", buses_[bus].id, slot));
    return v[slot];
  };
  return {pick(buses_[bus].p_kw), pick(buses_[bus].q_kvar)};
}

std::vector<Complex> GridCase::base_loads_kva(std::size_t slot) const {
  std::vector<Complex> out(buses_.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = base_load_kva(k, slot);
  return out;
}

double power_flow_residual(const GridCase& grid, std::span<const Complex> loads_kva, std::span<const Complex> voltage) {
  const std::vector<Complex> spec = loads_pu(grid, loads_kva);
  const std::vector<Complex> current = bus_currents(grid, voltage);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.bus_count(); ++k) {
    if (k == grid.slack_index()) continue;
    // injection is minus the load
    worst = std::max(worst, std::abs(-spec[k] - voltage[k] * std::conj(current[k])));
  }
  return worst;
}

PowerFlowSolution solve_power_flow(const GridCase& grid, std::span<const Complex> loads_kva,
                                   const PowerFlowOptions& options) {
  if (options.method == PowerFlowMethod::newton)
    return solve_newton(grid, loads_kva, options, std::vector<Complex>(grid.bus_count(), Complex{1.0, 0.0}), {});
  return solve_sweep(grid, loads_kva, options);
}

GridCase load_grid_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(fmt::format("cannot open grid file {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ScenarioError(fmt::format("grid file {} is not valid JSON: {}", path.string(), e.what()));
  }
  reject_unknown(doc, {"description", "base_kv", "base_kva", "slack", "buses", "lines"}, "grid file");
  std::vector<GridBus> buses;
  for (const auto& b : required<json>(doc, "buses", "grid file")) {
    reject_unknown(b, {"id", "p_kw", "q_kvar"}, "grid bus");
    buses.push_back({required<int>(b, "id", "grid bus"), required<std::vector<double>>(b, "p_kw", "grid bus"),
                     required<std::vector<double>>(b, "q_kvar", "grid bus")});
  }
  std::vector<GridLine> lines;
  for (const auto& l : required<json>(doc, "lines", "grid file")) {
    reject_unknown(l, {"from", "to", "r_ohm", "x_ohm"}, "grid line");
    lines.push_back({required<int>(l, "from", "grid line"), required<int>(l, "to", "grid line"),
                     required<double>(l, "r_ohm", "grid line"), required<double>(l, "x_ohm", "grid line")});
  }
  return GridCase(std::move(buses), std::move(lines), required<int>(doc, "slack", "grid file"),
                  required<double>(doc, "base_kv", "grid file"), required<double>(doc, "base_kva", "grid file"));
}

GridCase load_ieee33() { return load_grid_file(std::filesystem::path(TRICHARGE_DATA_DIR) / "ieee33.json"); }

GridCostModel::GridCostModel(GridCase grid, std::vector<int> hub_buses, std::vector<std::vector<double>> hub_nonflex_kwh,
                             std::size_t slots, PowerFlowOptions options)
    : grid_(std::move(grid)), nonflex_(std::move(hub_nonflex_kwh)), slots_(slots), options_(options) {
  if (hub_buses.size() != nonflex_.size()) throw ScenarioError("one nonflexible profile per hub is required");
  for (std::size_t h = 0; h < hub_buses.size(); ++h) {
    const std::size_t k = grid_.index_of(hub_buses[h]);
    if (k == grid_.slack_index()) throw ScenarioError(fmt::format("hub {} sits on the slack bus", h));
    if (nonflex_[h].size() != slots_) throw ScenarioError(fmt::format("hub {} profile has the wrong length", h));
    hub_bus_.push_back(k);
  }
  const std::vector<double> none(hub_bus_.size(), 0.0);
  reference_kva_.resize(slots_);
  for (std::size_t t = 0; t < slots_; ++t)
    reference_kva_[t] = solve_power_flow(grid_, slot_loads(t, none), options_).head_apparent_kva;
}

std::vector<Complex> GridCostModel::slot_loads(std::size_t slot, std::span<const double> ev_kwh) const {
  if (slot >= slots_) throw ContractViolation(fmt::format("slot {} out of range", slot));
  if (ev_kwh.size() != hub_bus_.size()) throw ContractViolation("one EV load per hub is required");
  std::vector<Complex> loads = grid_.base_loads_kva(slot);
  for (std::size_t h = 0; h < hub_bus_.size(); ++h) {
    if (!(ev_kwh[h] >= 0.0)) throw ContractViolation(fmt::format("negative EV load {} at hub {}", ev_kwh[h], h));
    loads[hub_bus_[h]] += Complex(nonflex_[h][slot] + ev_kwh[h], 0.0);
  }
  return loads;
}

double GridCostModel::head_kva(std::size_t slot, std::span<const double> ev_kwh) const {
  return solve_power_flow(grid_, slot_loads(slot, ev_kwh), options_).head_apparent_kva;
}

double GridCostModel::slot_cost(std::size_t slot, std::span<const double> ev_kwh) const {
  bool any = false;
  for (double e : ev_kwh) any = any || e != 0.0;
  if (!any) {
    slot_loads(slot, ev_kwh);  // validates
    return 0.0;
  }
  const double s = head_kva(slot, ev_kwh);
  const double s0 = reference_kva_[slot];
  return (s - s0) * (s + s0);
}

std::vector<double> GridCostModel::slot_costs(const std::vector<std::vector<double>>& ev_kwh) const {
  if (ev_kwh.size() != hub_bus_.size()) throw ContractViolation("one EV profile per hub is required");
  std::vector<double> out(slots_);
  std::vector<double> column(hub_bus_.size());
  for (std::size_t t = 0; t < slots_; ++t) {
    for (std::size_t h = 0; h < hub_bus_.size(); ++h) {
      if (ev_kwh[h].size() != slots_) throw ContractViolation("EV profile has the wrong length");
      column[h] = ev_kwh[h][t];
    }
    out[t] = slot_cost(t, column);
  }
  return out;
}

double GridCostModel::total_cost(const std::vector<std::vector<double>>& ev_kwh) const {
  double sum = 0.0;
  for (double g : slot_costs(ev_kwh)) sum += g;
  return sum;
}

double grid_cost(const GridCostModel& model, std::span<const double> hub_slot_loads, std::size_t slot) {
  return model.slot_cost(slot, hub_slot_loads);
}

}  // namespace tricharge
