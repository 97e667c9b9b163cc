#pragma once

// Radial distribution feeder, power flow and the ENO grid cost
// G_t = S_t^2 - (S_t^0)^2 at the head of the feeder.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tricharge/errors.hpp"

namespace tricharge {

using Complex = std::complex<double>;

struct GridBus {
  int id = 0;
  // Base load per slot. A single entry applies to every slot.
  std::vector<double> p_kw;
  std::vector<double> q_kvar;
};

struct GridLine {
  int from = 0;
  int to = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

class GridCase {
 public:
  GridCase() = default;
  GridCase(std::vector<GridBus> buses, std::vector<GridLine> lines, int slack_bus, double base_kv,
           double base_kva);

  std::size_t bus_count() const { return buses_.size(); }
  std::size_t line_count() const { return lines_.size(); }
  const std::vector<GridBus>& buses() const { return buses_; }
  const std::vector<GridLine>& lines() const { return lines_; }
  int slack_bus() const { return buses_[slack_].id; }
  std::size_t slack_index() const { return slack_; }
  double base_kv() const { return base_kv_; }
  double base_kva() const { return base_kva_; }
  double base_ohm() const { return base_kv_ * base_kv_ * 1000.0 / base_kva_; }
  // Throws ScenarioError for an unknown bus id.
  std::size_t index_of(int bus_id) const;

  // Base load of a bus in a slot, kVA (consumption positive).
  Complex base_load_kva(std::size_t bus, std::size_t slot) const;
  // All base loads of a slot.
  std::vector<Complex> base_loads_kva(std::size_t slot) const;

  // Tree view rooted at the slack bus: parent bus and the series impedance
  // (pu) of the line to it; buses listed so that parents precede children.
  std::size_t parent(std::size_t bus) const { return parent_[bus]; }
  Complex line_impedance_pu(std::size_t bus) const { return z_pu_[bus]; }
  std::span<const std::size_t> topological_order() const { return order_; }

 private:
  std::vector<GridBus> buses_;
  std::vector<GridLine> lines_;
  std::size_t slack_ = 0;
  double base_kv_ = 0.0;
  double base_kva_ = 0.0;
  std::vector<std::size_t> parent_;
  std::vector<Complex> z_pu_;
  std::vector<std::size_t> order_;
};

enum class PowerFlowMethod { sweep, newton };

struct PowerFlowOptions {
  PowerFlowMethod method = PowerFlowMethod::sweep;
  double tolerance = 1e-11;  // bus power mismatch, pu
  int max_iterations = 200;
  bool newton_fallback = true;  // sweep only: refine with Newton if the sweep stalls
};

struct PowerFlowSolution {
  std::vector<Complex> voltage;  // pu, slack = 1
  Complex head_power_kva;        // power drawn from the upstream grid
  double head_apparent_kva = 0.0;
  double residual_pu = 0.0;
  int iterations = 0;
  std::vector<double> residual_trace;
};

class PowerFlowNotConverged : public NonConvergence {
 public:
  PowerFlowNotConverged(const std::string& what, std::vector<double> trace)
      : NonConvergence(what), trace_(std::move(trace)) {}
  const std::vector<double>& residual_trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

// Voltage below 0.5 pu somewhere on the feeder.
class GridInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loads are consumptions in kVA per bus (index order of case.buses());
// the slack entry is ignored.
PowerFlowSolution solve_power_flow(const GridCase& grid, std::span<const Complex> loads_kva,
                                   const PowerFlowOptions& options = {});

// max over non-slack buses of |S_spec - U_k sum_m conj(Y_km U_m)| in pu,
// computed from the line admittances independently of either solver.
double power_flow_residual(const GridCase& grid, std::span<const Complex> loads_kva,
                           std::span<const Complex> voltage);

GridCase load_grid_file(const std::filesystem::path& path);
GridCase load_ieee33();

// Grid cost of EV charging. Base loads of every bus plus the hubs'
// nonflexible loads form the reference S_t^0; EV charging is added at unity
// power factor (slot energy in kWh equals average power in kW).
class GridCostModel {
 public:
  GridCostModel() = default;
  GridCostModel(GridCase grid, std::vector<int> hub_buses, std::vector<std::vector<double>> hub_nonflex_kwh,
                std::size_t slots, PowerFlowOptions options = {});

  const GridCase& grid() const { return grid_; }
  std::size_t slots() const { return slots_; }
  std::size_t hub_count() const { return hub_bus_.size(); }
  std::size_t hub_bus_index(std::size_t hub) const { return hub_bus_[hub]; }
  double reference_head_kva(std::size_t slot) const { return reference_kva_[slot]; }

  // Head apparent power with the given EV charging (kWh per hub) in a slot.
  double head_kva(std::size_t slot, std::span<const double> ev_kwh) const;
  // G_t in kVA^2
  double slot_cost(std::size_t slot, std::span<const double> ev_kwh) const;
  // ev_kwh[hub][slot]; returns G_t for every slot.
  std::vector<double> slot_costs(const std::vector<std::vector<double>>& ev_kwh) const;
  double total_cost(const std::vector<std::vector<double>>& ev_kwh) const;

 private:
  std::vector<Complex> slot_loads(std::size_t slot, std::span<const double> ev_kwh) const;

  GridCase grid_;
  std::vector<std::size_t> hub_bus_;
  std::vector<std::vector<double>> nonflex_;
  std::size_t slots_ = 0;
  PowerFlowOptions options_;
  std::vector<double> reference_kva_;
};

// G_t for one slot; hub_slot_loads are the EV charging energies per hub.
double grid_cost(const GridCostModel& model, std::span<const double> hub_slot_loads, std::size_t slot);

}  // namespace tricharge
