#pragma once

// Reference methods where a single system operator prices charging with the
// marginal grid cost: LMP + plug-and-charge and LMP + grid-aware smart charging.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tricharge/grid.hpp"
#include "tricharge/operators.hpp"
#include "tricharge/wardrop.hpp"

namespace tricharge {

enum class ScheduleMode { plug_and_charge, smart };
std::string_view to_string(ScheduleMode mode);

// All of L_i in the first slot.
std::vector<std::vector<double>> plug_and_charge(std::span<const double> needs, std::size_t slots);

struct ScheduleOptions {
  double gradient_step_kwh = 1e-2;  // central differences of G_t
  int max_iterations = 4000;
  double stationarity_tolerance = 1e-9;  // relative spread of active-slot gradients
};

struct ScheduleResult {
  std::vector<std::vector<double>> profiles;  // [hub][slot], kWh
  double objective = 0.0;    // weight * sum_t G_t
  double stationarity = 0.0;
  int iterations = 0;
  bool stationary = false;
  std::string warning;
};

// Minimises weight * sum_t G_t over the charging profiles of CSO hubs
// (sum_t l_it = L_i, l >= 0); city hubs plug and charge. Projected gradient
// with Armijo steps, started from the better of the water-filling and
// plug-and-charge profiles, so the result is never worse than either.
ScheduleResult grid_aware_schedule(std::span<const double> needs, const GridCostModel& grid, double weight,
                                   const HubEconomics& hubs, const ScheduleOptions& options = {});

// Grid objective of the profiles a mode produces for the given needs.
ScheduleResult schedule_for_mode(std::span<const double> needs, const GridCostModel& grid, double weight,
                                 const HubEconomics& hubs, ScheduleMode mode, const ScheduleOptions& options = {});

struct TrueLmp {
  std::vector<double> prices;  // EUR/kWh, 0 for city hubs
  std::vector<double> derivatives;  // d(weight sum G)/dL_i
  double richardson_gap = 0.0;  // max relative change when the step is halved (if requested)
};

// lambda_i = alpha_tilde d(weight sum_t G_t)/dL_i through the scheduler of the
// mode; central differences with step h (forward where L_i < h).
TrueLmp true_lmp(std::span<const double> needs, const GridCostModel& grid, double weight, const HubEconomics& hubs,
                 ScheduleMode mode, double alpha_tilde, double fd_step_kwh, const ScheduleOptions& options = {},
                 bool richardson = false);

struct BaselineConfig {
  double alpha_tilde = 0.01;
  double theta = 0.5;
  int stall_window = 5;     // iterations without residual progress before theta is halved
  double min_theta = 1e-3;
  double tolerance_kwh = 0.1;
  int max_iterations = 100;
  double fd_step_kwh = 1.0;
  ScheduleOptions schedule;

  void validate() const;
};

struct BaselineRun {
  ScheduleMode mode = ScheduleMode::plug_and_charge;
  double alpha_tilde = 0.0;
  std::vector<std::vector<double>> needs;   // L^(k), k = 0..iterations
  std::vector<std::vector<double>> prices;  // lambda^(k), k = 0..iterations-1
  std::vector<double> final_needs;          // last iterate L^(k)
  std::vector<double> final_prices;         // true_lmp(L^(k))
  double residual_kwh = 0.0;                // |L_WE(lambda^(k-1)) - L^(k-1)|_inf at the last step
  bool converged = false;
  int iterations = 0;
  double revenue = 0.0;    // sum over CSO hubs of L_i lambda_i
  double grid_cost = 0.0;  // weight * sum_t G_t of final_needs under the mode's schedule
  std::string abort_reason;
};

// Damped fixed point L <- (1 - theta) L + theta L_WE(true_lmp(L)), from L = 0.
// Converged once theta |L_WE - L|_inf <= tolerance for the configured theta.
// theta is halved while the residual stalls and whenever a step would
// collapse the feeder.
BaselineRun baseline_fixed_point(const EquilibriumModel& model, const GridCostModel& grid, double weight,
                                 ScheduleMode mode, const BaselineConfig& config,
                                 const WardropOptions& wardrop = {});

}  // namespace tricharge
