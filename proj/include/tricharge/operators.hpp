#pragma once

// Supply contract between the ENO and the CSO, and the two operators' payoffs.

#include <cstddef>
#include <span>
#include <vector>

#include "tricharge/grid.hpp"
#include "tricharge/transport.hpp"
#include "tricharge/waterfill.hpp"

namespace tricharge {

// Threshold P (kW) with unit prices mu(P) = q P below it and mu_bar(P) = q_bar P
// above it, both applied to slot energies in kWh.
struct ContractTerms {
  double threshold_kw = 0.0;
  double q = 0.0;
  double q_bar = 0.0;

  double mu() const { return q * threshold_kw; }
  double mu_bar() const { return q_bar * threshold_kw; }
  // Throws ContractViolation unless 0 <= P <= p_max and q_bar > q > 0.
  void validate(double p_max) const;
};

// C(l_tot, P)
double supply_cost_slot(double total_kwh, const ContractTerms& terms);

// C_{i,t} = (l*_t / l_tot_t) C(l_tot_t, P); zero where l_tot_t = 0.
std::vector<double> charging_supply_cost(const ChargingProfile& profile, const ContractTerms& terms);

struct HubPayoff {
  std::size_t hub = 0;
  double need_kwh = 0.0;
  double price = 0.0;    // EUR/kWh
  double revenue = 0.0;  // R_i = L_i lambda_i
  std::vector<double> supply_cost;  // C_{i,t}
  double total_supply_cost = 0.0;
};

struct PayoffBreakdown {
  double alpha = 0.0;
  double threshold_kw = 0.0;
  std::vector<HubPayoff> hubs;  // CSO hubs only
  double revenue = 0.0;
  double supply_cost = 0.0;
  std::vector<double> grid_slot_cost;  // G_t, kVA^2 (empty for CSO-only evaluations)
  double beta = 0.0;
  double grid_term = 0.0;  // beta sum_t G_t
  double pi_mid = 0.0;
  double pi_up = 0.0;
};

// Hubs as the operators see them.
struct HubEconomics {
  std::vector<HubOwner> owners;
  std::vector<NonflexProfile> profiles;
};

// EV charging per hub and slot used in the grid term: water-filling at CSO
// hubs and plug-and-charge (all in the first slot) at city hubs.
std::vector<std::vector<double>> grid_charging_profiles(const HubEconomics& hubs, std::span<const double> needs);

PayoffBreakdown cso_payoff(double alpha, const ContractTerms& terms, std::span<const double> needs,
                           const HubEconomics& hubs);

// Full breakdown including the grid term and Pi_up.
PayoffBreakdown eno_payoff(double alpha, const ContractTerms& terms, std::span<const double> needs,
                           const HubEconomics& hubs, const GridCostModel& grid, double beta);

}  // namespace tricharge
