#include "tricharge/operators.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "tricharge/errors.hpp"

namespace tricharge {

void ContractTerms::validate(double p_max) const {
  if (!(threshold_kw >= 0.0 && threshold_kw <= p_max))
    throw ContractViolation(fmt::format("contract threshold {} kW outside [0, {}]", threshold_kw, p_max));
  if (!(q > 0.0 && q_bar > q))
    throw ContractViolation(fmt::format("contract coefficients need q_bar > q > 0 (q = {}, q_bar = {})", q, q_bar));
}

double supply_cost_slot(double total_kwh, const ContractTerms& terms) {
  if (!(total_kwh >= 0.0)) throw ContractViolation(fmt::format("negative slot load {}", total_kwh));
  const double below = std::min(total_kwh, terms.threshold_kw);
  const double above = std::max(0.0, total_kwh - terms.threshold_kw);
  return terms.mu() * below + terms.mu_bar() * above;
}

std::vector<double> charging_supply_cost(const ChargingProfile& profile, const ContractTerms& terms) {
  if (profile.charging_kwh.size() != profile.total_kwh.size())
    throw ContractViolation("charging and total profiles differ in length");
  std::vector<double> cost(profile.charging_kwh.size(), 0.0);
  for (std::size_t t = 0; t < cost.size(); ++t) {
    const double mine = profile.charging_kwh[t];
    const double total = profile.total_kwh[t];
    if (mine == 0.0 || total <= 0.0) continue;
    cost[t] = mine / total * supply_cost_slot(total, terms);
  }
  return cost;
}

std::vector<std::vector<double>> grid_charging_profiles(const HubEconomics& hubs, std::span<const double> needs) {
  if (needs.size() != hubs.owners.size() || hubs.profiles.size() != hubs.owners.size())
    throw ContractViolation("hub data and needs differ in length");
  std::vector<std::vector<double>> out(needs.size());
  for (std::size_t h = 0; h < needs.size(); ++h) {
    if (hubs.owners[h] == HubOwner::cso) {
      out[h] = hubs.profiles[h].schedule(needs[h]).charging_kwh;
    } else {
      out[h].assign(hubs.profiles[h].slots(), 0.0);
      out[h][0] = needs[h];
    }
  }
  return out;
}

PayoffBreakdown cso_payoff(double alpha, const ContractTerms& terms, std::span<const double> needs,
                           const HubEconomics& hubs) {
  if (needs.size() != hubs.owners.size() || hubs.profiles.size() != hubs.owners.size())
    throw ContractViolation("hub data and needs differ in length");
  PayoffBreakdown out;
  out.alpha = alpha;
  out.threshold_kw = terms.threshold_kw;
  for (std::size_t h = 0; h < needs.size(); ++h) {
    if (hubs.owners[h] != HubOwner::cso) continue;
    HubPayoff hp;
    hp.hub = h;
    hp.need_kwh = needs[h];
    hp.price = hubs.profiles[h].price(needs[h], alpha);
    hp.revenue = hp.need_kwh * hp.price;
    hp.supply_cost = charging_supply_cost(hubs.profiles[h].schedule(needs[h]), terms);
    for (double c : hp.supply_cost) hp.total_supply_cost += c;
    out.revenue += hp.revenue;
    out.supply_cost += hp.total_supply_cost;
    out.hubs.push_back(std::move(hp));
  }
  out.pi_mid = out.revenue - out.supply_cost;
  return out;
}

PayoffBreakdown eno_payoff(double alpha, const ContractTerms& terms, std::span<const double> needs,
                           const HubEconomics& hubs, const GridCostModel& grid, double beta) {
  PayoffBreakdown out = cso_payoff(alpha, terms, needs, hubs);
  out.beta = beta;
  out.grid_slot_cost = grid.slot_costs(grid_charging_profiles(hubs, needs));
  double g = 0.0;
  for (double v : out.grid_slot_cost) g += v;
  out.grid_term = beta * g;
  out.pi_up = out.supply_cost - out.grid_term;
  return out;
}

}  // namespace tricharge
