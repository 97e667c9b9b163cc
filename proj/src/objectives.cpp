#include "tricharge/objectives.hpp"

#include <bit>
#include <limits>

#include <fmt/core.h>

namespace tricharge {

namespace {

std::uint64_t key_of(double alpha) { return std::bit_cast<std::uint64_t>(alpha == 0.0 ? 0.0 : alpha); }

}  // namespace

HubEconomics hub_economics(const EquilibriumModel& model) {
  HubEconomics hubs;
  for (std::size_t h = 0; h < model.hub_count(); ++h) {
    hubs.owners.push_back(model.scenario().hubs[h].owner);
    hubs.profiles.push_back(model.hub_profile(h));
  }
  return hubs;
}

ScenarioObjectives::ScenarioObjectives(std::shared_ptr<const EquilibriumModel> model,
                                       std::shared_ptr<const GridCostModel> grid, OperatorSetting setting,
                                       WardropOptions wardrop)
    : model_(std::move(model)), grid_(std::move(grid)), setting_(setting), wardrop_(wardrop) {
  if (!model_ || !grid_) throw ContractViolation("objectives need a lower-level model and a grid");
  if (grid_->hub_count() != model_->hub_count()) throw ContractViolation("grid and transport hubs differ");
  hubs_ = hub_economics(*model_);
}

void ScenarioObjectives::check_point(double alpha, double threshold_kw) const {
  if (!(alpha >= 0.0 && alpha <= setting_.alpha_max))
    throw std::domain_error(fmt::format("alpha = {} outside [0, {}]", alpha, setting_.alpha_max));
  if (!(threshold_kw >= 0.0 && threshold_kw <= setting_.p_max_kw))
    throw std::domain_error(fmt::format("P = {} kW outside [0, {}]", threshold_kw, setting_.p_max_kw));
}

ContractTerms ScenarioObjectives::terms(double threshold_kw) const {
  return {threshold_kw, setting_.q_per_kw, setting_.q_bar_per_kw};
}

std::shared_ptr<const EquilibriumResult> ScenarioObjectives::equilibrium(double alpha) const {
  const std::uint64_t key = key_of(alpha);
  {
    std::lock_guard lock(mutex_);
    if (auto it = equilibria_.find(key); it != equilibria_.end()) return it->second;
  }
  // solved outside the lock; a concurrent duplicate solve yields the same result
  auto result = std::make_shared<const EquilibriumResult>(solve_wardrop(*model_, LmpPricing{alpha}, wardrop_));
  std::lock_guard lock(mutex_);
  return equilibria_.try_emplace(key, std::move(result)).first->second;
}

double ScenarioObjectives::grid_term(double alpha) const {
  const std::uint64_t key = key_of(alpha);
  {
    std::lock_guard lock(mutex_);
    if (auto it = grid_terms_.find(key); it != grid_terms_.end()) return it->second;
  }
  const auto eq = equilibrium(alpha);
  double term = std::numeric_limits<double>::infinity();  // the feeder collapses: no admissible point for the ENO
  try {
    double g = 0.0;
    for (double v : grid_->slot_costs(grid_charging_profiles(hubs_, eq->needs))) g += v;
    term = setting_.grid_weight * g;
  } catch (const GridInfeasible&) {
  }
  std::lock_guard lock(mutex_);
  return grid_terms_.try_emplace(key, term).first->second;
}

double ScenarioObjectives::pi_mid(double alpha, double threshold_kw) const {
  check_point(alpha, threshold_kw);
  return cso_payoff(alpha, terms(threshold_kw), equilibrium(alpha)->needs, hubs_).pi_mid;
}

double ScenarioObjectives::pi_up(double alpha, double threshold_kw) const {
  check_point(alpha, threshold_kw);
  const PayoffBreakdown b = cso_payoff(alpha, terms(threshold_kw), equilibrium(alpha)->needs, hubs_);
  return b.supply_cost - grid_term(alpha);
}

PayoffBreakdown ScenarioObjectives::breakdown(double alpha, double threshold_kw) const {
  check_point(alpha, threshold_kw);
  return eno_payoff(alpha, terms(threshold_kw), equilibrium(alpha)->needs, hubs_, *grid_, setting_.grid_weight);
}

std::size_t ScenarioObjectives::cached_equilibria() const {
  std::lock_guard lock(mutex_);
  return equilibria_.size();
}

}  // namespace tricharge
