#pragma once

// Payoffs of the two operators backed by the lower-level equilibrium, with
// equilibria and grid terms cached per alpha (they do not depend on P).

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>

#include "tricharge/grid.hpp"
#include "tricharge/operators.hpp"
#include "tricharge/trilevel.hpp"
#include "tricharge/wardrop.hpp"

namespace tricharge {

struct OperatorSetting {
  double q_per_kw = 0.0;      // mu(P) = q_per_kw * P, EUR/kWh with P in kW
  double q_bar_per_kw = 0.0;
  double grid_weight = 0.0;   // EUR per kVA^2 of G_t
  double alpha_max = 0.0;
  double p_max_kw = 0.0;
};

HubEconomics hub_economics(const EquilibriumModel& model);

class ScenarioObjectives : public BilevelObjectives {
 public:
  ScenarioObjectives(std::shared_ptr<const EquilibriumModel> model, std::shared_ptr<const GridCostModel> grid,
                     OperatorSetting setting, WardropOptions wardrop = {});

  double pi_mid(double alpha, double threshold_kw) const override;
  double pi_up(double alpha, double threshold_kw) const override;

  ContractTerms terms(double threshold_kw) const;
  PayoffBreakdown breakdown(double alpha, double threshold_kw) const;
  // Throws EquilibriumNotConverged (a NonConvergence) on lower-level failure.
  std::shared_ptr<const EquilibriumResult> equilibrium(double alpha) const;
  // grid_weight * sum_t G_t at L*(alpha), EUR; +inf if the feeder collapses
  double grid_term(double alpha) const;

  const EquilibriumModel& model() const { return *model_; }
  const GridCostModel& grid() const { return *grid_; }
  const HubEconomics& hubs() const { return hubs_; }
  const OperatorSetting& setting() const { return setting_; }
  std::size_t cached_equilibria() const;

 private:
  void check_point(double alpha, double threshold_kw) const;

  std::shared_ptr<const EquilibriumModel> model_;
  std::shared_ptr<const GridCostModel> grid_;
  OperatorSetting setting_;
  WardropOptions wardrop_;
  HubEconomics hubs_;
  mutable std::mutex mutex_;
  mutable std::map<std::uint64_t, std::shared_ptr<const EquilibriumResult>> equilibria_;
  mutable std::map<std::uint64_t, double> grid_terms_;
};

}  // namespace tricharge
