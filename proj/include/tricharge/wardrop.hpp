#pragma once

// Lower level: Wardrop equilibrium of the coupled driving-and-charging game,
// computed as a minimiser of the Beckmann potential over the path simplices.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tricharge/errors.hpp"
#include "tricharge/transport.hpp"
#include "tricharge/waterfill.hpp"

namespace tricharge {

// CSO hub prices follow lambda_i = alpha * dG*_i/dL_i.
struct LmpPricing {
  double alpha = 0.0;
};

// CSO hub prices are constants (EUR/kWh, indexed like the scenario's hubs;
// entries of city hubs are ignored).
struct FixedPricing {
  std::vector<double> hub_price;
};

using CsoPricing = std::variant<LmpPricing, FixedPricing>;

inline constexpr std::size_t kNoHub = static_cast<std::size_t>(-1);

// Immutable lower-level instance: scenario, enumerated paths and everything
// precomputable about them.
class EquilibriumModel {
 public:
  struct Block {
    VehicleKind kind;
    std::size_t od;
    double demand;
    std::vector<std::size_t> paths;
  };

  EquilibriumModel(TransportScenario scenario, PathSet paths);

  const TransportScenario& scenario() const { return scenario_; }
  const PathSet& path_set() const { return paths_; }
  const std::vector<GlobalPath>& paths() const { return paths_.paths; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t path_count() const { return paths_.paths.size(); }
  std::size_t arc_count() const { return scenario_.arcs.size(); }
  std::size_t hub_count() const { return scenario_.hubs.size(); }

  // l_{s,r}: kWh for EV paths, litres for GV paths.
  double energy(std::size_t path) const { return energy_[path]; }
  // PT fare plus energy at a constant price; 0 energy part for CSO charging.
  double fixed_cost(std::size_t path) const { return fixed_cost_[path]; }
  // Hub index if the path charges at a CSO hub, otherwise kNoHub.
  std::size_t cso_hub(std::size_t path) const { return cso_hub_[path]; }
  // Hub index if the path charges at any hub, otherwise kNoHub.
  std::size_t charging_hub(std::size_t path) const { return charging_hub_[path]; }
  bool is_cso_hub(std::size_t hub) const { return scenario_.hubs[hub].owner == HubOwner::cso; }
  const NonflexProfile& hub_profile(std::size_t hub) const { return profiles_[hub]; }

  // Mean over all paths of the path cost at zero flow.
  double mean_free_flow_cost(const CsoPricing& pricing) const;

 private:
  TransportScenario scenario_;
  PathSet paths_;
  std::vector<Block> blocks_;
  std::vector<double> energy_;
  std::vector<double> fixed_cost_;
  std::vector<std::size_t> cso_hub_;
  std::vector<std::size_t> charging_hub_;
  std::vector<NonflexProfile> profiles_;
};

struct FlowAssignment {
  std::vector<double> path_flows;  // vehicles, aligned with model.paths()
  std::vector<double> arc_flows;   // x_a
  std::vector<double> hub_needs;   // L_i in kWh, every hub
};

// Builds arc totals and hub needs; throws ContractViolation if the path flows
// are negative or do not meet the block demands (relative tolerance 1e-9).
FlowAssignment make_assignment(const EquilibriumModel& model, std::vector<double> path_flows);

std::vector<double> charging_needs(const EquilibriumModel& model, std::span<const double> path_flows);

// Charging price per hub at the current needs (0 for non-CSO hubs).
std::vector<double> hub_prices(const EquilibriumModel& model, std::span<const double> hub_needs,
                               const CsoPricing& pricing);

std::vector<double> path_costs(const EquilibriumModel& model, const FlowAssignment& x,
                               const CsoPricing& pricing);

double beckmann_value(const EquilibriumModel& model, const FlowAssignment& x,
                      const CsoPricing& pricing);

// max over blocks and used paths of (path cost - block minimum), from scratch.
double wardrop_gap(const EquilibriumModel& model, const FlowAssignment& x, const CsoPricing& pricing);

struct EquilibriumResult {
  FlowAssignment flows;
  double beckmann = 0.0;
  double gap = 0.0;
  double tolerance = 0.0;
  std::vector<double> needs;  // L* for every hub (kWh)
  int iterations = 0;
  std::vector<double> beckmann_trace;  // one value per sweep, when requested
};

struct WardropOptions {
  // Absolute gap tolerance in EUR. Unset: relative_tolerance x mean free-flow cost.
  std::optional<double> tolerance;
  double relative_tolerance = 1e-6;
  int max_sweeps = 20000;
  // Newton steps on the used paths after every sweep (0 disables them).
  int newton_steps = 8;
  bool record_trace = false;
};

class EquilibriumNotConverged : public NonConvergence {
 public:
  EquilibriumNotConverged(const std::string& what, EquilibriumResult best)
      : NonConvergence(what), best_(std::move(best)) {}
  const EquilibriumResult& best() const { return best_; }

 private:
  EquilibriumResult best_;
};

FlowAssignment uniform_start(const EquilibriumModel& model);
// Per block, flows drawn from a symmetric Dirichlet(1) over the block's paths.
FlowAssignment random_start(const EquilibriumModel& model, std::uint64_t seed);

// Pairwise path equilibration: repeatedly shifts flow from the costliest used
// path of a block to its cheapest path with an exact line search on the
// Beckmann potential.
EquilibriumResult solve_wardrop(const EquilibriumModel& model, const CsoPricing& pricing,
                                const WardropOptions& options = {},
                                std::optional<FlowAssignment> start = std::nullopt);

// Frank-Wolfe on the path simplices with exact line search. Used as an
// independent route to the equilibrium arc flows; stops on the relative
// duality gap c(x).(x - y) / c(x).x.
struct FrankWolfeResult {
  FlowAssignment flows;
  double relative_duality_gap = 0.0;
  int iterations = 0;
};
FrankWolfeResult solve_wardrop_frank_wolfe(const EquilibriumModel& model, const CsoPricing& pricing,
                                           double relative_gap, int max_iterations);

struct UniquenessReport {
  int starts = 0;
  double max_arc_deviation = 0.0;   // vehicles
  double max_need_deviation = 0.0;  // kWh, all hubs
  double max_cso_need_deviation = 0.0;
  double max_path_deviation = 0.0;  // vehicles (not expected to vanish)
  double relative_arc_deviation = 0.0;   // / max(1, max arc flow)
  double relative_need_deviation = 0.0;  // / max(1, max hub need)
  std::vector<EquilibriumResult> runs;
};

UniquenessReport uniqueness_probe(const EquilibriumModel& model, const CsoPricing& pricing,
                                  int n_starts, std::uint64_t seed, const WardropOptions& options = {});

}  // namespace tricharge
