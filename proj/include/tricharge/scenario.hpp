#pragma once

// Scenario configuration, instance building and the experiment drivers.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tricharge/baselines.hpp"
#include "tricharge/grid.hpp"
#include "tricharge/objectives.hpp"
#include "tricharge/trilevel.hpp"
#include "tricharge/wardrop.hpp"

namespace tricharge {

struct SolverSettings {
  double wardrop_relative_tolerance = 1e-6;
  int wardrop_max_sweeps = 20000;
  int restarts = 15;    // N_r
  double eta = 2.5e-6;  // EUR/kW^2
  std::optional<double> eps_mid;
  int brent_windows = 8;
  int max_outer_iterations = 50;
  int max_candidates = 2000;
  int workers = 1;

  bool operator==(const SolverSettings&) const = default;
};

struct BaselineSettings {
  double alpha_tilde = 0.01;
  double theta = 0.5;
  double tolerance_kwh = 0.1;
  int max_iterations = 100;
  double fd_step_kwh = 1.0;
  // unit of the apparent powers inside the LMP grid cost; reported grid costs
  // are converted back to grid_power_unit_kva
  double grid_power_unit_kva = 1.0;
  int stall_window = 5;
  double min_theta = 1e-3;

  bool operator==(const BaselineSettings&) const = default;
};

struct ScenarioConfig {
  std::string network_file = "sioux_falls.json";
  std::string grid_file = "ieee33.json";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> nonflex_seed;  // defaults to seed

  double ev_share = 0.5;  // X_e
  double e0_share = 0.5;  // share of e0 among EVs
  int slots = 8;
  int k_paths = 8;

  double value_of_time = 10.0;        // EUR/h
  double ev_consumption = 0.2;        // kWh/km
  double gv_consumption = 0.06;       // L/km
  double fuel_price = 1.5;            // EUR/L
  double home_price = 0.2;            // EUR/kWh
  double city_hub_price = 0.25;       // EUR/kWh
  double top_up_e0 = 5.0;             // kWh
  double top_up_e1 = 0.0;             // kWh
  std::optional<double> speed_kmh = 50.0;      // applied to every arc when set
  std::optional<double> capacity_frac = 0.2;   // applied to every arc when set

  double alpha_max = 1e-3;  // EUR/kW^2
  double p_max_kw = 4000.0;
  double q = 0.1;
  double q_bar_ratio = 3.0;
  double beta = 1e-3;
  // Unit readings of q and beta: mu(P) = q * P / price_threshold_unit_kw and
  // G_t is measured with apparent powers in grid_power_unit_kva.
  double price_threshold_unit_kw = 1000.0;
  double grid_power_unit_kva = 1000.0;

  std::map<int, double> pt_fares;           // hub id -> EUR
  std::optional<double> cso_pt_fare;        // common fare t of every CSO hub, overrides pt_fares
  std::map<int, int> hub_buses;             // hub id -> grid bus id
  std::map<int, double> nonflex_totals_mwh;  // hub id -> MWh
  std::vector<int> hub_subset;              // empty: every hub

  SolverSettings solver;
  BaselineSettings baseline;

  // Throws ScenarioError naming the offending field.
  void validate() const;
  bool operator==(const ScenarioConfig&) const = default;
};

struct Scenario {
  ScenarioConfig config;
  std::filesystem::path base_dir;  // relative data files are looked up here, then in the data directory
};

Scenario load_scenario(const std::filesystem::path& path);
Scenario default_scenario();
// Strict JSON reader shared by load_scenario; unknown keys are rejected.
ScenarioConfig parse_scenario_config(const std::string& json_text);
std::string scenario_config_json(const ScenarioConfig& config);

// total_mwh * Dirichlet(1, ..., 1) in kWh, one profile per total, seeded.
std::vector<std::vector<double>> synthesize_nonflex(const std::vector<double>& totals_mwh, int slots, std::uint64_t seed);

struct ScenarioInstance {
  ScenarioConfig config;
  std::shared_ptr<const EquilibriumModel> model;
  std::shared_ptr<const GridCostModel> grid;
  std::shared_ptr<const ScenarioObjectives> objectives;
  WardropOptions wardrop;
  TrilevelConfig trilevel;
  BaselineConfig baseline;
  double baseline_grid_weight = 0.0;  // beta / baseline unit^2
  std::vector<int> hub_ids;
  std::vector<std::string> warnings;
};

ScenarioInstance build_instance(const Scenario& scenario);

enum class SweepParameter { ev_share, pt_fare, alpha_tilde };
enum class SweepMethod { trilevel, lmp_pc, lmp_sc };
std::string_view to_string(SweepParameter p);
std::string_view to_string(SweepMethod m);
SweepParameter parse_sweep_parameter(std::string_view s);
SweepMethod parse_sweep_method(std::string_view s);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::ev_share;
  std::vector<double> values;
  std::vector<SweepMethod> methods{SweepMethod::trilevel};
  std::vector<double> alpha_tildes;  // baselines run once per entry; empty = scenario value

  void validate() const;
};

SweepSpec load_sweep_spec(const std::filesystem::path& path);
// Applies one sweep value to a copy of the configuration.
ScenarioConfig apply_sweep_value(ScenarioConfig config, SweepParameter parameter, double value);

struct SweepRow {
  double param_value = 0.0;
  SweepMethod method = SweepMethod::trilevel;
  double threshold_kw = 0.0;  // NaN for baselines
  double alpha = 0.0;         // NaN for baselines
  double pi_up = 0.0;
  double pi_mid = 0.0;
  std::vector<double> needs;             // per hub, kWh
  std::vector<double> normalized_needs;  // L_i / sum_j L_j
  double grid_cost = 0.0;
  double revenue = 0.0;
  double alpha_tilde = 0.0;  // baselines only
  double ev_share = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string status;  // "ok" or the error message
  std::vector<TraceRow> trace;  // trilevel only
};

struct SweepResults {
  std::vector<int> hub_ids;
  std::vector<SweepRow> rows;  // ordered by value, then method, then alpha_tilde
};

// One full solve for a configuration; failures are reported in the row.
SweepRow solve_point(const Scenario& scenario, SweepMethod method, double param_value);

SweepResults run_sweep(const Scenario& scenario, const SweepSpec& spec, int threads);

}  // namespace tricharge
