#pragma once

// CSV and manifest writers. Every number goes through format_number so that
// equal inputs give byte-identical files.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tricharge/baselines.hpp"
#include "tricharge/operators.hpp"
#include "tricharge/scenario.hpp"
#include "tricharge/trilevel.hpp"
#include "tricharge/wardrop.hpp"

namespace tricharge {

inline constexpr std::string_view kToolVersion = "1.0.0";

std::string format_number(double v);

// param_value, P_star_kw, alpha_star, Pi_up, Pi_mid, L_<hub>_kwh..., Ltilde_<hub>...,
// grid_cost, revenue, then method, converged, iterations, status.
std::string sweep_csv(const SweepResults& results);
// outer_iter, phase, P, alpha, Pi_mid, Pi_up, accepted, feasible
std::string trace_csv(std::span<const TraceRow> trace);
// class, path_id, flow, cost
std::string path_flows_csv(const EquilibriumModel& model, const FlowAssignment& flows, const CsoPricing& pricing);
// hub, L_i_kwh
std::string hub_needs_csv(std::span<const int> hub_ids, std::span<const double> needs);
// alpha, P, hub, R_i, sum_C_i, Pi_mid, grid_term, Pi_up (one row per CSO hub)
std::string payoff_csv(std::span<const PayoffBreakdown> points, std::span<const int> hub_ids);

struct ProfileSet {
  std::string method;
  std::vector<std::vector<double>> charging_kwh;  // [hub][slot]
};
// hub, slot, ell_star_kwh, ell_nonflex_kwh, method
std::string profiles_csv(std::span<const int> hub_ids, const HubEconomics& hubs, std::span<const ProfileSet> sets);
// method, alpha_tilde, X_e, grid_cost, charging_revenue, converged, iterations
std::string baseline_csv(const SweepResults& results);

std::string sha256_hex(std::string_view data);

struct OutputFile {
  std::string name;
  std::string content;
};

// Writes the files and manifest.json into out_dir (created if needed) and
// returns the manifest path. Throws std::runtime_error naming the path on I/O failure.
std::filesystem::path emit_outputs(const std::filesystem::path& out_dir, const std::vector<OutputFile>& files,
                                   const ScenarioConfig& config);

}  // namespace tricharge
