// Command-line front end: solve, sweep, baseline, check, paths.

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "tricharge/baselines.hpp"
#include "tricharge/output.hpp"
#include "tricharge/scenario.hpp"
#include "tricharge/waterfill.hpp"

using namespace tricharge;

namespace {

struct Common {
  std::string scenario;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_wardrop;
  std::optional<double> tol_eps_mid;
  std::optional<double> tol_baseline;
  int threads = 1;
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--scenario", c.scenario, "scenario JSON (default: bundled scenario)");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--seed", c.seed, "RNG seed (overrides the scenario)");
  app.add_option("--tol-wardrop", c.tol_wardrop, "lower-level gap, relative to the mean free-flow path cost");
  app.add_option("--tol-eps-mid", c.tol_eps_mid, "CSO optimality tolerance eps_mid (EUR)");
  app.add_option("--tol-baseline", c.tol_baseline, "baseline fixed-point tolerance (kWh)");
  app.add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

Scenario scenario_of(const Common& c) {
  Scenario s = c.scenario.empty() ? default_scenario() : load_scenario(c.scenario);
  if (c.seed) s.config.seed = *c.seed;
  if (c.tol_wardrop) s.config.solver.wardrop_relative_tolerance = *c.tol_wardrop;
  if (c.tol_eps_mid) s.config.solver.eps_mid = *c.tol_eps_mid;
  if (c.tol_baseline) s.config.baseline.tolerance_kwh = *c.tol_baseline;
  s.config.validate();
  return s;
}

std::filesystem::path out_dir(const Common& c) {
  // the only environment override the tool honours
  if (const char* env = std::getenv("TRICHARGE_OUT"); env && *env && c.out == "out") return env;
  return c.out;
}

std::vector<ProfileSet> schedules_at(const ScenarioInstance& inst, std::span<const double> needs) {
  const auto& obj = *inst.objectives;
  std::vector<ProfileSet> sets;
  sets.push_back({"waterfill", grid_charging_profiles(obj.hubs(), needs)});
  sets.push_back({"plug_and_charge", plug_and_charge(needs, obj.grid().slots())});
  sets.push_back({"smart", grid_aware_schedule(needs, obj.grid(), obj.setting().grid_weight, obj.hubs()).profiles});
  return sets;
}

int run_solve(const Common& c) {
  Scenario s = scenario_of(c);
  s.config.solver.workers = std::max(s.config.solver.workers, c.threads);
  const ScenarioInstance inst = build_instance(s);
  for (const auto& w : inst.warnings) std::cerr << "warning: " << w << "\n";
  const auto& obj = *inst.objectives;
  const TrilevelSolution sol = trilevel_solve(obj, inst.trilevel);
  const auto eq = obj.equilibrium(sol.alpha);
  const PayoffBreakdown b = obj.breakdown(sol.alpha, sol.threshold_kw);

  SweepResults single;
  single.hub_ids = inst.hub_ids;
  SweepRow row;
  row.param_value = s.config.ev_share;
  row.threshold_kw = sol.threshold_kw;
  row.alpha = sol.alpha;
  row.pi_up = b.pi_up;
  row.pi_mid = b.pi_mid;
  row.needs = eq->needs;
  double total = 0.0;
  for (double l : row.needs) total += l;
  for (double l : row.needs) row.normalized_needs.push_back(total > 0.0 ? l / total : 0.0);
  row.grid_cost = b.grid_term;
  row.revenue = b.revenue;
  row.ev_share = s.config.ev_share;
  row.converged = true;
  row.iterations = sol.outer_iterations;
  row.status = "ok";
  single.rows.push_back(row);

  const std::vector<PayoffBreakdown> points{b};
  const auto sets = schedules_at(inst, eq->needs);
  const std::vector<OutputFile> files{
      {"solution.csv", sweep_csv(single)},
      {"trace.csv", trace_csv(sol.trace)},
      {"equilibrium_paths.csv", path_flows_csv(obj.model(), eq->flows, LmpPricing{sol.alpha})},
      {"equilibrium_hubs.csv", hub_needs_csv(inst.hub_ids, eq->needs)},
      {"payoff.csv", payoff_csv(points, inst.hub_ids)},
      {"profiles.csv", profiles_csv(inst.hub_ids, obj.hubs(), sets)},
  };
  const auto manifest = emit_outputs(out_dir(c), files, s.config);
  fmt::print("P* = {} kW, alpha* = {} EUR/kW^2, Pi_up = {}, Pi_mid = {}, outer iterations {}\n",
             format_number(sol.threshold_kw), format_number(sol.alpha), format_number(b.pi_up),
             format_number(b.pi_mid), sol.outer_iterations);
  fmt::print("wrote {}\n", manifest.string());
  return 0;
}

int run_sweep_cmd(const Common& c, const std::string& spec_path) {
  const Scenario s = scenario_of(c);
  const SweepSpec spec = load_sweep_spec(spec_path);
  const SweepResults res = run_sweep(s, spec, c.threads);
  std::vector<OutputFile> files{{"sweep.csv", sweep_csv(res)}, {"baseline_comparison.csv", baseline_csv(res)}};
  for (const SweepRow& r : res.rows)
    if (r.method == SweepMethod::trilevel && !r.trace.empty())
      files.push_back({fmt::format("trace_{}_{}.csv", to_string(spec.parameter), format_number(r.param_value)),
                       trace_csv(r.trace)});
  const auto manifest = emit_outputs(out_dir(c), files, s.config);
  int failed = 0;
  for (const SweepRow& r : res.rows)
    if (r.status != "ok") {
      ++failed;
      std::cerr << fmt::format("{} = {} ({}): {}\n", to_string(spec.parameter), format_number(r.param_value),
                               to_string(r.method), r.status);
    }
  fmt::print("{} rows, {} failed; wrote {}\n", res.rows.size(), failed, manifest.string());
  return 0;
}

int run_baseline(const Common& c, const std::string& mode_name, std::optional<double> alpha_tilde) {
  Scenario s = scenario_of(c);
  if (alpha_tilde) s.config.baseline.alpha_tilde = *alpha_tilde;
  s.config.validate();
  ScheduleMode mode;
  if (mode_name == "pc" || mode_name == "lmp_pc")
    mode = ScheduleMode::plug_and_charge;
  else if (mode_name == "sc" || mode_name == "lmp_sc")
    mode = ScheduleMode::smart;
  else
    throw CLI::ValidationError("--mode", "expected pc or sc");
  const ScenarioInstance inst = build_instance(s);
  const auto& obj = *inst.objectives;
  const BaselineRun run =
      baseline_fixed_point(obj.model(), obj.grid(), inst.baseline_grid_weight, mode, inst.baseline, inst.wardrop);
  const double to_grid_unit = obj.setting().grid_weight / inst.baseline_grid_weight;

  SweepResults res;
  res.hub_ids = inst.hub_ids;
  SweepRow row;
  row.method = mode == ScheduleMode::plug_and_charge ? SweepMethod::lmp_pc : SweepMethod::lmp_sc;
  row.alpha_tilde = s.config.baseline.alpha_tilde;
  row.ev_share = s.config.ev_share;
  row.grid_cost = run.grid_cost * to_grid_unit;
  row.revenue = run.revenue;
  row.converged = run.converged;
  row.iterations = run.iterations;
  res.rows.push_back(row);

  std::string trajectory = "iteration,hub,L_kwh,lambda_eur_per_kwh\n";
  for (std::size_t k = 0; k < run.needs.size(); ++k)
    for (std::size_t h = 0; h < inst.hub_ids.size(); ++h)
      trajectory += fmt::format("{},{},{},{}\n", k, inst.hub_ids[h], format_number(run.needs[k][h]),
                                format_number(k < run.prices.size() ? run.prices[k][h] : NAN));
  std::vector<OutputFile> files{{"baseline_comparison.csv", baseline_csv(res)},
                                {"baseline_trajectory.csv", trajectory}};
  if (!run.final_needs.empty()) {
    files.push_back({"equilibrium_hubs.csv", hub_needs_csv(inst.hub_ids, run.final_needs)});
    const ScheduleResult sched =
        schedule_for_mode(run.final_needs, obj.grid(), inst.baseline_grid_weight, obj.hubs(), mode);
    const std::vector<ProfileSet> sets{{std::string(to_string(mode)), sched.profiles}};
    files.push_back({"profiles.csv", profiles_csv(inst.hub_ids, obj.hubs(), sets)});
  }
  const auto manifest = emit_outputs(out_dir(c), files, s.config);
  if (!run.abort_reason.empty()) std::cerr << "aborted: " << run.abort_reason << "\n";
  fmt::print("{}: converged {}, iterations {}, grid cost {}, revenue {}; wrote {}\n", to_string(mode),
             run.converged ? "yes" : "no", run.iterations, format_number(row.grid_cost), format_number(run.revenue),
             manifest.string());
  return run.abort_reason.empty() ? 0 : 1;
}

int run_check(const Common& c, int starts) {
  const Scenario s = scenario_of(c);
  const ScenarioInstance inst = build_instance(s);
  const auto& obj = *inst.objectives;
  int failures = 0;
  auto report = [&](bool ok, const std::string& what) {
    fmt::print("{} {}\n", ok ? "PASS" : "FAIL", what);
    if (!ok) ++failures;
  };

  const LmpPricing pricing{s.config.alpha_max / 2.0};
  const EquilibriumResult eq = solve_wardrop(obj.model(), pricing, inst.wardrop);
  const double gap = wardrop_gap(obj.model(), eq.flows, pricing);
  report(gap <= eq.tolerance, fmt::format("equilibrium gap {:.3e} <= {:.3e} EUR", gap, eq.tolerance));

  const UniquenessReport u = uniqueness_probe(obj.model(), pricing, starts, s.config.seed, inst.wardrop);
  report(u.relative_arc_deviation <= 1e-5 && u.relative_need_deviation <= 1e-5,
         fmt::format("{} random starts: arc deviation {:.3e}, need deviation {:.3e} (relative)", starts,
                     u.relative_arc_deviation, u.relative_need_deviation));

  // water-filling value against its derivative
  double worst = 0.0;
  for (std::size_t h = 0; h < obj.hubs().profiles.size(); ++h) {
    const NonflexProfile& p = obj.hubs().profiles[h];
    const double l = std::max(eq.needs[h], 1.0);
    const double step = 1e-3;
    const double fd = (p.value(l + step) - p.value(l - step)) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - p.marginal_value(l)) / p.marginal_value(l));
  }
  report(worst <= 1e-6, fmt::format("water-filling derivative identity, worst relative error {:.3e}", worst));

  const GridCase& grid = obj.grid().grid();
  double residual = 0.0;
  double cross = 0.0;
  for (std::size_t t = 0; t < obj.grid().slots(); ++t) {
    const auto loads = grid.base_loads_kva(t);
    PowerFlowOptions sweep;
    sweep.newton_fallback = false;
    PowerFlowOptions newton;
    newton.method = PowerFlowMethod::newton;
    const auto a = solve_power_flow(grid, loads, sweep);
    const auto b = solve_power_flow(grid, loads, newton);
    residual = std::max({residual, power_flow_residual(grid, loads, a.voltage), power_flow_residual(grid, loads, b.voltage)});
    cross = std::max(cross, std::abs(a.head_apparent_kva - b.head_apparent_kva) / b.head_apparent_kva);
  }
  report(residual <= 1e-8, fmt::format("power-flow residual {:.3e} pu", residual));
  report(cross <= 1e-6, fmt::format("sweep vs Newton head power, relative difference {:.3e}", cross));

  double negative = 0.0;
  const auto profiles = grid_charging_profiles(obj.hubs(), eq.needs);
  for (double g : obj.grid().slot_costs(profiles)) negative = std::min(negative, g);
  report(negative >= 0.0, "grid cost of EV charging is nonnegative at the equilibrium");
  return failures == 0 ? 0 : 1;
}

int run_paths(const Common& c) {
  const Scenario s = scenario_of(c);
  const ScenarioInstance inst = build_instance(s);
  const auto& model = *inst.model;
  const auto& ts = model.scenario();
  std::string csv = "path_id,class,decision,origin,destination,hub,length_km,arcs\n";
  for (const GlobalPath& p : model.paths()) {
    std::string arcs;
    for (std::size_t a : p.arcs) arcs += (arcs.empty() ? "" : " ") + std::to_string(ts.arcs[a].id);
    csv += fmt::format("{},{},{},{},{},{},{},{}\n", p.id, to_string(p.kind), to_string(p.decision),
                       ts.demands[p.od].origin, ts.demands[p.od].destination, ts.hubs[p.hub].id,
                       format_number(p.length_km), arcs);
  }
  for (const auto& w : inst.warnings) std::cerr << "warning: " << w << "\n";
  const auto manifest = emit_outputs(out_dir(c), {{"paths.csv", csv}}, s.config);
  fmt::print("{} paths over {} routes; wrote {}\n", model.path_count(), model.path_set().routes.size(),
             manifest.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trilevel EV charging pricing: equilibrium, operators and baselines"};
  app.require_subcommand(1);
  Common common;

  auto* solve = app.add_subcommand("solve", "one trilevel solve");
  add_common(*solve, common);

  auto* sweep = app.add_subcommand("sweep", "parameter sweep from a sweep file");
  add_common(*sweep, common);
  std::string spec;
  sweep->add_option("spec", spec, "sweep JSON (parameter, values, methods)")->required()->check(CLI::ExistingFile);

  auto* baseline = app.add_subcommand("baseline", "LMP baseline fixed point");
  add_common(*baseline, common);
  std::string mode = "sc";
  std::optional<double> alpha_tilde;
  baseline->add_option("--mode", mode, "pc or sc");
  baseline->add_option("--alpha-tilde", alpha_tilde, "price conversion factor");

  auto* check = app.add_subcommand("check", "run the invariant checks on a scenario");
  add_common(*check, common);
  int starts = 10;
  check->add_option("--starts", starts, "random starts of the uniqueness probe")->check(CLI::Range(2, 1000));

  auto* paths = app.add_subcommand("paths", "dump the enumerated path set");
  add_common(*paths, common);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*solve) return run_solve(common);
    if (*sweep) return run_sweep_cmd(common, spec);
    if (*baseline) return run_baseline(common, mode, alpha_tilde);
    if (*check) return run_check(common, starts);
    if (*paths) return run_paths(common);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
