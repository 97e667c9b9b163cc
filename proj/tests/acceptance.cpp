// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/core.h>

#include "support.hpp"
#include "tricharge/baselines.hpp"
#include "tricharge/output.hpp"
#include "tricharge/scenario.hpp"
#include "tricharge/waterfill.hpp"

using namespace tricharge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int thread_count() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(TRICHARGE_DATA_DIR) / name; }

const SweepRow* find_row(const SweepResults& r, double value, SweepMethod m, double alpha_tilde = NAN) {
  for (const SweepRow& row : r.rows)
    if (row.param_value == value && row.method == m &&
        (std::isnan(alpha_tilde) || row.alpha_tilde == alpha_tilde))
      return &row;
  return nullptr;
}

// ---------------------------------------------------------------------------

Outcome waterfill_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> slots(1, 12);
  std::uniform_real_distribution<double> load(0.0, 500.0);
  double worst_value = 0.0, worst_slot = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> l0(slots(rng));
    for (double& v : l0) v = load(rng);
    const double need = std::uniform_real_distribution<double>(0.0, 3000.0)(rng);
    const NonflexProfile p(l0);
    const auto oracle = test_support::qp_oracle(l0, need);
    const double v = test_support::qp_value(l0, oracle);
    worst_value = std::max(worst_value, std::abs(p.value(need) - v) / v);
    const ChargingProfile s = p.schedule(need);
    for (std::size_t t = 0; t < l0.size(); ++t) worst_slot = std::max(worst_slot, std::abs(s.charging_kwh[t] - oracle[t]));
  }
  const double sec = seconds_since(t0);
  return {worst_value <= 1e-8 && worst_slot <= 1e-6 && sec < 5.0,
          fmt::format("max rel value error {:.2e}, max slot error {:.2e} kWh, {:.2f} s", worst_value, worst_slot, sec)};
}

Outcome price_continuity() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> load(0.0, 400.0);
  std::vector<double> l0(8);
  for (double& v : l0) v = load(rng);
  const NonflexProfile p(l0);
  const auto bp = p.breakpoints();
  const double top = 1.25 * bp.back() + 100.0;
  constexpr int n = 10000;
  const double step = top / (n - 1);
  bool monotone = true, lipschitz = true, derivative = true;
  double worst_fd = 0.0;
  for (double alpha : {1e-4, 5e-4, 1e-3}) {
    double last = p.price(0.0, alpha);
    for (int i = 1; i < n; ++i) {
      const double l_prev = step * (i - 1), l = step * i;
      const double v = p.price(l, alpha);
      if (v < last) monotone = false;
      const double bound = 2.0 * alpha / static_cast<double>(p.active_slots(l_prev)) * step * 1.01;
      if (v - last > bound) lipschitz = false;
      last = v;
      const double h = 1e-4 * step;
      const bool near_break =
          std::any_of(bp.begin(), bp.end(), [&](double d) { return std::abs(d - l) <= 2.0 * h; });
      if (near_break || l - h < 0.0) continue;
      const double fd = (p.value(l + h) - p.value(l - h)) / (2.0 * h);
      const double rel = std::abs(fd - v / alpha) / std::abs(v / alpha);
      worst_fd = std::max(worst_fd, rel);
      if (rel > 1e-6) derivative = false;
    }
  }
  return {monotone && lipschitz && derivative,
          fmt::format("monotone {}, Lipschitz {}, max rel FD error {:.2e} over {} breakpoints", monotone, lipschitz,
                      worst_fd, bp.size())};
}

Outcome wardrop_certificate(const ScenarioInstance& inst) {
  const auto t0 = Clock::now();
  const LmpPricing pricing{inst.config.alpha_max / 2.0};
  const EquilibriumResult r = solve_wardrop(*inst.model, pricing, inst.wardrop);
  const double sec = seconds_since(t0);
  const double gap = wardrop_gap(*inst.model, r.flows, pricing);
  const auto c = path_costs(*inst.model, r.flows, pricing);
  const double mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
  return {gap <= 1e-6 * mean && sec < 30.0,
          fmt::format("gap {:.3e} EUR vs bound {:.3e} EUR, {} sweeps, {:.1f} s", gap, 1e-6 * mean, r.iterations, sec)};
}

Outcome uniqueness(const ScenarioInstance& inst) {
  const auto t0 = Clock::now();
  const UniquenessReport u = uniqueness_probe(*inst.model, LmpPricing{inst.config.alpha_max / 2.0}, 10, 17, inst.wardrop);
  const double sec = seconds_since(t0);
  return {u.starts == 10 && u.relative_arc_deviation <= 1e-5 && u.relative_need_deviation <= 1e-5 && sec < 300.0,
          fmt::format("{} starts, rel arc deviation {:.2e}, rel need deviation {:.2e}, {:.1f} s", u.starts,
                      u.relative_arc_deviation, u.relative_need_deviation, sec)};
}

Outcome power_flow() {
  const GridCase g = load_ieee33();
  const auto loads = g.base_loads_kva(0);
  PowerFlowOptions newton;
  newton.method = PowerFlowMethod::newton;
  const auto a = solve_power_flow(g, loads);
  const auto b = solve_power_flow(g, loads, newton);
  const double res = std::max(power_flow_residual(g, loads, a.voltage), power_flow_residual(g, loads, b.voltage));
  const double agree = std::abs(a.head_apparent_kva - b.head_apparent_kva) / b.head_apparent_kva;
  bool flat = true;
  const std::vector<Complex> zero(g.bus_count(), 0.0);
  for (auto m : {PowerFlowMethod::sweep, PowerFlowMethod::newton}) {
    PowerFlowOptions o;
    o.method = m;
    const auto s = solve_power_flow(g, zero, o);
    if (s.head_apparent_kva != 0.0) flat = false;
    for (const auto& u : s.voltage)
      if (u != Complex(1.0, 0.0)) flat = false;
  }
  return {res <= 1e-8 && flat && agree <= 1e-6,
          fmt::format("residual {:.2e} pu, flat no-load {}, sweep/Newton head power rel diff {:.2e}", res, flat, agree)};
}

Outcome stopping_soundness(const TrilevelSolution& sol, double sec) {
  // independent re-solve: fresh instance (empty caches), a finer Brent partition and a dense scan
  Scenario s = default_scenario();
  s.config.ev_share = 0.5;
  const ScenarioInstance fresh = build_instance(s);
  TrilevelConfig c = fresh.trilevel;
  c.brent_windows = 32;
  const BestResponse br = cso_best_response(*fresh.objectives, sol.threshold_kw, c);
  double best = br.value;
  for (int i = 0; i <= 400; ++i) {
    try {
      best = std::max(best, fresh.objectives->pi_mid(c.alpha_max * i / 400.0, sol.threshold_kw));
    } catch (const NonConvergence&) {
    }
  }
  const double mine = fresh.objectives->pi_mid(sol.alpha, sol.threshold_kw);
  return {sol.outer_iterations <= 50 && mine >= best - sol.eps_mid,
          fmt::format("K = {}, Pi_mid(alpha_K, P_K) = {:.4f}, best response {:.4f}, eps_mid {:.4f}, {:.0f} s",
                      sol.outer_iterations, mine, best, sol.eps_mid, sec)};
}

Outcome grid_oracle() {
  const auto t0 = Clock::now();
  Scenario s = default_scenario();
  s.config.hub_subset = {8, 18};
  s.config.slots = 4;
  s.config.k_paths = 3;
  const ScenarioInstance inst = build_instance(s);
  const TrilevelSolution sol = trilevel_solve(*inst.objectives, inst.trilevel);
  const double mine = inst.objectives->pi_up(sol.alpha, sol.threshold_kw);
  const BilevelObjectives& f = *inst.objectives;
  double oracle = -std::numeric_limits<double>::infinity();
  int feasible = 0, with_best = 0;
  for (int i = 0; i < 15; ++i) {
    const double p = inst.trilevel.p_max * i / 14.0;
    std::vector<double> mids(15, -std::numeric_limits<double>::infinity());
    for (int j = 0; j < 15; ++j) {
      try {
        mids[j] = f.pi_mid(inst.trilevel.alpha_max * j / 14.0, p);
      } catch (const NonConvergence&) {
      }
    }
    const BestResponse brent = cso_best_response(f, p, inst.trilevel);
    const double br = std::max(brent.value, *std::max_element(mids.begin(), mids.end()));
    for (int j = 0; j < 15; ++j) {
      if (!(mids[j] >= br - sol.eps_mid)) continue;
      ++feasible;
      oracle = std::max(oracle, f.pi_up(inst.trilevel.alpha_max * j / 14.0, p));
    }
    // the lattice rarely lands within eps_mid of the best response, so each P also
    // gets its best-response alpha (feasible by construction); this only raises the bar
    if (brent.value >= br - sol.eps_mid) {
      ++with_best;
      oracle = std::max(oracle, f.pi_up(brent.alpha, p));
    }
  }
  const double sec = seconds_since(t0);
  return {feasible + with_best > 0 && mine >= oracle - 0.01 * std::abs(oracle) && sec < 600.0,
          fmt::format("Pi_up = {:.4f} at (P, alpha) = ({:.1f} kW, {:.3e}), oracle best {:.4f} over {} feasible "
                      "lattice points and {} best-response points, {:.0f} s",
                      mine, sol.threshold_kw, sol.alpha, oracle, feasible, with_best, sec)};
}

Outcome payoff_trend(const std::vector<SweepResults>& sweeps) {
  bool pass = true;
  std::string detail;
  for (std::size_t k = 0; k < sweeps.size(); ++k) {
    const auto& rows = sweeps[k].rows;
    bool ok = !rows.empty();
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      if (rows[i].status != "ok" || rows[i + 1].status != "ok") ok = false;
      if (rows[i + 1].pi_mid < rows[i].pi_mid) ok = false;
      if (i + 2 < rows.size() && rows[i + 1].pi_up < rows[i].pi_up) ok = false;
    }
    pass = pass && ok;
    detail += fmt::format("{}seed {}: Pi_mid", k ? "; " : "", k);
    for (const auto& r : rows) detail += fmt::format(" {:.1f}", r.pi_mid);
    detail += ", Pi_up";
    for (const auto& r : rows) detail += fmt::format(" {:.1f}", r.pi_up);
  }
  return {pass, detail};
}

Outcome share_trend(const std::vector<SweepResults>& sweeps) {
  bool pass = true;
  std::string detail;
  for (std::size_t k = 0; k < sweeps.size(); ++k) {
    const auto& ids = sweeps[k].hub_ids;
    const auto& rows = sweeps[k].rows;
    for (int hub : {8, 18}) {
      const auto it = std::find(ids.begin(), ids.end(), hub);
      if (it == ids.end()) return {false, fmt::format("hub {} missing", hub)};
      const std::size_t h = static_cast<std::size_t>(it - ids.begin());
      bool ok = !rows.empty();
      for (std::size_t i = 0; i + 1 < rows.size(); ++i)
        if (rows[i].normalized_needs.size() <= h || rows[i + 1].normalized_needs.size() <= h ||
            rows[i + 1].normalized_needs[h] > rows[i].normalized_needs[h])
          ok = false;
      pass = pass && ok;
      detail += fmt::format("{}seed {} L~{}", detail.empty() ? "" : "; ", k, hub);
      for (const auto& r : rows) detail += fmt::format(" {:.4f}", h < r.normalized_needs.size() ? r.normalized_needs[h] : NAN);
    }
  }
  return {pass, detail};
}

Outcome comparison(const SweepResults& cmp) {
  bool a = true, b = true, c = true;
  std::string detail;
  for (double xe : {0.25, 0.5, 0.75}) {
    const SweepRow* tri = find_row(cmp, xe, SweepMethod::trilevel);
    if (!tri || tri->status != "ok") return {false, fmt::format("trilevel row missing at X_e = {}", xe)};
    for (const SweepRow& r : cmp.rows) {
      if (r.param_value != xe || r.method == SweepMethod::trilevel) continue;
      if (!(tri->revenue >= r.revenue) && !std::isnan(r.revenue)) a = false;
    }
    const SweepRow* sc = find_row(cmp, xe, SweepMethod::lmp_sc, 0.01);
    const SweepRow* pc = find_row(cmp, xe, SweepMethod::lmp_pc, 0.01);
    if (!sc || !pc || !(sc->grid_cost <= pc->grid_cost)) b = false;
    // same needs under both schedules
    Scenario s = default_scenario();
    s.config = apply_sweep_value(s.config, SweepParameter::ev_share, xe);
    const ScenarioInstance inst = build_instance(s);
    const HubEconomics hubs = hub_economics(*inst.model);
    for (const SweepRow& r : cmp.rows) {
      if (r.param_value != xe || r.needs.empty()) continue;
      double pc_obj = std::numeric_limits<double>::infinity();
      try {
        pc_obj = schedule_for_mode(r.needs, *inst.grid, inst.baseline_grid_weight, hubs, ScheduleMode::plug_and_charge)
                     .objective;
      } catch (const GridInfeasible&) {
      }
      const double sc_obj =
          schedule_for_mode(r.needs, *inst.grid, inst.baseline_grid_weight, hubs, ScheduleMode::smart).objective;
      if (!(sc_obj <= pc_obj)) c = false;
    }
    detail += fmt::format("{}X_e {}: revenue tri {:.1f}", detail.empty() ? "" : "; ", xe, tri->revenue);
    for (const SweepRow& r : cmp.rows)
      if (r.param_value == xe && r.method != SweepMethod::trilevel)
        detail += fmt::format(" {}({}) {:.1f}", to_string(r.method), r.alpha_tilde, r.revenue);
    if (sc && pc) detail += fmt::format(", grid cost sc {:.4f} pc {:.4f}", sc->grid_cost, pc->grid_cost);
  }
  return {a && b && c, fmt::format("(a) {} (b) {} (c) {}; {}", a, b, c, detail)};
}

struct PeakCheck {
  bool flat = true;
  bool above = true;      // P&C peak > water-filling peak when L > Delta_2
  bool explained = true;  // every miss has the nonflexible peak on top of both profiles
  int strict_cases = 0;
};

void check_peaks(const NonflexProfile& p, double need, PeakCheck& out) {
  const auto l0 = p.original();
  const auto bp = p.breakpoints();
  const ChargingProfile s = p.schedule(need);
  const std::size_t t0 = p.active_slots(need);
  const auto order = p.order();
  const double level = s.charging_kwh[order[0]] + l0[order[0]];
  for (std::size_t k = 0; k < t0; ++k) {
    const std::size_t t = order[k];
    if (std::abs(s.charging_kwh[t] + l0[t] - level) > 1e-9 * std::max(1.0, level)) out.flat = false;
  }
  if (bp.size() < 2 || !(need > bp[1])) return;
  double wf_peak = 0.0, pc_peak = 0.0, l0_peak = 0.0;
  for (std::size_t t = 0; t < l0.size(); ++t) {
    wf_peak = std::max(wf_peak, s.charging_kwh[t] + l0[t]);
    pc_peak = std::max(pc_peak, (t == 0 ? need : 0.0) + l0[t]);
    l0_peak = std::max(l0_peak, l0[t]);
  }
  ++out.strict_cases;
  if (!(pc_peak > wf_peak)) {
    out.above = false;
    if (!(wf_peak == l0_peak && pc_peak == l0_peak)) out.explained = false;
  }
}

Outcome peak_property(const ScenarioInstance& inst, const std::vector<double>& needs) {
  const HubEconomics hubs = hub_economics(*inst.model);
  PeakCheck at_solution, swept;
  for (std::size_t h = 0; h < hubs.owners.size(); ++h) {
    if (hubs.owners[h] != HubOwner::cso) continue;
    const NonflexProfile& p = hubs.profiles[h];
    check_peaks(p, needs[h], at_solution);
    // beyond the criterion: needs across all breakpoints
    for (int i = 0; i <= 50; ++i) check_peaks(p, 2.0 * (p.breakpoints().back() + 500.0) * i / 50.0, swept);
  }
  return {at_solution.flat && at_solution.above && at_solution.strict_cases > 0,
          fmt::format("at the equilibrium needs: flat active slots {}, P&C peak above water-filling peak {} "
                      "({} hubs with L_i > Delta_2); swept needs: flat {}, strictly above {} in {} cases, misses only "
                      "where the nonflexible peak tops both profiles {}",
                      at_solution.flat, at_solution.above, at_solution.strict_cases, swept.flat, swept.above,
                      swept.strict_cases, swept.explained)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("tricharge_accept_{}", ::getpid());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  ScenarioConfig c = default_scenario().config;
  c.hub_subset = {8, 10, 18};
  c.slots = 4;
  c.k_paths = 3;
  c.seed = 5;
  std::ofstream(dir / "scenario.json") << scenario_config_json(c);
  std::ofstream(dir / "sweep.json")
      << R"({"parameter": "ev_share", "values": [0.3, 0.6], "methods": ["trilevel", "lmp_sc"]})";
  std::vector<std::filesystem::path> outs{dir / "run1", dir / "run2"};
  for (const auto& out : outs) {
    const std::string cmd = fmt::format("\"{}\" sweep \"{}\" --scenario \"{}\" --out \"{}\" --threads 2 > \"{}.log\" 2>&1",
                                        TRICHARGE_CLI, (dir / "sweep.json").string(), (dir / "scenario.json").string(),
                                        out.string(), out.string());
    if (std::system(cmd.c_str()) != 0) return {false, "sweep command failed: " + slurp(out.string() + ".log")};
  }
  int files = 0;
  bool same = true;
  for (const auto& e : std::filesystem::directory_iterator(outs[0])) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    if (slurp(e.path()) != slurp(outs[1] / e.path().filename())) same = false;
  }
  const bool manifest = slurp(outs[0] / "manifest.json") == slurp(outs[1] / "manifest.json");
  std::filesystem::remove_all(dir);
  return {same && manifest && files > 0,
          fmt::format("{} CSV files byte-identical: {}, manifests identical: {}", files, same, manifest)};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(id, o);
  };

  run(1, waterfill_oracle);
  run(2, price_continuity);

  Scenario base = default_scenario();
  base.config.ev_share = 0.5;
  const ScenarioInstance inst = build_instance(base);
  run(3, [&] { return wardrop_certificate(inst); });
  run(4, [&] { return uniqueness(inst); });
  run(5, power_flow);

  TrilevelSolution sol;
  double solve_sec = 0.0;
  bool solved = false;
  run(6, [&] {
    const auto t0 = Clock::now();
    sol = trilevel_solve(*inst.objectives, inst.trilevel);
    solve_sec = seconds_since(t0);
    solved = true;
    return stopping_soundness(sol, solve_sec);
  });
  run(7, grid_oracle);

  std::vector<SweepResults> ev_sweeps;
  const SweepSpec ev_spec = load_sweep_spec(data_path("sweeps/ev_share.json"));
  auto ev_sweeps_once = [&] {
    if (!ev_sweeps.empty()) return;
    for (std::uint64_t seed : {0u, 1u}) {
      Scenario s = default_scenario();
      s.config.nonflex_seed = seed;
      ev_sweeps.push_back(run_sweep(s, ev_spec, thread_count()));
    }
  };
  run(8, [&] {
    ev_sweeps_once();
    return payoff_trend(ev_sweeps);
  });
  run(9, [&] {
    ev_sweeps_once();
    return share_trend(ev_sweeps);
  });
  run(10, [&] {
    const SweepResults cmp =
        run_sweep(default_scenario(), load_sweep_spec(data_path("sweeps/comparison.json")), thread_count());
    return comparison(cmp);
  });
  run(11, [&] {
    if (!solved) return Outcome{false, "no trilevel solution"};
    return peak_property(inst, inst.objectives->equilibrium(sol.alpha)->needs);
  });
  run(12, determinism);

  int failed = 0;
  for (const auto& [id, o] : results) failed += o.pass ? 0 : 1;
  std::printf("%d of %zu criteria passed in %.0f s\n", static_cast<int>(results.size()) - failed, results.size(),
              seconds_since(start));
  return failed == 0 ? 0 : 1;
}
