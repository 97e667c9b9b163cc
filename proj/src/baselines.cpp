#include "tricharge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "tricharge/objectives.hpp"

namespace tricharge {

namespace {

using Profiles = std::vector<std::vector<double>>;

// Euclidean projection onto {l >= 0, sum l = total}.
std::vector<double> project_simplex(const std::vector<double>& v, double total) {
  std::vector<double> out(v.size(), 0.0);
  if (total <= 0.0 || v.empty()) return out;
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - total) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) shift = candidate;
  }
  for (std::size_t t = 0; t < v.size(); ++t) out[t] = std::max(0.0, v[t] - shift);
  // restore the sum exactly on the largest entry
  const double sum = std::accumulate(out.begin(), out.end(), 0.0);
  auto largest = std::max_element(out.begin(), out.end());
  *largest = std::max(0.0, *largest + (total - sum));
  return out;
}

class GridObjective {
 public:
  GridObjective(const GridCostModel& grid, double weight, double step) : grid_(grid), weight_(weight), step_(step) {}

  // +inf where the power flow collapses, so line searches back off
  double value(const Profiles& x) const {
    try {
      return weight_ * grid_.total_cost(x);
    } catch (const GridInfeasible&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // d value / d x[h][t] for the free hubs, central differences (forward near 0).
  Profiles gradient(const Profiles& x, const std::vector<std::size_t>& free_hubs) const {
    Profiles g(x.size(), std::vector<double>(grid_.slots(), 0.0));
    std::vector<double> column(x.size());
    for (std::size_t t = 0; t < grid_.slots(); ++t) {
      for (std::size_t h = 0; h < x.size(); ++h) column[h] = x[h][t];
      for (std::size_t h : free_hubs) {
        const double base = column[h];
        column[h] = base + step_;
        const double up = grid_.slot_cost(t, column);
        double down = 0.0;
        double width = step_;
        if (base >= step_) {
          column[h] = base - step_;
          down = grid_.slot_cost(t, column);
          width = 2.0 * step_;
        } else {
          column[h] = base;
          down = grid_.slot_cost(t, column);
        }
        column[h] = base;
        g[h][t] = weight_ * (up - down) / width;
      }
    }
    return g;
  }

 private:
  const GridCostModel& grid_;
  double weight_;
  double step_;
};

double dot(const Profiles& a, const Profiles& b) {
  double s = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h)
    for (std::size_t t = 0; t < a[h].size(); ++t) s += a[h][t] * b[h][t];
  return s;
}

// max over free hubs of (largest gradient on a used slot - smallest gradient),
// relative to the gradient magnitude.
double stationarity(const Profiles& x, const Profiles& g, const std::vector<std::size_t>& free_hubs,
                    std::span<const double> needs) {
  double worst = 0.0;
  for (std::size_t h : free_hubs) {
    const double g_min = *std::min_element(g[h].begin(), g[h].end());
    double g_used = g_min;
    for (std::size_t t = 0; t < x[h].size(); ++t)
      if (x[h][t] > 1e-9 * std::max(1.0, needs[h])) g_used = std::max(g_used, g[h][t]);
    double scale = 0.0;
    for (double v : g[h]) scale = std::max(scale, std::abs(v));
    if (scale > 0.0) worst = std::max(worst, (g_used - g_min) / scale);
  }
  return worst;
}

void check_needs(std::span<const double> needs, const GridCostModel& grid, const HubEconomics& hubs) {
  if (needs.size() != grid.hub_count() || hubs.owners.size() != grid.hub_count() ||
      hubs.profiles.size() != grid.hub_count())
    throw ContractViolation("needs, hubs and grid disagree on the hub count");
  for (double l : needs)
    if (!(l >= 0.0)) throw ContractViolation(fmt::format("charging need {} < 0", l));
}

}  // namespace

std::string_view to_string(ScheduleMode mode) {
  return mode == ScheduleMode::plug_and_charge ? "lmp_pc" : "lmp_sc";
}

Profiles plug_and_charge(std::span<const double> needs, std::size_t slots) {
  if (slots == 0) throw ContractViolation("plug and charge needs at least one slot");
  Profiles out(needs.size(), std::vector<double>(slots, 0.0));
  for (std::size_t h = 0; h < needs.size(); ++h) {
    if (!(needs[h] >= 0.0)) throw ContractViolation(fmt::format("charging need {} < 0", needs[h]));
    out[h][0] = needs[h];
  }
  return out;
}

ScheduleResult grid_aware_schedule(std::span<const double> needs, const GridCostModel& grid, double weight,
                                   const HubEconomics& hubs, const ScheduleOptions& options) {
  check_needs(needs, grid, hubs);
  const std::size_t slots = grid.slots();
  const GridObjective objective(grid, weight, options.gradient_step_kwh);

  Profiles pc = plug_and_charge(needs, slots);
  Profiles wf = grid_charging_profiles(hubs, needs);
  std::vector<std::size_t> free_hubs;
  for (std::size_t h = 0; h < needs.size(); ++h)
    if (hubs.owners[h] == HubOwner::cso && needs[h] > 0.0 && slots > 1) free_hubs.push_back(h);

  ScheduleResult out;
  const double f_pc = objective.value(pc);
  const double f_wf = objective.value(wf);
  if (std::isinf(f_wf) && std::isinf(f_pc))
    throw GridInfeasible("neither water-filling nor plug-and-charge profiles admit a power-flow solution");
  Profiles x = f_wf <= f_pc ? wf : pc;
  double f = std::min(f_wf, f_pc);
  if (free_hubs.empty()) {
    out.profiles = std::move(x);
    out.objective = f;
    out.stationary = true;
    return out;
  }

  Profiles g = objective.gradient(x, free_hubs);
  double scale = 0.0;
  double g_max = 0.0;
  for (std::size_t h : free_hubs) {
    scale = std::max(scale, needs[h] / static_cast<double>(slots));
    for (double v : g[h]) g_max = std::max(g_max, std::abs(v));
  }
  const double step0 = g_max > 0.0 ? scale / g_max : 1.0;
  double step = step0;
  int quiet = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    out.iterations = it;
    out.stationarity = stationarity(x, g, free_hubs, needs);
    if (out.stationarity <= options.stationarity_tolerance) {
      out.stationary = true;
      break;
    }
    // spectral projected-gradient direction
    Profiles d = x;
    for (std::size_t h : free_hubs) {
      std::vector<double> trial(slots);
      for (std::size_t t = 0; t < slots; ++t) trial[t] = x[h][t] - step * g[h][t];
      const std::vector<double> p = project_simplex(trial, needs[h]);
      for (std::size_t t = 0; t < slots; ++t) d[h][t] = p[t] - x[h][t];
    }
    for (std::size_t h = 0; h < d.size(); ++h)
      if (std::find(free_hubs.begin(), free_hubs.end(), h) == free_hubs.end()) std::fill(d[h].begin(), d[h].end(), 0.0);
    const double slope = dot(g, d);
    if (!(slope < 0.0)) {
      out.stationary = true;
      break;
    }
    double lambda = 1.0;
    Profiles next = x;
    double f_next = f;
    bool moved = false;
    for (int back = 0; back < 60; ++back) {
      for (std::size_t h : free_hubs)
        for (std::size_t t = 0; t < slots; ++t) next[h][t] = std::max(0.0, x[h][t] + lambda * d[h][t]);
      f_next = objective.value(next);
      if (f_next <= f + 1e-4 * lambda * slope) {
        moved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!moved || !(f_next < f)) {
      out.warning = fmt::format("line search stalled at iteration {} (stationarity {:.3e})", it, out.stationarity);
      break;
    }
    Profiles g_next = objective.gradient(next, free_hubs);
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t h : free_hubs)
      for (std::size_t t = 0; t < slots; ++t) {
        const double s = next[h][t] - x[h][t];
        ss += s * s;
        sy += s * (g_next[h][t] - g[h][t]);
      }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-10 * step0, 1e10 * step0) : 1e10 * step0;
    const double decrease = f - f_next;
    x = std::move(next);
    g = std::move(g_next);
    f = f_next;
    quiet = decrease <= 1e-14 * std::abs(f) ? quiet + 1 : 0;
    if (quiet >= 5) {
      out.stationarity = stationarity(x, g, free_hubs, needs);
      out.stationary = true;
      break;
    }
  }
  if (!out.stationary && out.warning.empty())
    out.warning = fmt::format("iteration cap reached (stationarity {:.3e})", out.stationarity);
  // exact conservation on output
  for (std::size_t h : free_hubs) x[h] = project_simplex(x[h], needs[h]);
  out.objective = objective.value(x);
  out.profiles = std::move(x);
  if (out.objective > std::min(f_wf, f_pc)) {
    out.profiles = f_wf <= f_pc ? std::move(wf) : std::move(pc);
    out.objective = std::min(f_wf, f_pc);
  }
  return out;
}

ScheduleResult schedule_for_mode(std::span<const double> needs, const GridCostModel& grid, double weight,
                                 const HubEconomics& hubs, ScheduleMode mode, const ScheduleOptions& options) {
  if (mode == ScheduleMode::smart) return grid_aware_schedule(needs, grid, weight, hubs, options);
  check_needs(needs, grid, hubs);
  ScheduleResult out;
  out.profiles = plug_and_charge(needs, grid.slots());
  out.objective = weight * grid.total_cost(out.profiles);
  out.stationary = true;
  return out;
}

TrueLmp true_lmp(std::span<const double> needs, const GridCostModel& grid, double weight, const HubEconomics& hubs,
                 ScheduleMode mode, double alpha_tilde, double fd_step_kwh, const ScheduleOptions& options,
                 bool richardson) {
  check_needs(needs, grid, hubs);
  if (!(alpha_tilde >= 0.0)) throw ContractViolation("alpha_tilde must be >= 0");
  if (!(fd_step_kwh > 0.0)) throw ContractViolation("finite-difference step must be > 0");
  auto value = [&](const std::vector<double>& l) { return schedule_for_mode(l, grid, weight, hubs, mode, options).objective; };
  const std::vector<double> base(needs.begin(), needs.end());
  auto derivatives = [&](double h) {
    std::vector<double> d(base.size(), 0.0);
    double f0 = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (hubs.owners[i] != HubOwner::cso) continue;
      std::vector<double> up = base;
      up[i] += h;
      if (base[i] >= h) {
        std::vector<double> down = base;
        down[i] -= h;
        d[i] = (value(up) - value(down)) / (2.0 * h);
      } else {
        if (std::isnan(f0)) f0 = value(base);
        d[i] = (value(up) - f0) / h;
      }
    }
    return d;
  };
  TrueLmp out;
  out.derivatives = derivatives(fd_step_kwh);
  out.prices.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out.prices[i] = alpha_tilde * out.derivatives[i];
  if (richardson) {
    const std::vector<double> half = derivatives(0.5 * fd_step_kwh);
    for (std::size_t i = 0; i < base.size(); ++i)
      if (half[i] != 0.0)
        out.richardson_gap = std::max(out.richardson_gap, std::abs(out.derivatives[i] - half[i]) / std::abs(half[i]));
  }
  return out;
}

void BaselineConfig::validate() const {
  if (!(alpha_tilde >= 0.0)) throw std::invalid_argument("alpha_tilde must be >= 0");
  if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must be in (0, 1]");
  if (!(tolerance_kwh > 0.0)) throw std::invalid_argument("baseline tolerance must be > 0");
  if (max_iterations < 1) throw std::invalid_argument("baseline iteration cap must be >= 1");
  if (stall_window < 1) throw std::invalid_argument("stall window must be >= 1");
  if (!(min_theta > 0.0 && min_theta <= theta)) throw std::invalid_argument("min_theta must be in (0, theta]");
  if (!(fd_step_kwh > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
}

BaselineRun baseline_fixed_point(const EquilibriumModel& model, const GridCostModel& grid, double weight,
                                 ScheduleMode mode, const BaselineConfig& config, const WardropOptions& wardrop) {
  config.validate();
  const HubEconomics hubs = hub_economics(model);
  BaselineRun run;
  run.mode = mode;
  run.alpha_tilde = config.alpha_tilde;
  std::vector<double> needs(model.hub_count(), 0.0);
  run.needs.push_back(needs);
  auto lmp_at = [&](const std::vector<double>& l) {
    return true_lmp(l, grid, weight, hubs, mode, config.alpha_tilde, config.fd_step_kwh, config.schedule);
  };
  TrueLmp lmp;
  try {
    lmp = lmp_at(needs);
  } catch (const GridInfeasible& e) {
    run.abort_reason = e.what();
    return run;
  }
  double step_theta = config.theta;
  double best_residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int k = 1; k <= config.max_iterations; ++k) {
    run.prices.push_back(lmp.prices);
    EquilibriumResult eq;
    try {
      eq = solve_wardrop(model, FixedPricing{lmp.prices}, wardrop);
    } catch (const NonConvergence& e) {
      run.abort_reason = e.what();
      break;
    }
    run.iterations = k;
    double residual = 0.0;
    for (std::size_t i = 0; i < needs.size(); ++i) residual = std::max(residual, std::abs(eq.needs[i] - needs[i]));
    run.residual_kwh = residual;
    if (config.theta * residual <= config.tolerance_kwh) {
      run.converged = true;
      break;
    }
    // a cycling iteration gets a smaller step
    if (residual < 0.999 * best_residual) {
      best_residual = residual;
      stalled = 0;
    } else if (++stalled >= config.stall_window) {
      step_theta = std::max(0.5 * step_theta, config.min_theta);
      stalled = 0;
    }
    // A damped step can land where the feeder collapses (all of a hub's need
    // in one slot under plug-and-charge); shrink theta until it does not.
    double theta = step_theta;
    std::vector<double> next(needs.size());
    TrueLmp next_lmp;
    bool feasible = false;
    for (int halving = 0; halving <= 30 && !feasible; ++halving, theta *= 0.5) {
      for (std::size_t i = 0; i < needs.size(); ++i) next[i] = (1.0 - theta) * needs[i] + theta * eq.needs[i];
      try {
        next_lmp = lmp_at(next);
        feasible = true;
      } catch (const GridInfeasible&) {
      }
    }
    if (!feasible) {
      run.abort_reason = "every damped step leads to voltage collapse";
      break;
    }
    needs = next;
    lmp = std::move(next_lmp);
    run.needs.push_back(needs);
  }
  if (run.iterations == 0) return run;
  run.final_needs = needs;
  run.final_prices = lmp.prices;
  for (std::size_t i = 0; i < run.final_needs.size(); ++i)
    if (hubs.owners[i] == HubOwner::cso) run.revenue += run.final_needs[i] * run.final_prices[i];
  try {
    run.grid_cost = schedule_for_mode(run.final_needs, grid, weight, hubs, mode, config.schedule).objective;
  } catch (const GridInfeasible& e) {
    run.grid_cost = std::numeric_limits<double>::infinity();
    if (run.abort_reason.empty()) run.abort_reason = e.what();
  }
  return run;
}

}  // namespace tricharge
