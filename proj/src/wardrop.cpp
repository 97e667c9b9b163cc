#include "tricharge/wardrop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <utility>

#include <Eigen/Dense>
#include <fmt/core.h>

namespace tricharge {

namespace {

double lmp_alpha(const CsoPricing& pricing) {
  if (const auto* lmp = std::get_if<LmpPricing>(&pricing)) {
    if (lmp->alpha < 0.0) throw std::domain_error(fmt::format("price magnitude alpha = {} < 0", lmp->alpha));
    return lmp->alpha;
  }
  return 0.0;
}

void check_pricing(const EquilibriumModel& model, const CsoPricing& pricing) {
  lmp_alpha(pricing);
  if (const auto* fixed = std::get_if<FixedPricing>(&pricing)) {
    if (fixed->hub_price.size() != model.hub_count())
      throw ContractViolation(fmt::format("fixed pricing has {} prices for {} hubs", fixed->hub_price.size(),
                                          model.hub_count()));
    for (std::size_t h = 0; h < model.hub_count(); ++h)
      if (model.is_cso_hub(h) && !(fixed->hub_price[h] >= 0.0))
        throw ContractViolation(fmt::format("negative fixed price at hub {}", h));
  }
}

double price_at(const EquilibriumModel& model, const CsoPricing& pricing, std::size_t hub, double need) {
  if (const auto* lmp = std::get_if<LmpPricing>(&pricing))
    return model.hub_profile(hub).price(std::max(0.0, need), lmp->alpha);
  return std::get<FixedPricing>(pricing).hub_price[hub];
}

// d lambda / dL (right derivative at breakpoints)
double price_slope(const EquilibriumModel& model, const CsoPricing& pricing, std::size_t hub, double need) {
  if (const auto* lmp = std::get_if<LmpPricing>(&pricing))
    return 2.0 * lmp->alpha / static_cast<double>(model.hub_profile(hub).active_slots(std::max(0.0, need)));
  return 0.0;
}

std::vector<double> arc_totals(const EquilibriumModel& model, std::span<const double> path_flows) {
  std::vector<double> xa(model.arc_count(), 0.0);
  for (std::size_t p = 0; p < model.path_count(); ++p) {
    if (path_flows[p] == 0.0) continue;
    for (std::size_t a : model.paths()[p].arcs) xa[a] += path_flows[p];
  }
  return xa;
}

FlowAssignment raw_assignment(const EquilibriumModel& model, std::vector<double> path_flows) {
  FlowAssignment out;
  out.arc_flows = arc_totals(model, path_flows);
  out.hub_needs = charging_needs(model, path_flows);
  out.path_flows = std::move(path_flows);
  return out;
}

double path_cost_at(const EquilibriumModel& model, std::size_t p, std::span<const double> arc_flows,
                    std::span<const double> prices) {
  const auto& s = model.scenario();
  double c = model.fixed_cost(p);
  for (std::size_t a : model.paths()[p].arcs) c += bpr_travel_cost(s.arcs[a], arc_flows[a], s);
  const std::size_t h = model.cso_hub(p);
  if (h != kNoHub) c += model.energy(p) * prices[h];
  return c;
}

// Shifting delta vehicles from path `from` to path `to` in one block.
class PairShift {
 public:
  PairShift(const EquilibriumModel& model, const CsoPricing& pricing, std::size_t to, std::size_t from,
            std::span<const double> arc_flows, std::span<const double> needs)
      : model_(model), pricing_(pricing), to_(to), from_(from), arc_flows_(arc_flows), needs_(needs) {
    const auto& a_to = model.paths()[to].arcs;
    const auto& a_from = model.paths()[from].arcs;
    std::map<std::size_t, int> coef;
    for (std::size_t a : a_to) coef[a] += 1;
    for (std::size_t a : a_from) coef[a] -= 1;
    for (auto [a, c] : coef)
      if (c != 0) arcs_.emplace_back(a, c);
    for (std::size_t h : {model.cso_hub(to), model.cso_hub(from)})
      if (h != kNoHub && std::find(hubs_.begin(), hubs_.end(), h) == hubs_.end()) hubs_.push_back(h);
  }

  const std::vector<std::pair<std::size_t, int>>& arcs() const { return arcs_; }
  const std::vector<std::size_t>& hubs() const { return hubs_; }

  double hub_rate(std::size_t h) const {
    double r = 0.0;
    if (model_.cso_hub(to_) == h) r += model_.energy(to_);
    if (model_.cso_hub(from_) == h) r -= model_.energy(from_);
    return r;
  }

  // c_to - c_from and its derivative after shifting delta
  std::pair<double, double> difference(double delta) const {
    const auto& s = model_.scenario();
    double f = model_.fixed_cost(to_) - model_.fixed_cost(from_);
    double df = 0.0;
    for (auto [a, c] : arcs_) {
      const double x = std::max(0.0, arc_flows_[a] + c * delta);
      // a path never holds an arc twice, so c is +1 (only in `to`) or -1 (only in `from`)
      f += c * bpr_travel_cost(s.arcs[a], x, s);
      df += bpr_cost_derivative(s.arcs[a], x, s);
    }
    for (std::size_t h : hubs_) {
      const double rate = hub_rate(h);
      const double need = needs_[h] + rate * delta;
      const double price = price_at(model_, pricing_, h, need);
      const double slope = price_slope(model_, pricing_, h, need);
      if (model_.cso_hub(to_) == h) {
        f += model_.energy(to_) * price;
        df += model_.energy(to_) * slope * rate;
      }
      if (model_.cso_hub(from_) == h) {
        f -= model_.energy(from_) * price;
        df -= model_.energy(from_) * slope * rate;
      }
    }
    return {f, df};
  }

  // Exact minimiser of the potential along the shift direction on [0, cap].
  double line_search(double cap) const {
    if (cap <= 0.0) return 0.0;
    auto [f_hi, df_hi] = difference(cap);
    (void)df_hi;
    if (f_hi <= 0.0) return cap;
    double lo = 0.0;
    double hi = cap;
    double delta = 0.0;
    auto [f, df] = difference(delta);
    if (f >= 0.0) return 0.0;
    for (int it = 0; it < 200; ++it) {
      double next = (df > 0.0) ? delta - f / df : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      delta = next;
      std::tie(f, df) = difference(delta);
      if (f < 0.0)
        lo = delta;
      else if (f > 0.0)
        hi = delta;
      else
        return delta;
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, cap)) break;
    }
    return delta;
  }

 private:
  const EquilibriumModel& model_;
  const CsoPricing& pricing_;
  std::size_t to_;
  std::size_t from_;
  std::span<const double> arc_flows_;
  std::span<const double> needs_;
  std::vector<std::pair<std::size_t, int>> arcs_;
  std::vector<std::size_t> hubs_;
};

struct BlockDiagnostics {
  std::size_t cheapest = 0;
  std::size_t costliest_used = kNoHub;
  double min_cost = 0.0;
  double max_used_cost = -std::numeric_limits<double>::infinity();
};

BlockDiagnostics inspect_block(const EquilibriumModel::Block& block, std::span<const double> costs,
                               std::span<const double> flows) {
  BlockDiagnostics d;
  d.min_cost = std::numeric_limits<double>::infinity();
  for (std::size_t p : block.paths) {
    if (costs[p] < d.min_cost) {
      d.min_cost = costs[p];
      d.cheapest = p;
    }
    if (flows[p] > 0.0 && costs[p] > d.max_used_cost) {
      d.max_used_cost = costs[p];
      d.costliest_used = p;
    }
  }
  return d;
}

double potential(const EquilibriumModel& model, std::span<const double> path_flows, const CsoPricing& pricing) {
  return beckmann_value(model, raw_assignment(model, {path_flows.begin(), path_flows.end()}), pricing);
}

// Newton steps on the used paths for "equal cost inside every block" at fixed
// demands, with a ratio test against negative flows and backtracking on the
// potential. Path flows that reach zero leave the support.
void newton_polish(const EquilibriumModel& model, const CsoPricing& pricing, std::vector<double>& x, double tol,
                   int max_steps) {
  const auto& s = model.scenario();
  for (int step = 0; step < max_steps; ++step) {
    const FlowAssignment cur = raw_assignment(model, x);
    if (wardrop_gap(model, cur, pricing) <= tol) return;
    const std::vector<double> costs = path_costs(model, cur, pricing);

    std::vector<std::size_t> used;
    std::vector<std::size_t> block_row;
    std::size_t rows = 0;
    for (const auto& b : model.blocks()) {
      if (b.demand == 0.0) continue;
      for (std::size_t p : b.paths)
        if (x[p] > 0.0) {
          used.push_back(p);
          block_row.push_back(rows);
        }
      ++rows;
    }
    const std::size_t n = used.size();
    const std::size_t dim = n + rows;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));

    std::vector<std::vector<std::size_t>> on_arc(model.arc_count());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a : model.paths()[used[i]].arcs) on_arc[a].push_back(i);
    for (std::size_t a = 0; a < model.arc_count(); ++a) {
      if (on_arc[a].size() == 0) continue;
      const double d = bpr_cost_derivative(s.arcs[a], cur.arc_flows[a], s);
      if (d == 0.0) continue;
      for (std::size_t i : on_arc[a])
        for (std::size_t j : on_arc[a]) jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += d;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t h = model.cso_hub(used[i]);
      if (h == kNoHub) continue;
      const double slope = price_slope(model, pricing, h, cur.hub_needs[h]);
      for (std::size_t j = 0; j < n; ++j)
        if (model.cso_hub(used[j]) == h)
          jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
              model.energy(used[i]) * model.energy(used[j]) * slope;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(n + block_row[i]);
      const auto c = static_cast<Eigen::Index>(i);
      jac(c, r) = -1.0;
      jac(r, c) = 1.0;
      rhs(c) = -costs[used[i]];
    }
    // a small ridge keeps the system regular where used paths differ only on
    // uncongested arcs; the step is then still a descent direction
    double ridge = 0.0;
    for (std::size_t i = 0; i < n; ++i) ridge = std::max(ridge, jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    ridge = std::max(1e-9 * ridge, 1e-12);
    for (std::size_t i = 0; i < n; ++i) jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += ridge;
    const Eigen::VectorXd sol = jac.partialPivLu().solve(rhs);
    if (!sol.allFinite()) return;

    double limit = 1.0;
    std::size_t blocking = n;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = sol(static_cast<Eigen::Index>(i));
      if (dx < 0.0 && x[used[i]] / -dx < limit) {
        limit = x[used[i]] / -dx;
        blocking = i;
      }
    }
    const double before = potential(model, x, pricing);
    std::vector<double> trial = x;
    bool accepted = false;
    for (int back = 0; back < 30 && !accepted; ++back, limit *= 0.5, blocking = n) {
      trial = x;
      for (std::size_t i = 0; i < n; ++i)
        trial[used[i]] = i == blocking ? 0.0 : std::max(0.0, x[used[i]] + limit * sol(static_cast<Eigen::Index>(i)));
      // put rounding drift of the block totals back on the largest path
      for (const auto& b : model.blocks()) {
        if (b.demand == 0.0) continue;
        double sum = 0.0;
        std::size_t largest = b.paths.front();
        for (std::size_t p : b.paths) {
          sum += trial[p];
          if (trial[p] > trial[largest]) largest = p;
        }
        trial[largest] += b.demand - sum;
      }
      accepted = potential(model, trial, pricing) <= before;
    }
    if (!accepted) return;
    x = std::move(trial);
  }
}

}  // namespace

EquilibriumModel::EquilibriumModel(TransportScenario scenario, PathSet paths)
    : scenario_(std::move(scenario)), paths_(std::move(paths)) {
  scenario_.validate();
  const std::size_t n = paths_.paths.size();
  energy_.resize(n);
  fixed_cost_.resize(n);
  cso_hub_.assign(n, kNoHub);
  charging_hub_.assign(n, kNoHub);
  std::map<std::pair<std::size_t, int>, std::size_t> block_of;
  for (std::size_t p = 0; p < n; ++p) {
    const GlobalPath& path = paths_.paths[p];
    if (path.id != p) throw ContractViolation("path ids must be their positions");
    if (path.od >= scenario_.demands.size() || path.hub >= scenario_.hubs.size())
      throw ContractViolation(fmt::format("path {} refers to an unknown OD pair or hub", p));
    const VehicleClass& vc = scenario_.vehicle_class(path.kind);
    energy_[p] = energy_need(vc, path);
    const Hub& hub = scenario_.hubs[path.hub];
    double fixed = hub.pt_fare_eur;
    switch (required_price_source(scenario_, path)) {
      case PriceSource::fuel:
      case PriceSource::home: fixed += energy_[p] * vc.unit_price; break;
      case PriceSource::city_hub:
        fixed += energy_[p] * scenario_.city_charge_price;
        charging_hub_[p] = path.hub;
        break;
      case PriceSource::cso_hub:
        cso_hub_[p] = path.hub;
        charging_hub_[p] = path.hub;
        break;
    }
    fixed_cost_[p] = fixed;
    const auto key = std::make_pair(path.od, static_cast<int>(path.kind));
    auto [it, inserted] = block_of.try_emplace(key, blocks_.size());
    if (inserted)
      blocks_.push_back({path.kind, path.od, scenario_.demands[path.od].vehicles[static_cast<std::size_t>(path.kind)], {}});
    blocks_[it->second].paths.push_back(p);
  }
  for (std::size_t od = 0; od < scenario_.demands.size(); ++od)
    for (VehicleKind kind : kAllVehicleKinds) {
      const double demand = scenario_.demands[od].vehicles[static_cast<std::size_t>(kind)];
      if (demand > 0.0 && !block_of.count({od, static_cast<int>(kind)}))
        throw ScenarioError(fmt::format("OD pair {} has {} demand for class {} but no path", od, demand,
                                        to_string(kind)));
    }
  profiles_.reserve(scenario_.hubs.size());
  for (const Hub& h : scenario_.hubs) profiles_.emplace_back(h.nonflex_kwh);
}

double EquilibriumModel::mean_free_flow_cost(const CsoPricing& pricing) const {
  if (path_count() == 0) return 0.0;
  check_pricing(*this, pricing);
  const std::vector<double> xa(arc_count(), 0.0);
  std::vector<double> prices(hub_count(), 0.0);
  for (std::size_t h = 0; h < hub_count(); ++h)
    if (is_cso_hub(h)) prices[h] = price_at(*this, pricing, h, 0.0);
  double sum = 0.0;
  for (std::size_t p = 0; p < path_count(); ++p) sum += path_cost_at(*this, p, xa, prices);
  return sum / static_cast<double>(path_count());
}

std::vector<double> charging_needs(const EquilibriumModel& model, std::span<const double> path_flows) {
  if (path_flows.size() != model.path_count()) throw ContractViolation("path flow vector has the wrong length");
  std::vector<double> needs(model.hub_count(), 0.0);
  for (std::size_t p = 0; p < model.path_count(); ++p) {
    const std::size_t h = model.charging_hub(p);
    if (h != kNoHub) needs[h] += path_flows[p] * model.energy(p);
  }
  return needs;
}

FlowAssignment make_assignment(const EquilibriumModel& model, std::vector<double> path_flows) {
  if (path_flows.size() != model.path_count()) throw ContractViolation("path flow vector has the wrong length");
  for (std::size_t p = 0; p < path_flows.size(); ++p)
    if (!(path_flows[p] >= 0.0)) throw ContractViolation(fmt::format("path {} has flow {}", p, path_flows[p]));
  for (const auto& b : model.blocks()) {
    double sum = 0.0;
    for (std::size_t p : b.paths) sum += path_flows[p];
    if (std::abs(sum - b.demand) > 1e-9 * std::max(1.0, b.demand))
      throw ContractViolation(fmt::format("class {} of OD pair {} carries {} vehicles instead of {}",
                                          to_string(b.kind), b.od, sum, b.demand));
  }
  return raw_assignment(model, std::move(path_flows));
}

std::vector<double> hub_prices(const EquilibriumModel& model, std::span<const double> hub_needs,
                               const CsoPricing& pricing) {
  check_pricing(model, pricing);
  std::vector<double> prices(model.hub_count(), 0.0);
  for (std::size_t h = 0; h < model.hub_count(); ++h)
    if (model.is_cso_hub(h)) prices[h] = price_at(model, pricing, h, hub_needs[h]);
  return prices;
}

std::vector<double> path_costs(const EquilibriumModel& model, const FlowAssignment& x, const CsoPricing& pricing) {
  const std::vector<double> prices = hub_prices(model, x.hub_needs, pricing);
  std::vector<double> costs(model.path_count());
  for (std::size_t p = 0; p < model.path_count(); ++p) costs[p] = path_cost_at(model, p, x.arc_flows, prices);
  return costs;
}

double beckmann_value(const EquilibriumModel& model, const FlowAssignment& x, const CsoPricing& pricing) {
  check_pricing(model, pricing);
  const auto& s = model.scenario();
  double value = 0.0;
  for (std::size_t a = 0; a < model.arc_count(); ++a) value += bpr_cost_integral(s.arcs[a], x.arc_flows[a], s);
  for (std::size_t p = 0; p < model.path_count(); ++p) value += x.path_flows[p] * model.fixed_cost(p);
  if (const auto* lmp = std::get_if<LmpPricing>(&pricing)) {
    if (lmp->alpha != 0.0)
      for (std::size_t h = 0; h < model.hub_count(); ++h)
        if (model.is_cso_hub(h)) value += lmp->alpha * model.hub_profile(h).value(x.hub_needs[h]);
  } else {
    const auto& fixed = std::get<FixedPricing>(pricing);
    for (std::size_t h = 0; h < model.hub_count(); ++h)
      if (model.is_cso_hub(h)) value += fixed.hub_price[h] * x.hub_needs[h];
  }
  return value;
}

double wardrop_gap(const EquilibriumModel& model, const FlowAssignment& x, const CsoPricing& pricing) {
  // recomputed from the path flows so that stale caches cannot certify anything
  const FlowAssignment fresh = raw_assignment(model, x.path_flows);
  const std::vector<double> costs = path_costs(model, fresh, pricing);
  double gap = 0.0;
  for (const auto& b : model.blocks()) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p : b.paths) best = std::min(best, costs[p]);
    for (std::size_t p : b.paths)
      if (x.path_flows[p] > 0.0) gap = std::max(gap, costs[p] - best);
  }
  return gap;
}

FlowAssignment uniform_start(const EquilibriumModel& model) {
  std::vector<double> flows(model.path_count(), 0.0);
  for (const auto& b : model.blocks())
    for (std::size_t p : b.paths) flows[p] = b.demand / static_cast<double>(b.paths.size());
  return raw_assignment(model, std::move(flows));
}

FlowAssignment random_start(const EquilibriumModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> unit_exp(1.0);
  std::vector<double> flows(model.path_count(), 0.0);
  for (const auto& b : model.blocks()) {
    double sum = 0.0;
    for (std::size_t p : b.paths) sum += flows[p] = unit_exp(rng);
    for (std::size_t p : b.paths) flows[p] = b.demand * flows[p] / sum;
  }
  return raw_assignment(model, std::move(flows));
}

EquilibriumResult solve_wardrop(const EquilibriumModel& model, const CsoPricing& pricing,
                                const WardropOptions& options, std::optional<FlowAssignment> start) {
  check_pricing(model, pricing);
  const double tol = options.tolerance ? *options.tolerance
                                       : options.relative_tolerance * model.mean_free_flow_cost(pricing);
  if (!(tol > 0.0)) throw std::invalid_argument(fmt::format("equilibrium tolerance {} must be > 0", tol));

  std::vector<double> x = start ? make_assignment(model, start->path_flows).path_flows
                                : uniform_start(model).path_flows;
  std::vector<double> xa = arc_totals(model, x);
  std::vector<double> needs = charging_needs(model, x);
  std::vector<double> costs(model.path_count(), 0.0);

  EquilibriumResult best;
  best.gap = std::numeric_limits<double>::infinity();
  best.tolerance = tol;
  std::vector<double> trace;

  auto finish = [&](int sweeps) {
    EquilibriumResult r;
    r.flows = raw_assignment(model, x);
    r.gap = wardrop_gap(model, r.flows, pricing);
    r.beckmann = beckmann_value(model, r.flows, pricing);
    r.needs = r.flows.hub_needs;
    r.iterations = sweeps;
    r.tolerance = tol;
    return r;
  };

  // swaps stop a little below the certified tolerance so sweeps terminate
  const double swap_tol = 0.25 * tol;
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    for (const auto& block : model.blocks()) {
      if (block.paths.size() < 2 || block.demand == 0.0) continue;
      const std::size_t max_shifts = 4 * block.paths.size() + 8;
      for (std::size_t shift = 0; shift < max_shifts; ++shift) {
        const std::vector<double> prices = hub_prices(model, needs, pricing);
        for (std::size_t p : block.paths) costs[p] = path_cost_at(model, p, xa, prices);
        const BlockDiagnostics d = inspect_block(block, costs, x);
        if (d.costliest_used == kNoHub || d.max_used_cost - d.min_cost <= swap_tol) break;
        const std::size_t to = d.cheapest;
        const std::size_t from = d.costliest_used;
        const PairShift shift_pair(model, pricing, to, from, xa, needs);
        const double delta = shift_pair.line_search(x[from]);
        if (delta <= 0.0) break;
        const bool drains = delta >= x[from];
        const double moved = drains ? x[from] : delta;
        x[to] += moved;
        x[from] = drains ? 0.0 : x[from] - moved;
        for (auto [a, c] : shift_pair.arcs()) xa[a] = std::max(0.0, xa[a] + c * moved);
        for (std::size_t h : shift_pair.hubs()) needs[h] = std::max(0.0, needs[h] + shift_pair.hub_rate(h) * moved);
      }
    }
    // drop accumulated rounding in the incremental totals
    xa = arc_totals(model, x);
    needs = charging_needs(model, x);
    EquilibriumResult current = finish(sweep);
    if (current.gap > tol && options.newton_steps > 0) {
      newton_polish(model, pricing, x, tol, options.newton_steps);
      xa = arc_totals(model, x);
      needs = charging_needs(model, x);
      current = finish(sweep);
    }
    if (options.record_trace) trace.push_back(current.beckmann);
    if (current.gap < best.gap) best = current;
    if (current.gap <= tol) {
      current.beckmann_trace = std::move(trace);
      return current;
    }
  }
  best.beckmann_trace = std::move(trace);
  throw EquilibriumNotConverged(
      fmt::format("equilibrium gap {:.3e} above tolerance {:.3e} after {} sweeps", best.gap, tol,
                  options.max_sweeps),
      std::move(best));
}

FrankWolfeResult solve_wardrop_frank_wolfe(const EquilibriumModel& model, const CsoPricing& pricing,
                                           double relative_gap, int max_iterations) {
  check_pricing(model, pricing);
  FlowAssignment x = uniform_start(model);
  FrankWolfeResult out;
  for (int it = 1; it <= max_iterations; ++it) {
    const std::vector<double> c = path_costs(model, x, pricing);
    std::vector<double> y(model.path_count(), 0.0);
    for (const auto& b : model.blocks()) {
      if (b.paths.empty()) continue;
      std::size_t arg = b.paths.front();
      for (std::size_t p : b.paths)
        if (c[p] < c[arg]) arg = p;
      y[arg] = b.demand;
    }
    double dual = 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < model.path_count(); ++p) {
      dual += c[p] * (x.path_flows[p] - y[p]);
      total += c[p] * x.path_flows[p];
    }
    out.relative_duality_gap = total > 0.0 ? dual / total : 0.0;
    out.iterations = it;
    if (out.relative_duality_gap <= relative_gap) break;

    std::vector<double> d(model.path_count());
    for (std::size_t p = 0; p < d.size(); ++p) d[p] = y[p] - x.path_flows[p];
    auto slope = [&](double theta) {
      std::vector<double> z(model.path_count());
      for (std::size_t p = 0; p < z.size(); ++p) z[p] = std::max(0.0, x.path_flows[p] + theta * d[p]);
      const std::vector<double> cz = path_costs(model, raw_assignment(model, z), pricing);
      double s = 0.0;
      for (std::size_t p = 0; p < z.size(); ++p) s += cz[p] * d[p];
      return s;
    };
    double theta = 1.0;
    if (slope(1.0) > 0.0) {
      double lo = 0.0;
      double hi = 1.0;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? hi : lo) = mid;
      }
      theta = 0.5 * (lo + hi);
    }
    std::vector<double> next(model.path_count());
    for (std::size_t p = 0; p < next.size(); ++p) next[p] = std::max(0.0, x.path_flows[p] + theta * d[p]);
    x = raw_assignment(model, std::move(next));
  }
  out.flows = std::move(x);
  return out;
}

UniquenessReport uniqueness_probe(const EquilibriumModel& model, const CsoPricing& pricing, int n_starts,
                                  std::uint64_t seed, const WardropOptions& options) {
  if (n_starts < 2) throw std::invalid_argument("uniqueness probe needs at least two starts");
  UniquenessReport report;
  report.starts = n_starts;
  for (int k = 0; k < n_starts; ++k)
    report.runs.push_back(
        solve_wardrop(model, pricing, options, random_start(model, seed + static_cast<std::uint64_t>(k))));
  const auto& ref = report.runs.front().flows;
  double arc_scale = 1.0;
  double need_scale = 1.0;
  for (double v : ref.arc_flows) arc_scale = std::max(arc_scale, std::abs(v));
  for (double v : ref.hub_needs) need_scale = std::max(need_scale, std::abs(v));
  for (const auto& run : report.runs) {
    const auto& f = run.flows;
    for (std::size_t a = 0; a < f.arc_flows.size(); ++a)
      report.max_arc_deviation = std::max(report.max_arc_deviation, std::abs(f.arc_flows[a] - ref.arc_flows[a]));
    for (std::size_t h = 0; h < f.hub_needs.size(); ++h) {
      const double dev = std::abs(f.hub_needs[h] - ref.hub_needs[h]);
      report.max_need_deviation = std::max(report.max_need_deviation, dev);
      if (model.is_cso_hub(h)) report.max_cso_need_deviation = std::max(report.max_cso_need_deviation, dev);
    }
    for (std::size_t p = 0; p < f.path_flows.size(); ++p)
      report.max_path_deviation = std::max(report.max_path_deviation, std::abs(f.path_flows[p] - ref.path_flows[p]));
  }
  report.relative_arc_deviation = report.max_arc_deviation / arc_scale;
  report.relative_need_deviation = report.max_need_deviation / need_scale;
  return report;
}

}  // namespace tricharge
