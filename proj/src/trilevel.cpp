#include "tricharge/trilevel.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>
#include <fmt/core.h>

namespace tricharge {

namespace {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

struct Probe {
  double alpha = 0.0;
  double value = kMinusInf;
  int evaluations = 0;
  int failures = 0;
};

double scored(const BilevelObjectives& obj, double alpha, double p, int& evaluations, int& failures) {
  ++evaluations;
  try {
    const double v = obj.pi_mid(alpha, p);
    if (std::isnan(v)) {
      ++failures;
      return kMinusInf;
    }
    return v;
  } catch (const NonConvergence&) {
    ++failures;
    return kMinusInf;
  }
}

Probe brent_window(const BilevelObjectives& obj, double p, double lo, double hi, const TrilevelConfig& config) {
  Probe out;
  std::uintmax_t iterations = static_cast<std::uintmax_t>(config.brent_max_iterations);
  auto negated = [&](double a) {
    const double v = scored(obj, a, p, out.evaluations, out.failures);
    return v == kMinusInf ? std::numeric_limits<double>::max() : -v;
  };
  const auto [a, f] = boost::math::tools::brent_find_minima(negated, lo, hi, config.brent_bits, iterations);
  out.alpha = a;
  out.value = f == std::numeric_limits<double>::max() ? kMinusInf : -f;
  return out;
}

void better(Probe& best, const Probe& p) {
  if (p.value > best.value || (p.value == best.value && p.alpha < best.alpha)) {
    best.alpha = p.alpha;
    best.value = p.value;
  }
}

}  // namespace

void TrilevelConfig::validate() const {
  if (!(alpha_max > 0.0)) throw std::invalid_argument("alpha_max must be > 0");
  if (!(p_max > 0.0)) throw std::invalid_argument("p_max must be > 0");
  if (eps_mid && !(*eps_mid > 0.0)) throw std::invalid_argument("eps_mid must be > 0");
  if (!(eps_mid_relative > 0.0)) throw std::invalid_argument("eps_mid_relative must be > 0");
  if (!(eps_mid_floor > 0.0)) throw std::invalid_argument("eps_mid_floor must be > 0");
  if (restarts < 1) throw std::invalid_argument("restarts (N_r) must be >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  if (!(cooling > 0.0 && cooling < 1.0)) throw std::invalid_argument("cooling must be in (0, 1)");
  if (brent_windows < 1) throw std::invalid_argument("brent_windows must be >= 1");
  if (brent_bits < 4 || brent_bits > 52) throw std::invalid_argument("brent_bits must be in [4, 52]");
  if (brent_max_iterations < 1) throw std::invalid_argument("brent_max_iterations must be >= 1");
  if (max_outer_iterations < 1) throw std::invalid_argument("max_outer_iterations must be >= 1");
  if (redraw_cap < 1) throw std::invalid_argument("redraw_cap must be >= 1");
  if (max_candidates < restarts) throw std::invalid_argument("max_candidates must be >= restarts");
  if (p0 && !(*p0 >= 0.0 && *p0 <= p_max)) throw std::invalid_argument("p0 outside [0, p_max]");
  if (alpha0 && !(*alpha0 >= 0.0 && *alpha0 <= alpha_max)) throw std::invalid_argument("alpha0 outside [0, alpha_max]");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

BestResponse cso_best_response(const BilevelObjectives& objectives, double threshold_kw, const TrilevelConfig& config) {
  const int windows = config.brent_windows;
  const double width = config.alpha_max / windows;
  std::vector<Probe> probes(static_cast<std::size_t>(windows));
  auto window = [&](int j) {
    const double lo = j * width;
    const double hi = j + 1 == windows ? config.alpha_max : (j + 1) * width;
    return brent_window(objectives, threshold_kw, lo, hi, config);
  };
  if (config.workers > 1) {
    std::vector<std::future<Probe>> jobs;
    for (int j = 0; j < windows; ++j) jobs.push_back(std::async(std::launch::async, window, j));
    for (int j = 0; j < windows; ++j) probes[static_cast<std::size_t>(j)] = jobs[static_cast<std::size_t>(j)].get();
  } else {
    for (int j = 0; j < windows; ++j) probes[static_cast<std::size_t>(j)] = window(j);
  }
  Probe best;
  best.alpha = std::numeric_limits<double>::infinity();
  for (double end : {0.0, config.alpha_max}) {
    Probe p;
    p.alpha = end;
    p.value = scored(objectives, end, threshold_kw, p.evaluations, p.failures);
    better(best, p);
    best.evaluations += p.evaluations;
    best.failures += p.failures;
  }
  for (const Probe& p : probes) {
    better(best, p);
    best.evaluations += p.evaluations;
    best.failures += p.failures;
  }
  if (best.value == kMinusInf)
    throw NonConvergence(fmt::format("every probed alpha failed at P = {} kW", threshold_kw));
  return {best.alpha, best.value, best.evaluations, best.failures};
}

double acceptance_probability(double candidate, double last, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("annealing temperature must be > 0");
  if (candidate == -std::numeric_limits<double>::infinity()) return 0.0;
  if (last == 0.0) return candidate > last ? 1.0 : 0.0;
  const double d = candidate - last;
  if (d >= 0.0) return 1.0;
  return std::exp(d / (std::abs(last) * temperature));
}

double cooling_temperature(const TrilevelConfig& config, int n) { return std::pow(config.cooling, n); }

bool is_feasible(const BilevelObjectives& objectives, const std::vector<double>& constraint_alphas, double eps_mid,
                 double alpha, double threshold_kw) {
  const double mine = objectives.pi_mid(alpha, threshold_kw);
  for (double a : constraint_alphas)
    if (mine < objectives.pi_mid(a, threshold_kw) - eps_mid / 3.0) return false;
  return true;
}

AnnealingResult annealing_search(const BilevelObjectives& objectives, const std::vector<double>& constraint_alphas,
                                 double eps_mid, const TrilevelConfig& config, std::mt19937_64& rng,
                                 std::vector<TraceRow>* trace, int outer_iteration) {
  if (constraint_alphas.empty()) throw std::invalid_argument("annealing needs at least one stored alpha");
  std::uniform_real_distribution<double> uniform_p(0.0, config.p_max);
  std::uniform_real_distribution<double> uniform01(0.0, 1.0);
  std::normal_distribution<double> spread(0.0, config.eta);

  AnnealingResult best;
  bool have_last = false;
  double last = 0.0;
  int rejections = 0;
  int n = 0;
  while (rejections < config.restarts && n < config.max_candidates) {
    const double p = uniform_p(rng);
    double bound = kMinusInf;
    double alpha_p = constraint_alphas.front();
    for (double a : constraint_alphas) {
      const double v = objectives.pi_mid(a, p);
      if (v > bound) {
        bound = v;
        alpha_p = a;
      }
    }
    bound -= eps_mid / 3.0;
    double alpha = 0.0;
    double mid = 0.0;
    int draws = 0;
    for (;;) {
      if (++draws > config.redraw_cap)
        throw NonConvergence(fmt::format(
            "no feasible alpha after {} draws around {:.6g} at P = {:.6g} kW; try a larger eta", config.redraw_cap,
            alpha_p, p));
      alpha = alpha_p + spread(rng);
      if (alpha < 0.0 || alpha > config.alpha_max) continue;
      try {
        mid = objectives.pi_mid(alpha, p);
      } catch (const NonConvergence&) {
        continue;
      }
      if (mid >= bound) break;
    }
    best.redraws += draws - 1;
    ++n;
    const double value = objectives.pi_up(alpha, p);
    bool accept = false;
    const double u = uniform01(rng);
    if (!have_last) {
      accept = true;
    } else if (value != last) {
      accept = u < acceptance_probability(value, last, cooling_temperature(config, n));
    }
    if (accept) {
      have_last = true;
      last = value;
      rejections = 0;
      ++best.accepted;
      if (best.accepted == 1 || value > best.pi_up) {
        best.pi_up = value;
        best.threshold_kw = p;
        best.alpha = alpha;
      }
    } else {
      ++rejections;
    }
    if (trace) trace->push_back({outer_iteration, "anneal", p, alpha, mid, value, accept, true});
  }
  best.candidates = n;
  return best;
}

TrilevelSolution trilevel_solve(const BilevelObjectives& objectives, const TrilevelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  TrilevelSolution sol;
  double p = config.p0.value_or(config.p_max / 2.0);
  double alpha = config.alpha0.value_or(config.alpha_max / 2.0);

  auto record_brent = [&](int k, double pk, const BestResponse& br) {
    sol.trace.push_back({k, "brent", pk, br.alpha, br.value, objectives.pi_up(br.alpha, pk), false, true});
  };

  BestResponse br = cso_best_response(objectives, p, config);
  record_brent(0, p, br);
  sol.constraint_alphas.push_back(br.alpha);
  sol.eps_mid = config.eps_mid.value_or(std::max(config.eps_mid_relative * std::abs(br.value), config.eps_mid_floor));

  for (int k = 0;; ++k) {
    const double mid = objectives.pi_mid(alpha, p);
    if (mid >= br.value - sol.eps_mid) {
      sol.threshold_kw = p;
      sol.alpha = alpha;
      sol.pi_mid = mid;
      sol.pi_up = objectives.pi_up(alpha, p);
      sol.best_response_alpha = br.alpha;
      sol.best_response_value = br.value;
      sol.margin = mid - (br.value - sol.eps_mid);
      sol.outer_iterations = k;
      return sol;
    }
    if (k >= config.max_outer_iterations)
      throw TrilevelNotConverged(
          fmt::format("no eps-optimal CSO response after {} outer iterations", config.max_outer_iterations),
          std::move(sol.trace));
    const AnnealingResult ann =
        annealing_search(objectives, sol.constraint_alphas, sol.eps_mid, config, rng, &sol.trace, k + 1);
    p = ann.threshold_kw;
    alpha = ann.alpha;
    br = cso_best_response(objectives, p, config);
    record_brent(k + 1, p, br);
    sol.constraint_alphas.push_back(br.alpha);
  }
}

}  // namespace tricharge
