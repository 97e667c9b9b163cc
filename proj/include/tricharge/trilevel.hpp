#pragma once

// Optimistic trilevel solve: iterative bounding over the ENO threshold P and
// the CSO price magnitude alpha, with a multi-window Brent search for the CSO
// best response and simulated annealing for the constrained ENO problem.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tricharge/errors.hpp"

namespace tricharge {

// The two payoffs as functions of (alpha, P). Implementations must be safe
// to call concurrently. A lower-level failure is reported by throwing
// NonConvergence.
class BilevelObjectives {
 public:
  virtual ~BilevelObjectives() = default;
  virtual double pi_mid(double alpha, double threshold_kw) const = 0;
  virtual double pi_up(double alpha, double threshold_kw) const = 0;
};

struct TrilevelConfig {
  double alpha_max = 1e-3;  // EUR/kW^2
  double p_max = 4000.0;    // kW
  std::optional<double> eps_mid;  // unset: 1e-3 x |best response value at P0|
  double eps_mid_relative = 1e-3;
  double eps_mid_floor = 1e-9;
  int restarts = 15;  // N_r
  double eta = 2.5e-6;
  double cooling = 0.99;  // K(n) = cooling^n
  int brent_windows = 8;
  int brent_bits = 26;
  int brent_max_iterations = 200;
  int max_outer_iterations = 50;
  int redraw_cap = 10000;
  int max_candidates = 2000;
  std::optional<double> p0;
  std::optional<double> alpha0;
  std::uint64_t seed = 0;
  int workers = 1;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct BestResponse {
  double alpha = 0.0;
  double value = 0.0;
  int evaluations = 0;
  int failures = 0;  // probed alphas scored -infinity
};

struct TraceRow {
  int outer_iteration = 0;
  std::string phase;  // "anneal" or "brent"
  double threshold_kw = 0.0;
  double alpha = 0.0;
  double pi_mid = 0.0;
  double pi_up = 0.0;
  bool accepted = false;
  bool feasible = false;
};

struct AnnealingResult {
  double threshold_kw = 0.0;
  double alpha = 0.0;
  double pi_up = 0.0;
  int candidates = 0;
  int accepted = 0;
  int redraws = 0;
};

struct TrilevelSolution {
  double threshold_kw = 0.0;  // P_K
  double alpha = 0.0;         // alpha_K
  double pi_mid = 0.0;
  double pi_up = 0.0;
  double best_response_alpha = 0.0;  // alpha-bar at P_K
  double best_response_value = 0.0;  // Pi_mid-bar(P_K)
  double eps_mid = 0.0;
  double margin = 0.0;  // pi_mid - (best_response_value - eps_mid) >= 0
  int outer_iterations = 0;
  std::vector<double> constraint_alphas;  // alpha-bar_l in order
  std::vector<TraceRow> trace;
};

class TrilevelNotConverged : public NonConvergence {
 public:
  TrilevelNotConverged(const std::string& what, std::vector<TraceRow> trace)
      : NonConvergence(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

// argmax over [0, alpha_max] of Pi_mid(., P): Brent in each window plus both
// end points; ties go to the smallest alpha.
BestResponse cso_best_response(const BilevelObjectives& objectives, double threshold_kw,
                               const TrilevelConfig& config);

// min(1, exp((candidate - last) / (|last| K))); with last = 0: 1 for a
// strict improvement, 0 otherwise.
double acceptance_probability(double candidate, double last, double temperature);

// K(n) = cooling^n
double cooling_temperature(const TrilevelConfig& config, int n);

// One run of the constrained annealing search for the ENO. Feasible points
// satisfy Pi_mid(alpha, P) >= Pi_mid(alpha_l, P) - eps_mid / 3 for every
// stored alpha_l. Candidates whose value equals the last accepted one count
// as rejections, so a flat objective ends the search after N_r candidates.
AnnealingResult annealing_search(const BilevelObjectives& objectives, const std::vector<double>& constraint_alphas,
                                 double eps_mid, const TrilevelConfig& config, std::mt19937_64& rng,
                                 std::vector<TraceRow>* trace = nullptr, int outer_iteration = 0);

// True if (alpha, P) satisfies every stored constraint; recomputes all terms.
bool is_feasible(const BilevelObjectives& objectives, const std::vector<double>& constraint_alphas, double eps_mid,
                 double alpha, double threshold_kw);

TrilevelSolution trilevel_solve(const BilevelObjectives& objectives, const TrilevelConfig& config);

}  // namespace tricharge
