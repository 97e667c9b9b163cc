#include <functional>
#include <random>

#include "doctest.h"
#include "tricharge/trilevel.hpp"

using namespace tricharge;

namespace {

class Stub : public BilevelObjectives {
 public:
  using Fn = std::function<double(double, double)>;
  Stub(Fn mid, Fn up) : mid_(std::move(mid)), up_(std::move(up)) {}
  double pi_mid(double alpha, double p) const override { return mid_(alpha, p); }
  double pi_up(double alpha, double p) const override { return up_(alpha, p); }

 private:
  Fn mid_;
  Fn up_;
};

TrilevelConfig stub_config() {
  TrilevelConfig c;
  c.alpha_max = 1e-3;
  c.p_max = 4000.0;
  c.eta = 2.5e-5;
  return c;
}

}  // namespace

TEST_SUITE("trilevel") {

TEST_CASE("acceptance probability") {
  CHECK(acceptance_probability(11.0, 10.0, 0.5) == 1.0);
  CHECK(acceptance_probability(10.0, 10.0, 0.5) == 1.0);
  CHECK(acceptance_probability(9.0, 10.0, 0.5) == doctest::Approx(std::exp(-1.0 / (10.0 * 0.5))));
  CHECK(acceptance_probability(-12.0, -10.0, 0.25) == doctest::Approx(std::exp(-2.0 / (10.0 * 0.25))));
  CHECK(acceptance_probability(1.0, 0.0, 0.5) == 1.0);
  CHECK(acceptance_probability(-1.0, 0.0, 0.5) == 0.0);
  CHECK(acceptance_probability(0.0, 0.0, 0.5) == 0.0);
  CHECK(acceptance_probability(-std::numeric_limits<double>::infinity(), 3.0, 0.5) == 0.0);
  CHECK_THROWS(acceptance_probability(1.0, 2.0, 0.0));
  const TrilevelConfig c;
  CHECK(cooling_temperature(c, 0) == 1.0);
  CHECK(cooling_temperature(c, 10) == doctest::Approx(std::pow(0.99, 10)));
  CHECK(cooling_temperature(c, 11) < cooling_temperature(c, 10));
}

TEST_CASE("best response of a concave stub") {
  const double peak = 3.7e-4;
  const Stub s([&](double a, double) { return -(a - peak) * (a - peak); }, [](double, double) { return 0.0; });
  const BestResponse br = cso_best_response(s, 1000.0, stub_config());
  CHECK(std::abs(br.alpha - peak) <= 1e-6 * 1e-3);
  CHECK(br.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("best response ties go to alpha zero") {
  const Stub s([](double, double) { return 0.0; }, [](double, double) { return 0.0; });
  const BestResponse br = cso_best_response(s, 1000.0, stub_config());
  CHECK(br.alpha == 0.0);
}

TEST_CASE("best response of a multimodal stub beats a fine grid") {
  auto f = [](double a, double p) {
    const double x = a * 1e3;
    return std::sin(17.0 * x) + 0.5 * std::cos(41.0 * x + p * 1e-3) - 0.3 * x;
  };
  const Stub s(f, [](double, double) { return 0.0; });
  for (double p : {0.0, 1500.0, 4000.0}) {
    const BestResponse br = cso_best_response(s, p, stub_config());
    for (int i = 0; i < 200; ++i) CHECK(br.value >= f(1e-3 * i / 199.0, p) - 1e-6);
  }
}

TEST_CASE("best response skips failing alphas") {
  const Stub s(
      [](double a, double) {
        if (a > 2e-4 && a < 4e-4) throw NonConvergence("stub failure");
        return -(a - 7e-4) * (a - 7e-4);
      },
      [](double, double) { return 0.0; });
  const BestResponse br = cso_best_response(s, 10.0, stub_config());
  CHECK(br.failures > 0);
  CHECK(br.alpha == doctest::Approx(7e-4).epsilon(1e-5));
}

TEST_CASE("annealing finds the peak of a P-only objective") {
  const double target = 2600.0;
  const Stub s([](double, double) { return 1.0; },
               [&](double, double p) { return -((p - target) / 1000.0) * ((p - target) / 1000.0) - 0.01; });
  TrilevelConfig c = stub_config();
  c.restarts = 100;
  int close = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    const AnnealingResult r = annealing_search(s, {5e-4}, 1e-3, c, rng);
    if (std::abs(r.threshold_kw - target) <= 0.05 * c.p_max) ++close;
  }
  CHECK(close == 20);
}

TEST_CASE("annealing stops on a plateau") {
  const Stub s([](double, double) { return 1.0; }, [](double, double) { return 5.0; });
  TrilevelConfig c = stub_config();
  std::mt19937_64 rng(3);
  std::vector<TraceRow> trace;
  const AnnealingResult r = annealing_search(s, {5e-4}, 1e-3, c, rng, &trace);
  CHECK(r.accepted == 1);
  CHECK(r.candidates == c.restarts + 1);
  CHECK(r.pi_up == 5.0);
  CHECK(trace.size() == static_cast<std::size_t>(c.restarts + 1));
  CHECK(trace.front().accepted);
}

TEST_CASE("annealing returns feasible points only") {
  // the CSO wants alpha close to P / p_max * alpha_max
  auto mid = [](double a, double p) { return -std::abs(a - 1e-3 * p / 4000.0) * 1e4; };
  const Stub s(mid, [](double a, double p) { return a * 1e6 + p * 1e-3; });
  TrilevelConfig c = stub_config();
  std::mt19937_64 rng(8);
  std::vector<TraceRow> trace;
  const std::vector<double> stored{2e-4, 6e-4};
  const AnnealingResult r = annealing_search(s, stored, 0.3, c, rng, &trace);
  CHECK(is_feasible(s, stored, 0.3, r.alpha, r.threshold_kw));
  for (const auto& t : trace) CHECK(is_feasible(s, stored, 0.3, t.alpha, t.threshold_kw));
}

TEST_CASE("redraw cap") {
  // only the stored alpha itself is feasible
  const Stub s([](double a, double) { return a == 5e-4 ? 1.0 : 0.0; }, [](double, double) { return 0.0; });
  TrilevelConfig c = stub_config();
  c.redraw_cap = 50;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(annealing_search(s, {5e-4}, 1e-6, c, rng), NonConvergence);
}

TEST_CASE("alpha-independent CSO payoff stops at once") {
  const Stub s([](double, double p) { return p * 1e-3; }, [](double a, double p) { return -a - p; });
  const TrilevelSolution sol = trilevel_solve(s, stub_config());
  CHECK(sol.outer_iterations == 0);
  CHECK(sol.threshold_kw == 2000.0);
  CHECK(sol.alpha == 5e-4);
}

TEST_CASE("bilevel stub with a known optimistic solution") {
  // CSO best response alpha = a(P) = 1e-3 (P / 4000)^2 with a piecewise-linear payoff,
  // so the midpoint start is not an equilibrium; the ENO wants large alpha and P near 3000
  auto a_of = [](double p) { return 1e-3 * (p / 4000.0) * (p / 4000.0); };
  auto mid = [&](double a, double p) { return 100.0 - 1e5 * std::abs(a - a_of(p)); };
  auto up = [&](double a, double p) { return 1000.0 - 1e-4 * (p - 3000.0) * (p - 3000.0) + 1e5 * a; };
  const Stub s(mid, up);
  TrilevelConfig c = stub_config();
  c.restarts = 60;
  c.eps_mid = 0.3;
  const TrilevelSolution sol = trilevel_solve(s, c);
  // certificate
  const BestResponse br = cso_best_response(s, sol.threshold_kw, c);
  CHECK(sol.pi_mid >= br.value - sol.eps_mid);
  CHECK(sol.margin >= 0.0);
  // along the reaction curve up(a(P), P) peaks where -2e-4 (P - 3000) + 1.25e-5 P = 0, P = 3200
  double best = -1e300;
  for (int i = 0; i <= 4000; ++i) best = std::max(best, up(a_of(i), i));
  CHECK(best == doctest::Approx(up(a_of(3200.0), 3200.0)));
  CHECK(sol.outer_iterations >= 1);
  CHECK(sol.pi_up >= best - 0.01 * std::abs(best));
  CHECK(sol.pi_up <= best + 1e5 * sol.eps_mid / 1e5 + 1e-9);
  // one new stored alpha per outer iteration
  CHECK(sol.constraint_alphas.size() == static_cast<std::size_t>(sol.outer_iterations + 1));
}

TEST_CASE("trilevel solve is deterministic for a seed") {
  auto mid = [](double a, double p) { return -std::abs(a - 1e-3 * p / 4000.0) * 1e4 + std::sin(a * 1e4); };
  auto up = [](double a, double p) { return a * 1e5 + p * 1e-2; };
  const Stub s(mid, up);
  TrilevelConfig c = stub_config();
  c.seed = 99;
  const TrilevelSolution x = trilevel_solve(s, c);
  const TrilevelSolution y = trilevel_solve(s, c);
  REQUIRE(x.trace.size() == y.trace.size());
  for (std::size_t i = 0; i < x.trace.size(); ++i) {
    CHECK(x.trace[i].threshold_kw == y.trace[i].threshold_kw);
    CHECK(x.trace[i].alpha == y.trace[i].alpha);
    CHECK(x.trace[i].accepted == y.trace[i].accepted);
  }
  CHECK(x.pi_up == y.pi_up);
}

TEST_CASE("configuration checks") {
  TrilevelConfig c;
  c.restarts = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrilevelConfig{};
  c.eta = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrilevelConfig{};
  c.eps_mid = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

}
