#pragma once

// Water-filling schedule of an aggregated charging need on top of a
// nonflexible load profile, its quadratic proxy cost and the LMP-style
// charging price derived from it.

#include <cstddef>
#include <span>
#include <vector>

namespace tricharge {

struct ChargingProfile {
  std::vector<double> charging_kwh;  // l*_t, original slot order
  std::vector<double> total_kwh;     // l*_t + l0_t
};

// Nonflexible profile of one hub with the quantities the closed form needs.
// Input slots may be in any order; the profile is sorted internally (stable
// on ties) and schedules are returned in the caller's slot order.
class NonflexProfile {
 public:
  NonflexProfile() = default;
  explicit NonflexProfile(std::vector<double> nonflex_kwh);

  std::size_t slots() const { return original_.size(); }
  std::span<const double> original() const { return original_; }
  std::span<const double> sorted() const { return sorted_; }
  std::span<const double> cumulative() const { return cumulative_; }
  // Delta_t for t = 1..T (index t-1); Delta_{T+1} is +infinity implicitly.
  std::span<const double> breakpoints() const { return breakpoints_; }
  // sorted position -> original slot
  std::span<const std::size_t> order() const { return order_; }

  // t0 in 1..T with Delta_{t0} < need <= Delta_{t0+1}; 1 for a zero need.
  std::size_t active_slots(double need_kwh) const;
  // Common total load of the active slots, (L + L0_{t0}) / t0.
  double water_level(double need_kwh) const;
  // G*(L)
  double value(double need_kwh) const;
  // dG*/dL = 2 * water level
  double marginal_value(double need_kwh) const { return 2.0 * water_level(need_kwh); }
  // lambda(alpha, L) = alpha * dG*/dL. Throws std::domain_error for alpha < 0.
  double price(double need_kwh, double alpha) const;
  ChargingProfile schedule(double need_kwh) const;

 private:
  std::vector<double> original_;
  std::vector<double> sorted_;
  std::vector<double> cumulative_;
  std::vector<double> breakpoints_;
  std::vector<double> tail_squares_;  // sum_{s>t} (l0_s)^2 for t = 1..T
  std::vector<std::size_t> order_;
};

struct HubChargingCase {
  NonflexProfile profile;
  double need_kwh = 0.0;
};

std::size_t active_slots(const HubChargingCase& hub);
ChargingProfile waterfill_profile(const HubChargingCase& hub);
double waterfill_value(const HubChargingCase& hub);
double lmp_price(const HubChargingCase& hub, double alpha);

}  // namespace tricharge
