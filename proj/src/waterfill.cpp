#include "tricharge/waterfill.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

namespace tricharge {

NonflexProfile::NonflexProfile(std::vector<double> nonflex_kwh) : original_(std::move(nonflex_kwh)) {
  if (original_.empty()) throw std::invalid_argument("nonflexible profile needs at least one slot");
  for (double v : original_)
    if (!(v >= 0.0)) throw std::invalid_argument(fmt::format("negative nonflexible load {}", v));
  const std::size_t n = original_.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return original_[a] < original_[b]; });
  sorted_.resize(n);
  cumulative_.resize(n);
  breakpoints_.resize(n);
  tail_squares_.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sorted_[t] = original_[order_[t]];
    running += sorted_[t];
    cumulative_[t] = running;
    breakpoints_[t] = static_cast<double>(t + 1) * sorted_[t] - running;
  }
  breakpoints_[0] = 0.0;
  // monotone despite rounding
  for (std::size_t t = 1; t < n; ++t) breakpoints_[t] = std::max(breakpoints_[t], breakpoints_[t - 1]);
  for (std::size_t t = n - 1; t > 0; --t)
    tail_squares_[t - 1] = tail_squares_[t] + sorted_[t] * sorted_[t];
}

std::size_t NonflexProfile::active_slots(double need_kwh) const {
  if (!(need_kwh >= 0.0)) throw std::invalid_argument("charging need must be >= 0");
  // number of breakpoints strictly below the need
  const auto below = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), need_kwh) -
                     breakpoints_.begin();
  return std::max<std::size_t>(1, static_cast<std::size_t>(below));
}

double NonflexProfile::water_level(double need_kwh) const {
  const std::size_t t0 = active_slots(need_kwh);
  return (need_kwh + cumulative_[t0 - 1]) / static_cast<double>(t0);
}

double NonflexProfile::value(double need_kwh) const {
  const std::size_t t0 = active_slots(need_kwh);
  const double filled = need_kwh + cumulative_[t0 - 1];
  return filled * filled / static_cast<double>(t0) + tail_squares_[t0 - 1];
}

double NonflexProfile::price(double need_kwh, double alpha) const {
  if (alpha < 0.0) throw std::domain_error(fmt::format("price magnitude alpha = {} < 0", alpha));
  return alpha * marginal_value(need_kwh);
}

ChargingProfile NonflexProfile::schedule(double need_kwh) const {
  const std::size_t t0 = active_slots(need_kwh);
  const double level = (need_kwh + cumulative_[t0 - 1]) / static_cast<double>(t0);
  ChargingProfile out;
  out.charging_kwh.assign(slots(), 0.0);
  out.total_kwh = original_;
  if (need_kwh == 0.0) return out;
  for (std::size_t t = 0; t < t0; ++t) {
    const std::size_t slot = order_[t];
    out.charging_kwh[slot] = std::max(0.0, level - sorted_[t]);
    out.total_kwh[slot] = original_[slot] + out.charging_kwh[slot];
  }
  return out;
}

std::size_t active_slots(const HubChargingCase& hub) { return hub.profile.active_slots(hub.need_kwh); }
ChargingProfile waterfill_profile(const HubChargingCase& hub) { return hub.profile.schedule(hub.need_kwh); }
double waterfill_value(const HubChargingCase& hub) { return hub.profile.value(hub.need_kwh); }
double lmp_price(const HubChargingCase& hub, double alpha) { return hub.profile.price(hub.need_kwh, alpha); }

}  // namespace tricharge
