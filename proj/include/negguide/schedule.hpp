#pragma once

#include <string_view>
#include <vector>

#include "negguide/types.hpp"

namespace negguide {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

/// Discrete noise schedule over steps 1..T.
///
/// Stores beta_t and the cumulative product alpha_bar_t = prod_{s<=t}(1 - beta_s).
/// alpha_bar(0) is 1 so that the t = 1 step formulas need no special case.
/// Immutable after construction.
class VarianceSchedule {
 public:
  VarianceSchedule(std::vector<double> betas);

  int total_steps() const { return static_cast<int>(betas_.size()); }

  // 1-based accessors. Throw IndexError outside [1, T] ([0, T] for alpha_bar).
  double beta(int t) const;
  double alpha_bar(int t) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  bool operator==(const VarianceSchedule&) const = default;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// Linear: beta evenly spaced from beta_min to beta_max.
// Cosine: squared-cosine alpha_bar curve (offset 0.008), betas clipped below
// 0.999; the bounds are validated but do not shape the curve.
VarianceSchedule build_schedule(ScheduleKind kind, int total_steps,
                                double beta_min, double beta_max);

/// sqrt(alpha_bar_t) * z + sqrt(1 - alpha_bar_t) * eps.
Vec forward_diffuse(const Vec& z, int t, const Vec& eps,
                    const VarianceSchedule& sched);

}  // namespace negguide
