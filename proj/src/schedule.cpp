#include "negguide/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "negguide/errors.hpp"

namespace negguide {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ParameterError("unknown schedule kind '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

VarianceSchedule::VarianceSchedule(std::vector<double> betas)
    : betas_(std::move(betas)) {
  if (betas_.empty()) throw ParameterError("schedule needs at least one step");
  alpha_bars_.reserve(betas_.size());
  double prod = 1.0;
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) {
      throw ParameterError("beta values must lie in (0, 1)");
    }
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
}

double VarianceSchedule::beta(int t) const {
  if (t < 1 || t > total_steps()) {
    throw IndexError("step " + std::to_string(t) + " outside [1, " +
                     std::to_string(total_steps()) + "]");
  }
  return betas_[t - 1];
}

double VarianceSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > total_steps()) {
    throw IndexError("step " + std::to_string(t) + " outside [0, " +
                     std::to_string(total_steps()) + "]");
  }
  return alpha_bars_[t - 1];
}

VarianceSchedule build_schedule(ScheduleKind kind, int total_steps,
                                double beta_min, double beta_max) {
  if (total_steps < 1) throw ParameterError("T must be at least 1");
  if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max) {
    throw ParameterError("need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(total_steps);
  if (kind == ScheduleKind::kLinear) {
    if (total_steps == 1) {
      betas[0] = beta_min;
    } else {
      const double span = beta_max - beta_min;
      for (int i = 0; i < total_steps; ++i) {
        betas[i] = beta_min + span * i / (total_steps - 1);
      }
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / total_steps + kOffset) / (1.0 + kOffset) *
                                std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int i = 0; i < total_steps; ++i) {
      const double cur = f(i + 1.0) / f0;
      betas[i] = std::min(1.0 - cur / prev, 0.999);
      prev = cur;
    }
  }
  return VarianceSchedule(std::move(betas));
}

Vec forward_diffuse(const Vec& z, int t, const Vec& eps,
                    const VarianceSchedule& sched) {
  if (z.size() != eps.size()) throw ShapeError("forward_diffuse: z and eps differ in size");
  if (t < 1 || t > sched.total_steps()) {
    throw IndexError("forward_diffuse: step " + std::to_string(t) + " out of range");
  }
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * z + std::sqrt(1.0 - ab) * eps;
}

}  // namespace negguide
