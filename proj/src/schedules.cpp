#include "ruda/schedules.hpp"

#include "ruda/errors.hpp"

#include <cmath>
#include <string>

namespace ruda::nn {

namespace {
void require_progress(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ContractError(std::string(what) + ": progress " + std::to_string(p) +
                        " outside [0, 1]");
  }
}
}  // namespace

double lambda_schedule(double p, double gamma) {
  require_progress(p, "lambda_schedule");
  return 2.0 / (1.0 + std::exp(-gamma * p)) - 1.0;
}

double tau_schedule(double p, double tau_max, double tau_min, double alpha) {
  require_progress(p, "tau_schedule");
  if (!(tau_max >= tau_min && tau_min >= 1.0)) {
    throw ContractError("tau_schedule: need tau_max >= tau_min >= 1");
  }
  if (!(alpha > 0.0)) throw ContractError("tau_schedule: alpha must be positive");
  return tau_min + 2.0 * (tau_max - tau_min) / (1.0 + std::exp(alpha * p));
}

double lr_schedule(double p, double lr0, double decay, double power) {
  require_progress(p, "lr_schedule");
  return lr0 / std::pow(1.0 + decay * p, power);
}

double ScheduleSet::lambda(double p) const { return lambda_scale * lambda_schedule(p, lambda_gamma); }
double ScheduleSet::tau(double p) const { return tau_schedule(p, tau_max, tau_min, alpha); }
double ScheduleSet::lr(double p) const { return lr_schedule(p, lr0, lr_decay, lr_power); }

void ScheduleSet::validate() const {
  if (!(lambda_scale >= 0.0)) throw ContractError("lambda_scale must be >= 0");
  if (!(tau_max >= tau_min && tau_min >= 1.0)) {
    throw ContractError("schedule: need tau_max >= tau_min >= 1");
  }
  if (!(alpha > 0.0)) throw ContractError("schedule: alpha must be positive");
  if (!(lr0 > 0.0)) throw ContractError("schedule: lr0 must be positive");
}

}  // namespace ruda::nn
