#pragma once

namespace ruda::nn {

/// Training-progress-indexed hyperparameters; progress p runs over [0, 1].
struct ScheduleSet {
  double lambda_gamma = 10.0;  // steepness of the trade-off ramp
  double lambda_scale = 1.0;   // multiplies the ramp; 0 pins the trade-off to 0
  double tau_max = 5.0;
  double tau_min = 1.0;
  double alpha = 5.0;
  double lr0 = 0.01;
  double lr_decay = 10.0;
  double lr_power = 0.75;

  double lambda(double p) const;
  double tau(double p) const;
  double lr(double p) const;
  void validate() const;
};

/// 2 / (1 + exp(-gamma p)) - 1. Throws ContractError for p outside [0, 1].
double lambda_schedule(double p, double gamma = 10.0);

/// tau_min + 2 (tau_max - tau_min) / (1 + exp(alpha p)); equals tau_max at
/// p = 0 and decays toward tau_min. Throws ContractError for p outside [0, 1]
/// or unless tau_max >= tau_min >= 1 and alpha > 0.
double tau_schedule(double p, double tau_max = 5.0, double tau_min = 1.0, double alpha = 5.0);

/// lr0 / (1 + decay p)^power.
double lr_schedule(double p, double lr0, double decay = 10.0, double power = 0.75);

}  // namespace ruda::nn
