#pragma once

#include "streamrl/common.hpp"

#include <cmath>
#include <cstdint>

namespace streamrl {

// Eligibility trace; reset to zero at every episode start.
struct TraceState {
  Vec z;
  double gamma = 0.99;
  double lambda = 0.8;

  TraceState() = default;
  TraceState(int n, double gamma_, double lambda_) : z(Vec::Zero(n)), gamma(gamma_), lambda(lambda_) {}

  void reset() { z.setZero(); }

  void update(const Vec& grad) {
    require(grad.size() == z.size(), "TraceState::update: length mismatch");
    z = gamma * lambda * z + grad;
  }

  double l1_norm() const { return z.lpNorm<1>(); }
};

struct ObGDConfig {
  double eta = 1.0;     // base step size
  double kappa = 2.0;   // overshoot scale
  double lambda = 0.8;
  double gamma = 0.99;
};

// Effective step size such that the predicted correction cannot overshoot:
// eta_eff * kappa * max(|delta|,1) * ||z||_1 <= 1.
inline double obgd_effective_step(double trace_l1, double delta, const ObGDConfig& cfg) {
  check_finite(delta, "TD error in ObGD step");
  const double delta_bar = std::max(std::abs(delta), 1.0);
  const double m = cfg.eta * cfg.kappa * delta_bar * trace_l1;
  return cfg.eta / std::max(m, 1.0);
}

// params += eta_eff * delta * z. Trace must already be updated for this step.
inline double obgd_step(Vec& params, const TraceState& trace, double delta, const ObGDConfig& cfg) {
  require(params.size() == trace.z.size(), "obgd_step: layout mismatch");
  const double eta_eff = obgd_effective_step(trace.l1_norm(), delta, cfg);
  params += (eta_eff * delta) * trace.z;
  return eta_eff;
}

// Variant for composite directions (trace-scaled term plus a regularizer);
// the bound is still computed from the trace and delta alone.
inline double obgd_step_direction(Vec& params, const Vec& direction, double trace_l1, double delta,
                                  const ObGDConfig& cfg) {
  require(params.size() == direction.size(), "obgd_step_direction: layout mismatch");
  check_finite(direction, "direction in ObGD step");
  const double eta_eff = obgd_effective_step(trace_l1, delta, cfg);
  params += eta_eff * direction;
  return eta_eff;
}

struct AdamState {
  Vec m, v;
  std::int64_t t = 0;
  double eta = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(int n, double eta_) : m(Vec::Zero(n)), v(Vec::Zero(n)), eta(eta_) {}
};

// Standard Adam with bias correction; descends on grad.
inline void adam_step(Vec& params, const Vec& grad, AdamState& s) {
  require(params.size() == s.m.size() && grad.size() == s.m.size(), "adam_step: layout mismatch");
  check_finite(grad, "gradient in Adam step");
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad).eval();
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params -= (s.eta / bc1) * s.m.cwiseQuotient(((s.v / bc2).cwiseSqrt().array() + s.eps).matrix());
}

struct SGDCConfig {
  double eta = 0.5;
  double h = 1.0;  // clipping threshold on the global L2 norm
};

// params -= eta * grad * min(1, h / ||grad||_2).
inline void sgdc_step(Vec& params, const Vec& grad, const SGDCConfig& cfg) {
  require(params.size() == grad.size(), "sgdc_step: layout mismatch");
  check_finite(grad, "gradient in SGDC step");
  const double norm = grad.norm();
  const double scale = norm > cfg.h ? cfg.h / norm : 1.0;
  params -= (cfg.eta * scale) * grad;
}

inline void polyak_update(Vec& target, const Vec& online, double tau) {
  require(target.size() == online.size(), "polyak_update: layout mismatch");
  target = (1.0 - tau) * target + tau * online;
}

}  // namespace streamrl
