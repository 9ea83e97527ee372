#pragma once

#include "streamrl/common.hpp"

#include <cmath>
#include <cstdint>

namespace streamrl {

// Welford running statistics over the observation stream. The counter is
// global across episodes: it advances once per processed sample and is never
// reset.
struct NormalizerState {
  Vec mu;       // running mean
  Vec p;        // running sum of squared deviations
  std::uint64_t t = 1;  // index the next sample will have
  double eps = 1e-8;

  NormalizerState() = default;
  explicit NormalizerState(int dim) : mu(Vec::Zero(dim)), p(Vec::Zero(dim)) {}

  int dim() const { return static_cast<int>(mu.size()); }
  std::uint64_t samples_seen() const { return t - 1; }

  // Statistics update first, then normalization with the fresh statistics.
  Vec normalize_update(const Vec& s) {
    require(s.size() == mu.size(), "NormalizerState: dimension mismatch");
    check_finite(s, "observation");
    const Vec d = s - mu;
    mu += d / static_cast<double>(t);
    p += d.cwiseProduct(s - mu);
    Vec var = t >= 2 ? Vec(p / static_cast<double>(t - 1)) : Vec(Vec::Ones(mu.size()));
    ++t;
    return (s - mu).cwiseQuotient((var.array() + eps).sqrt().matrix());
  }

  Vec normalize_readonly(const Vec& s) const {
    require(s.size() == mu.size(), "NormalizerState: dimension mismatch");
    check_finite(s, "observation");
    const std::uint64_t n = samples_seen();
    Vec var = n >= 2 ? Vec(p / static_cast<double>(n - 1)) : Vec(Vec::Ones(mu.size()));
    return (s - mu).cwiseQuotient((var.array() + eps).sqrt().matrix());
  }

  // Rows are observations.
  Mat normalize_readonly_batch(const Mat& S) const {
    require(S.cols() == mu.size(), "NormalizerState: dimension mismatch");
    const std::uint64_t n = samples_seen();
    Vec var = n >= 2 ? Vec(p / static_cast<double>(n - 1)) : Vec(Vec::Ones(mu.size()));
    Vec inv = (var.array() + eps).sqrt().inverse();
    return (S.rowwise() - mu.transpose()).array().rowwise() * inv.transpose().array();
  }
};

// Scales rewards by the running standard deviation of the discounted return
// accumulator u (reset through the terminal flag, not at time limits).
struct RewardScalerState {
  double u = 0.0;       // discounted return accumulator
  double mu_u = 0.0;    // running mean of u
  double p_r = 0.0;     // running sum of squared deviations of u
  std::uint64_t count = 0;
  double sigma_r = 1.0;
  double floor = 1e-8;

  // Returns the scaled reward; sigma_r is refreshed as a side effect.
  double scale_update(double r, bool terminal, double gamma) {
    check_finite(r, "reward");
    u = gamma * (terminal ? 0.0 : 1.0) * u + r;
    ++count;
    const double d = u - mu_u;
    mu_u += d / static_cast<double>(count);
    p_r += d * (u - mu_u);
    sigma_r = count < 2 ? 1.0 : std::max(std::sqrt(p_r / static_cast<double>(count - 1)), floor);
    return r / sigma_r;
  }

  double scale_readonly(double r) const { return r / sigma_r; }
};

}  // namespace streamrl
