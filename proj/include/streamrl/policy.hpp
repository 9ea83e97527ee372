#pragma once

#include "streamrl/common.hpp"
#include "streamrl/net.hpp"
#include "streamrl/rng.hpp"

#include <cmath>

namespace streamrl {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// log(1 + e^x), exact for |x| up to ~30 and beyond.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// tanh-corrected log-density term for one dimension: log(1 - tanh(u)^2)
// written in the numerically exact form 2(log 2 - u - softplus(-2u)).
inline double tanh_log_jacobian(double u) { return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u)); }

// Stochastic policy: tanh-squashed Gaussian. The trunk net emits
// [mu; raw_log_std]; the effective log-std is squashed into
// [log_std_min, log_std_max].
struct SquashedGaussianHead {
  DenseNet net;  // out_dim == 2 * action_dim
  int action_dim = 0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  SquashedGaussianHead() = default;
  SquashedGaussianHead(DenseNet n, int adim) : net(std::move(n)), action_dim(adim) {
    require(net.out_dim() == 2 * adim, "SquashedGaussianHead: trunk must emit 2*action_dim values");
  }

  struct Sample {
    Vec a;        // tanh(u), in (-1,1)^D
    Vec u;        // pre-squash sample
    Vec eps;      // exogenous noise
    Vec mu, raw, log_std, sigma;
    double log_pi = 0.0;
    Tape tape;    // trunk activation record
  };

  double effective_log_std(double raw) const {
    return log_std_min + 0.5 * (log_std_max - log_std_min) * (std::tanh(raw) + 1.0);
  }

  Sample sample_with_eps(const Vec& s, const Vec& eps) const {
    require(eps.size() == action_dim, "sample_with_eps: eps dimension mismatch");
    Sample out;
    out.eps = eps;
    const Vec h = net.forward(s, &out.tape);
    out.mu = h.head(action_dim);
    out.raw = h.tail(action_dim);
    out.log_std.resize(action_dim);
    out.sigma.resize(action_dim);
    out.u.resize(action_dim);
    out.a.resize(action_dim);
    out.log_pi = 0.0;
    for (int i = 0; i < action_dim; ++i) {
      out.log_std[i] = effective_log_std(out.raw[i]);
      out.sigma[i] = std::exp(out.log_std[i]);
      out.u[i] = out.mu[i] + out.sigma[i] * eps[i];
      out.a[i] = std::tanh(out.u[i]);
      out.log_pi += -out.log_std[i] - 0.5 * kLogTwoPi - 0.5 * eps[i] * eps[i] - tanh_log_jacobian(out.u[i]);
    }
    return out;
  }

  Sample sample(const Vec& s, Rng& rng) const { return sample_with_eps(s, rng.normal_vec(action_dim)); }

  Vec mean_action(const Vec& s) const {
    const Vec h = net.forward(s);
    return h.head(action_dim).array().tanh();
  }

  // Exact log-density of a = tanh(u) under the current policy.
  double log_prob(const Vec& s, const Vec& u) const {
    require(u.size() == action_dim, "log_prob: dimension mismatch");
    check_finite(u, "pre-squash action");
    const Vec h = net.forward(s);
    double lp = 0.0;
    for (int i = 0; i < action_dim; ++i) {
      const double ls = effective_log_std(h[action_dim + i]);
      const double sd = std::exp(ls);
      const double z = (u[i] - h[i]) / sd;
      lp += -ls - 0.5 * kLogTwoPi - 0.5 * z * z - tanh_log_jacobian(u[i]);
    }
    return lp;
  }

  // Pathwise gradient of L = dL_dlogpi * log_pi(a|s) + dL_da . a with
  // a = tanh(mu + sigma*eps) and eps frozen. Returns d L / d theta.
  Vec backward_pathwise(const Sample& sp, const Vec& dL_da, double dL_dlogpi) const {
    require(dL_da.size() == action_dim, "backward_pathwise: dL_da dimension mismatch");
    Vec out_grad(2 * action_dim);
    const double half_range = 0.5 * (log_std_max - log_std_min);
    for (int i = 0; i < action_dim; ++i) {
      const double a = sp.a[i];
      const double one_m_a2 = 1.0 - a * a;
      // d log_pi / d mu collapses to 2a: the Gaussian term is constant in mu
      // for frozen eps, only the tanh correction moves.
      const double dmu = dL_dlogpi * (2.0 * a) + dL_da[i] * one_m_a2;
      const double dsigma =
          dL_dlogpi * (2.0 * a * sp.eps[i] - 1.0 / sp.sigma[i]) + dL_da[i] * one_m_a2 * sp.eps[i];
      const double th = std::tanh(sp.raw[i]);
      out_grad[i] = dmu;
      out_grad[action_dim + i] = dsigma * sp.sigma[i] * half_range * (1.0 - th * th);
    }
    return net.backward(sp.tape, out_grad);
  }

  // --- batch variants (used by the batch soft actor-critic) ---

  struct BatchSample {
    Mat a, u, eps, mu, raw, sigma;
    Vec log_pi;
    BatchTape tape;
  };

  // Noise drawn row-major: for each sample, each action dimension.
  BatchSample sample_batch(const Mat& S, Rng& rng, bool with_tape) const {
    BatchSample out;
    const auto B = S.rows();
    Mat eps(B, action_dim);
    for (Eigen::Index r = 0; r < B; ++r)
      for (int c = 0; c < action_dim; ++c) eps(r, c) = rng.normal();
    const Mat H = net.forward_batch(S, with_tape ? &out.tape : nullptr);
    out.eps = std::move(eps);
    out.mu = H.leftCols(action_dim);
    out.raw = H.rightCols(action_dim);
    Mat log_std = (log_std_min + 0.5 * (log_std_max - log_std_min) * (out.raw.array().tanh() + 1.0)).matrix();
    out.sigma = log_std.array().exp();
    out.u = out.mu + out.sigma.cwiseProduct(out.eps);
    out.a = out.u.array().tanh();
    out.log_pi = Vec::Zero(B);
    for (Eigen::Index r = 0; r < B; ++r)
      for (int c = 0; c < action_dim; ++c)
        out.log_pi[r] += -log_std(r, c) - 0.5 * kLogTwoPi - 0.5 * out.eps(r, c) * out.eps(r, c) -
                         tanh_log_jacobian(out.u(r, c));
    return out;
  }

  Mat mean_action_batch(const Mat& S) const {
    const Mat H = net.forward_batch(S);
    return H.leftCols(action_dim).array().tanh();
  }

  Vec backward_pathwise_batch(const BatchSample& sp, const Mat& dL_dA, const Vec& dL_dlogpi) const {
    const auto B = sp.a.rows();
    Mat out_grad(B, 2 * action_dim);
    const double half_range = 0.5 * (log_std_max - log_std_min);
    for (Eigen::Index r = 0; r < B; ++r) {
      for (int c = 0; c < action_dim; ++c) {
        const double a = sp.a(r, c);
        const double one_m_a2 = 1.0 - a * a;
        const double dmu = dL_dlogpi[r] * (2.0 * a) + dL_dA(r, c) * one_m_a2;
        const double dsigma = dL_dlogpi[r] * (2.0 * a * sp.eps(r, c) - 1.0 / sp.sigma(r, c)) +
                              dL_dA(r, c) * one_m_a2 * sp.eps(r, c);
        const double th = std::tanh(sp.raw(r, c));
        out_grad(r, c) = dmu;
        out_grad(r, action_dim + c) = dsigma * sp.sigma(r, c) * half_range * (1.0 - th * th);
      }
    }
    return net.backward_batch(sp.tape, out_grad);
  }
};

// Unsquashed Gaussian policy with softplus std; the streaming actor-critic
// head. Actions are clipped to the box only when handed to the environment.
struct GaussianHead {
  DenseNet net;  // out_dim == 2 * action_dim: [mu; pre_std]
  int action_dim = 0;

  GaussianHead() = default;
  GaussianHead(DenseNet n, int adim) : net(std::move(n)), action_dim(adim) {
    require(net.out_dim() == 2 * adim, "GaussianHead: trunk must emit 2*action_dim values");
  }

  struct Sample {
    Vec a, mu, pre, sigma;
    Tape tape;
  };

  Sample sample(const Vec& s, Rng& rng) const {
    Sample out;
    const Vec h = net.forward(s, &out.tape);
    out.mu = h.head(action_dim);
    out.pre = h.tail(action_dim);
    out.sigma.resize(action_dim);
    out.a.resize(action_dim);
    for (int i = 0; i < action_dim; ++i) {
      out.sigma[i] = softplus(out.pre[i]);
      out.a[i] = out.mu[i] + out.sigma[i] * rng.normal();
    }
    return out;
  }

  Vec mean_action(const Vec& s) const { return net.forward(s).head(action_dim); }

  double log_prob_values(const Sample& sp, const Vec& a) const {
    double lp = 0.0;
    for (int i = 0; i < action_dim; ++i) {
      const double z = (a[i] - sp.mu[i]) / sp.sigma[i];
      lp += -std::log(sp.sigma[i]) - 0.5 * kLogTwoPi - 0.5 * z * z;
    }
    return lp;
  }

  // Likelihood-ratio gradient of log pi(a|s) at a fixed action.
  Vec grad_log_prob(const Sample& sp, const Vec& a) const {
    require(a.size() == action_dim, "grad_log_prob: dimension mismatch");
    Vec out_grad(2 * action_dim);
    for (int i = 0; i < action_dim; ++i) {
      const double d = a[i] - sp.mu[i];
      const double s2 = sp.sigma[i] * sp.sigma[i];
      out_grad[i] = d / s2;
      out_grad[action_dim + i] = ((d * d - s2) / (s2 * sp.sigma[i])) * sigmoid(sp.pre[i]);
    }
    return net.backward(sp.tape, out_grad);
  }

  double entropy(const Sample& sp) const {
    double h = 0.0;
    for (int i = 0; i < action_dim; ++i) h += 0.5 * (kLogTwoPi + 1.0) + std::log(sp.sigma[i]);
    return h;
  }

  Vec grad_entropy(const Sample& sp) const {
    Vec out_grad = Vec::Zero(2 * action_dim);
    for (int i = 0; i < action_dim; ++i)
      out_grad[action_dim + i] = sigmoid(sp.pre[i]) / sp.sigma[i];
    return net.backward(sp.tape, out_grad);
  }
};

// Deterministic tanh policy (the trunk's final layer carries the tanh);
// exploration adds Gaussian noise, clipped back into the action box.
struct DeterministicHead {
  DenseNet net;

  DeterministicHead() = default;
  explicit DeterministicHead(DenseNet n) : net(std::move(n)) {}

  int action_dim() const { return net.out_dim(); }

  Vec act(const Vec& s, Tape* tape = nullptr) const { return net.forward(s, tape); }

  Vec act_noisy(const Vec& s, double sigma, Rng& rng) const {
    Vec a = act(s);
    if (sigma > 0.0) a += sigma * rng.normal_vec(action_dim());
    return clip(a, -1.0, 1.0);
  }
};

}  // namespace streamrl
