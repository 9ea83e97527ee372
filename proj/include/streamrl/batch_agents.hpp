#pragma once

#include "streamrl/arch.hpp"
#include "streamrl/checkpoint.hpp"
#include "streamrl/common.hpp"
#include "streamrl/normalize.hpp"
#include "streamrl/optim.hpp"
#include "streamrl/policy.hpp"
#include "streamrl/replay.hpp"
#include "streamrl/rng.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace streamrl {

struct BatchConfig {
  double gamma = 0.99;
  std::size_t buffer_capacity = 1000000;
  int batch_size = 256;
  std::int64_t exploration_steps = 5000;  // 25000 for the deterministic agent
  double polyak_tau = 0.005;
  int policy_frequency = 2;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool critic_sgdc = false;  // replace Adam with SGDC for the critics
  double sgdc_lr = 0.5;
  double sgdc_h = 1.0;
  // deterministic agent
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  double exploration_noise = 0.1;
  // soft agent
  bool autotune_alpha = true;
  double alpha_fixed = 0.2;
  // networks
  int hidden_width = 128;
  double sparsity = 0.9;
  bool ln_affine = false;

  SGDCConfig sgdc() const { return {sgdc_lr, sgdc_h}; }
};

struct BatchUpdateInfo {
  double critic_loss = 0.0;
  double alpha = 0.0;
  bool actor_updated = false;
};

// Soft actor-critic with live-stream data normalization: raw transitions in
// the buffer, batches preprocessed with current statistics at update time.
class SacNormAgent {
 public:
  SacNormAgent(int state_dim, int action_dim, const BatchConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        state_dim_(state_dim),
        action_dim_(action_dim),
        actor_(stochastic_policy_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine),
               action_dim),
        q1_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        q2_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        adam_actor_(actor_.net.param_count(), cfg.lr),
        adam_q1_(q1_.param_count(), cfg.lr),
        adam_q2_(q2_.param_count(), cfg.lr),
        adam_alpha_(1, cfg.lr),
        buffer_(cfg.buffer_capacity),
        target_entropy_(-static_cast<double>(action_dim)) {
    for (AdamState* a : {&adam_actor_, &adam_q1_, &adam_q2_, &adam_alpha_}) {
      a->beta1 = cfg.adam_beta1;
      a->beta2 = cfg.adam_beta2;
      a->eps = cfg.adam_eps;
    }
    sparse_init(actor_.net, cfg.sparsity, init_rng);
    sparse_init(q1_, cfg.sparsity, init_rng);
    sparse_init(q2_, cfg.sparsity, init_rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
  }

  double alpha() const { return cfg_.autotune_alpha ? std::exp(log_alpha_) : cfg_.alpha_fixed; }

  Vec act(const Vec& s_norm, std::int64_t global_step, Rng& rng) {
    if (global_step < cfg_.exploration_steps) return rng.uniform_vec(action_dim_, -1.0, 1.0);
    return actor_.sample(s_norm, rng).a;
  }

  void observe(RawTransition t) { buffer_.push(std::move(t)); }

  bool ready(std::int64_t global_step) const {
    return global_step > cfg_.exploration_steps &&
           buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size);
  }

  BatchUpdateInfo update(const NormalizerState& norm, double sigma_r, std::int64_t global_step,
                         Rng& buffer_rng, Rng& noise_rng) {
    require(ready(global_step), "sac update requested with insufficient data");
    BatchUpdateInfo info;
    const int B = cfg_.batch_size;
    auto batch = buffer_.sample(B, buffer_rng);
    const Mat S = norm.normalize_readonly_batch(batch.s);
    const Mat S2 = norm.normalize_readonly_batch(batch.s_next);
    const Vec R = batch.r / sigma_r;

    // targets from the current policy at s', twin target critics, entropy bonus
    const auto next = actor_.sample_batch(S2, noise_rng, false);
    Mat x2(B, state_dim_ + action_dim_);
    x2 << S2, next.a;
    const Vec q1n = q1_target_.forward_batch(x2).col(0);
    const Vec q2n = q2_target_.forward_batch(x2).col(0);
    const double a_coef = alpha();
    const Vec y =
        R.array() +
        cfg_.gamma * batch.not_terminal.array() *
            (q1n.cwiseMin(q2n).array() - a_coef * next.log_pi.array());

    Mat xs(B, state_dim_ + action_dim_);
    xs << S, batch.a;
    info.critic_loss = critic_step(q1_, adam_q1_, xs, y) + critic_step(q2_, adam_q2_, xs, y);

    if (global_step % cfg_.policy_frequency == 0) {
      // reparameterized actor objective on the minibatch
      const auto pi = actor_.sample_batch(S, noise_rng, true);
      Mat xp(B, state_dim_ + action_dim_);
      xp << S, pi.a;
      BatchTape t1, t2;
      const Vec q1p = q1_.forward_batch(xp, &t1).col(0);
      const Vec q2p = q2_.forward_batch(xp, &t2).col(0);
      // route dQmin/dA through the per-row argmin critic (ties to the first)
      Mat m1 = Mat::Zero(B, 1), m2 = Mat::Zero(B, 1);
      for (int r = 0; r < B; ++r) (q1p[r] <= q2p[r] ? m1 : m2)(r, 0) = -1.0 / B;
      const Mat ig = q1_.backward_batch_input(t1, m1) + q2_.backward_batch_input(t2, m2);
      const Mat dL_dA = ig.rightCols(action_dim_);
      const Vec dL_dlogpi = Vec::Constant(B, a_coef / B);
      const Vec actor_grad = actor_.backward_pathwise_batch(pi, dL_dA, dL_dlogpi);
      adam_step(actor_.net.params_mut(), actor_grad, adam_actor_);
      info.actor_updated = true;

      if (cfg_.autotune_alpha) {
        // fresh no-grad sample from the just-updated policy
        const auto probe = actor_.sample_batch(S, noise_rng, false);
        const double mean_term = probe.log_pi.mean() + target_entropy_;
        Vec la(1), g(1);
        la[0] = log_alpha_;
        g[0] = -std::exp(log_alpha_) * mean_term;
        adam_step(la, g, adam_alpha_);
        log_alpha_ = la[0];
      }
    }
    polyak_update(q1_target_.params_mut(), q1_.params(), cfg_.polyak_tau);
    polyak_update(q2_target_.params_mut(), q2_.params(), cfg_.polyak_tau);
    info.alpha = alpha();
    return info;
  }

  Vec eval_action(const Vec& s_norm) const { return actor_.mean_action(s_norm); }

  const SquashedGaussianHead& actor() const { return actor_; }
  const DenseNet& q1() const { return q1_; }
  const DenseNet& q2() const { return q2_; }
  const DenseNet& q1_target() const { return q1_target_; }
  const DenseNet& q2_target() const { return q2_target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const BatchConfig& config() const { return cfg_; }
  double log_alpha() const { return log_alpha_; }

  void save_to(Checkpoint& cp) const {
    cp.algo = "sac_norm";
    cp.nets.emplace_back("actor", Checkpoint::NetBlob{actor_.net.layers(), actor_.net.params()});
    cp.nets.emplace_back("q1", Checkpoint::NetBlob{q1_.layers(), q1_.params()});
    cp.nets.emplace_back("q2", Checkpoint::NetBlob{q2_.layers(), q2_.params()});
    cp.nets.emplace_back("q1_target", Checkpoint::NetBlob{q1_target_.layers(), q1_target_.params()});
    cp.nets.emplace_back("q2_target", Checkpoint::NetBlob{q2_target_.layers(), q2_target_.params()});
    save_adam(cp, "adam_actor", adam_actor_);
    save_adam(cp, "adam_q1", adam_q1_);
    save_adam(cp, "adam_q2", adam_q2_);
    save_adam(cp, "adam_alpha", adam_alpha_);
    cp.scalars.emplace_back("log_alpha", log_alpha_);
    cp.buffer = buffer_;
  }

  void load_from(const Checkpoint& cp) {
    check_net_compatible("actor", actor_.net.layers(), cp.net("actor"));
    for (const auto* name : {"q1", "q2", "q1_target", "q2_target"})
      check_net_compatible(name, q1_.layers(), cp.net(name));
    actor_.net.set_params(cp.net("actor").params);
    q1_.set_params(cp.net("q1").params);
    q2_.set_params(cp.net("q2").params);
    q1_target_.set_params(cp.net("q1_target").params);
    q2_target_.set_params(cp.net("q2_target").params);
    load_adam(cp, "adam_actor", adam_actor_);
    load_adam(cp, "adam_q1", adam_q1_);
    load_adam(cp, "adam_q2", adam_q2_);
    load_adam(cp, "adam_alpha", adam_alpha_);
    log_alpha_ = cp.scalar("log_alpha");
    require(cp.buffer.has_value(), "sac checkpoint is missing the replay buffer");
    buffer_ = *cp.buffer;
  }

 private:
  double critic_step(DenseNet& q, AdamState& adam, const Mat& xs, const Vec& y) {
    const int B = static_cast<int>(xs.rows());
    BatchTape tape;
    const Vec qv = q.forward_batch(xs, &tape).col(0);
    const Vec err = qv - y;
    const Mat out_grad = (2.0 / B) * err;
    const Vec grad = q.backward_batch(tape, out_grad);
    if (cfg_.critic_sgdc)
      sgdc_step(q.params_mut(), grad, cfg_.sgdc());
    else
      adam_step(q.params_mut(), grad, adam);
    return err.squaredNorm() / B;
  }

  static void save_adam(Checkpoint& cp, const std::string& name, const AdamState& a) {
    cp.vectors.emplace_back(name + "_m", a.m);
    cp.vectors.emplace_back(name + "_v", a.v);
    cp.scalars.emplace_back(name + "_t", static_cast<double>(a.t));
  }

  static void load_adam(const Checkpoint& cp, const std::string& name, AdamState& a) {
    a.m = cp.vector(name + "_m");
    a.v = cp.vector(name + "_v");
    a.t = static_cast<std::int64_t>(cp.scalar(name + "_t"));
  }

  BatchConfig cfg_;
  int state_dim_, action_dim_;
  SquashedGaussianHead actor_;
  DenseNet q1_, q2_, q1_target_, q2_target_;
  AdamState adam_actor_, adam_q1_, adam_q2_, adam_alpha_;
  double log_alpha_ = 0.0;
  ReplayBuffer buffer_;
  double target_entropy_;

  friend class Td3NormAgent;
};

// Twin delayed deterministic actor-critic with live-stream normalization.
class Td3NormAgent {
 public:
  Td3NormAgent(int state_dim, int action_dim, const BatchConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        state_dim_(state_dim),
        action_dim_(action_dim),
        actor_(det_policy_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        q1_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        q2_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        adam_actor_(actor_.net.param_count(), cfg.lr),
        adam_q1_(q1_.param_count(), cfg.lr),
        adam_q2_(q2_.param_count(), cfg.lr),
        buffer_(cfg.buffer_capacity) {
    for (AdamState* a : {&adam_actor_, &adam_q1_, &adam_q2_}) {
      a->beta1 = cfg.adam_beta1;
      a->beta2 = cfg.adam_beta2;
      a->eps = cfg.adam_eps;
    }
    sparse_init(actor_.net, cfg.sparsity, init_rng);
    sparse_init(q1_, cfg.sparsity, init_rng);
    sparse_init(q2_, cfg.sparsity, init_rng);
    actor_target_ = actor_.net;
    q1_target_ = q1_;
    q2_target_ = q2_;
  }

  Vec act(const Vec& s_norm, std::int64_t global_step, Rng& rng) {
    if (global_step < cfg_.exploration_steps) return rng.uniform_vec(action_dim_, -1.0, 1.0);
    return actor_.act_noisy(s_norm, cfg_.exploration_noise, rng);
  }

  void observe(RawTransition t) { buffer_.push(std::move(t)); }

  bool ready(std::int64_t global_step) const {
    return global_step > cfg_.exploration_steps &&
           buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size);
  }

  BatchUpdateInfo update(const NormalizerState& norm, double sigma_r, std::int64_t global_step,
                         Rng& buffer_rng, Rng& noise_rng) {
    require(ready(global_step), "td3 update requested with insufficient data");
    BatchUpdateInfo info;
    const int B = cfg_.batch_size;
    auto batch = buffer_.sample(B, buffer_rng);
    const Mat S = norm.normalize_readonly_batch(batch.s);
    const Mat S2 = norm.normalize_readonly_batch(batch.s_next);
    const Vec R = batch.r / sigma_r;

    // clipped-double-Q target with clipped smoothing noise on the target policy
    Mat noise(B, action_dim_);
    for (int r = 0; r < B; ++r)
      for (int c = 0; c < action_dim_; ++c)
        noise(r, c) = clip(noise_rng.normal() * cfg_.target_noise, -cfg_.target_noise_clip,
                           cfg_.target_noise_clip);
    Mat a2 = actor_target_.forward_batch(S2) + noise;
    a2 = a2.cwiseMax(-1.0).cwiseMin(1.0);
    Mat x2(B, state_dim_ + action_dim_);
    x2 << S2, a2;
    const Vec q1n = q1_target_.forward_batch(x2).col(0);
    const Vec q2n = q2_target_.forward_batch(x2).col(0);
    const Vec y = R.array() + cfg_.gamma * batch.not_terminal.array() * q1n.cwiseMin(q2n).array();

    Mat xs(B, state_dim_ + action_dim_);
    xs << S, batch.a;
    info.critic_loss = critic_step(q1_, adam_q1_, xs, y) + critic_step(q2_, adam_q2_, xs, y);

    if (global_step % cfg_.policy_frequency == 0) {
      BatchTape at;
      const Mat ap = actor_.net.forward_batch(S, &at);
      Mat xp(B, state_dim_ + action_dim_);
      xp << S, ap;
      BatchTape qt;
      q1_.forward_batch(xp, &qt);
      const Mat ig = q1_.backward_batch_input(qt, Mat::Constant(B, 1, -1.0 / B));
      const Vec actor_grad = actor_.net.backward_batch(at, ig.rightCols(action_dim_));
      adam_step(actor_.net.params_mut(), actor_grad, adam_actor_);
      info.actor_updated = true;

      polyak_update(actor_target_.params_mut(), actor_.net.params(), cfg_.polyak_tau);
      polyak_update(q1_target_.params_mut(), q1_.params(), cfg_.polyak_tau);
      polyak_update(q2_target_.params_mut(), q2_.params(), cfg_.polyak_tau);
    }
    return info;
  }

  Vec eval_action(const Vec& s_norm) const { return actor_.act(s_norm); }

  const DeterministicHead& actor() const { return actor_; }
  const DenseNet& q1() const { return q1_; }
  const DenseNet& q2() const { return q2_; }
  const DenseNet& q1_target() const { return q1_target_; }
  const DenseNet& q2_target() const { return q2_target_; }
  const DenseNet& actor_target() const { return actor_target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const BatchConfig& config() const { return cfg_; }

  void save_to(Checkpoint& cp) const {
    cp.algo = "td3_norm";
    cp.nets.emplace_back("actor", Checkpoint::NetBlob{actor_.net.layers(), actor_.net.params()});
    cp.nets.emplace_back("actor_target",
                         Checkpoint::NetBlob{actor_target_.layers(), actor_target_.params()});
    cp.nets.emplace_back("q1", Checkpoint::NetBlob{q1_.layers(), q1_.params()});
    cp.nets.emplace_back("q2", Checkpoint::NetBlob{q2_.layers(), q2_.params()});
    cp.nets.emplace_back("q1_target", Checkpoint::NetBlob{q1_target_.layers(), q1_target_.params()});
    cp.nets.emplace_back("q2_target", Checkpoint::NetBlob{q2_target_.layers(), q2_target_.params()});
    save_adam(cp, "adam_actor", adam_actor_);
    save_adam(cp, "adam_q1", adam_q1_);
    save_adam(cp, "adam_q2", adam_q2_);
    cp.buffer = buffer_;
  }

  void load_from(const Checkpoint& cp) {
    check_net_compatible("actor", actor_.net.layers(), cp.net("actor"));
    check_net_compatible("q1", q1_.layers(), cp.net("q1"));
    actor_.net.set_params(cp.net("actor").params);
    actor_target_.set_params(cp.net("actor_target").params);
    q1_.set_params(cp.net("q1").params);
    q2_.set_params(cp.net("q2").params);
    q1_target_.set_params(cp.net("q1_target").params);
    q2_target_.set_params(cp.net("q2_target").params);
    load_adam(cp, "adam_actor", adam_actor_);
    load_adam(cp, "adam_q1", adam_q1_);
    load_adam(cp, "adam_q2", adam_q2_);
    require(cp.buffer.has_value(), "td3 checkpoint is missing the replay buffer");
    buffer_ = *cp.buffer;
  }

 private:
  double critic_step(DenseNet& q, AdamState& adam, const Mat& xs, const Vec& y) {
    const int B = static_cast<int>(xs.rows());
    BatchTape tape;
    const Vec qv = q.forward_batch(xs, &tape).col(0);
    const Vec err = qv - y;
    const Mat out_grad = (2.0 / B) * err;
    const Vec grad = q.backward_batch(tape, out_grad);
    if (cfg_.critic_sgdc)
      sgdc_step(q.params_mut(), grad, cfg_.sgdc());
    else
      adam_step(q.params_mut(), grad, adam);
    return err.squaredNorm() / B;
  }

  static void save_adam(Checkpoint& cp, const std::string& name, const AdamState& a) {
    cp.vectors.emplace_back(name + "_m", a.m);
    cp.vectors.emplace_back(name + "_v", a.v);
    cp.scalars.emplace_back(name + "_t", static_cast<double>(a.t));
  }

  static void load_adam(const Checkpoint& cp, const std::string& name, AdamState& a) {
    a.m = cp.vector(name + "_m");
    a.v = cp.vector(name + "_v");
    a.t = static_cast<std::int64_t>(cp.scalar(name + "_t"));
  }

  BatchConfig cfg_;
  int state_dim_, action_dim_;
  DeterministicHead actor_;
  DenseNet q1_, q2_, q1_target_, q2_target_;
  DenseNet actor_target_;
  AdamState adam_actor_, adam_q1_, adam_q2_;
  ReplayBuffer buffer_;
};

}  // namespace streamrl
