#pragma once

#include "streamrl/arch.hpp"
#include "streamrl/checkpoint.hpp"
#include "streamrl/common.hpp"
#include "streamrl/net.hpp"
#include "streamrl/optim.hpp"
#include "streamrl/policy.hpp"
#include "streamrl/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace streamrl {

struct StreamingConfig {
  double gamma = 0.99;
  double lambda = 0.8;
  double critic_eta = 1.0;
  double kappa_critic = 2.0;
  // actor, Adam-based agents
  double actor_lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // actor, trace-based agent
  double actor_eta = 1.0;
  double kappa_actor = 3.0;
  double entropy_coeff = 0.01;
  bool entropy_in_trace = false;  // alternative composition of the entropy term
  // soft agent
  double alpha0 = 0.01;
  bool adaptive_alpha = true;  // alpha = alpha0 / sigma_r
  // deterministic agent
  double exploration_sigma = 0.2;
  double target_sigma = 0.2;
  // networks
  int hidden_width = 128;
  double sparsity = 0.9;
  bool ln_affine = false;
  // set by the batch-to-streaming handoff
  std::int64_t q_warmup_steps = 0;

  ObGDConfig critic_obgd() const { return {critic_eta, kappa_critic, lambda, gamma}; }
  ObGDConfig actor_obgd() const { return {actor_eta, kappa_actor, lambda, gamma}; }
};

struct StepInfo {
  double delta = 0.0;
  double eta_eff_critic = 0.0;
  double eta_eff_actor = 0.0;  // trace-based actor only
  double alpha = 0.0;          // effective entropy coefficient, soft agent
  bool actor_updated = false;
};

// Streaming Soft Actor-Critic: squashed-Gaussian actor trained with Adam via
// the reparameterized objective; soft Q critic trained with ObGD on
// eligibility traces, no target network.
class S2acAgent {
 public:
  S2acAgent(int state_dim, int action_dim, const StreamingConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        state_dim_(state_dim),
        action_dim_(action_dim),
        actor_(stochastic_policy_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine),
               action_dim),
        critic_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        trace_(critic_.param_count(), cfg.gamma, cfg.lambda),
        adam_(actor_.net.param_count(), cfg.actor_lr),
        q_warmup_left_(cfg.q_warmup_steps) {
    adam_.beta1 = cfg.adam_beta1;
    adam_.beta2 = cfg.adam_beta2;
    adam_.eps = cfg.adam_eps;
    sparse_init(actor_.net, cfg.sparsity, init_rng);
    sparse_init(critic_, cfg.sparsity, init_rng);
  }

  void episode_start() { trace_.reset(); }

  const Vec& act(const Vec& s, Rng& rng) {
    last_ = actor_.sample(s, rng);
    return last_->a;
  }

  // One inner-loop iteration. Both gradients are formed against pre-update
  // parameters; the critic step is applied first, then the actor step.
  StepInfo update(const Vec& s, const Vec& s_next, double r_scaled, bool terminal, double sigma_r,
                  Rng& rng) {
    require(last_.has_value(), "S2acAgent::update called without a preceding act()");
    const auto& behavior = *last_;
    StepInfo info;
    info.alpha = cfg_.adaptive_alpha ? cfg_.alpha0 / sigma_r : cfg_.alpha0;

    const auto next_sample = actor_.sample(s_next, rng);

    Vec xsa(state_dim_ + action_dim_);
    xsa << s, behavior.a;
    Tape q_tape;
    const double q_sa = critic_.forward(xsa, &q_tape)[0];
    Vec xnext(state_dim_ + action_dim_);
    xnext << s_next, next_sample.a;
    const double q_next = critic_.forward(xnext)[0];

    const double bootstrap = terminal ? 0.0 : cfg_.gamma * (q_next - info.alpha * next_sample.log_pi);
    info.delta = r_scaled + bootstrap - q_sa;

    Vec q_input_grad;
    const Vec q_grad = critic_.backward(q_tape, Vec::Ones(1), &q_input_grad);
    trace_.update(q_grad);

    // J_pi = alpha * log pi(a|s) - Q(s, a(theta)), pathwise through the
    // behavior sample's frozen noise, stop-gradient on the critic.
    const Vec dq_da = q_input_grad.tail(action_dim_);
    const Vec actor_grad = actor_.backward_pathwise(behavior, -dq_da, info.alpha);

    info.eta_eff_critic = obgd_step(critic_.params_mut(), trace_, info.delta, cfg_.critic_obgd());
    if (q_warmup_left_ > 0) {
      --q_warmup_left_;
    } else {
      adam_step(actor_.net.params_mut(), actor_grad, adam_);
      info.actor_updated = true;
    }
    last_.reset();
    return info;
  }

  Vec eval_action(const Vec& s) const { return actor_.mean_action(s); }

  const SquashedGaussianHead& actor() const { return actor_; }
  SquashedGaussianHead& actor_mut() { return actor_; }
  const DenseNet& critic() const { return critic_; }
  DenseNet& critic_mut() { return critic_; }
  const TraceState& trace() const { return trace_; }
  AdamState& adam() { return adam_; }
  std::int64_t q_warmup_left() const { return q_warmup_left_; }
  const StreamingConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, long>> footprint() const {
    return {{"actor_params", actor_.net.param_count()},
            {"critic_params", critic_.param_count()},
            {"critic_trace", static_cast<long>(trace_.z.size())},
            {"adam_m", static_cast<long>(adam_.m.size())},
            {"adam_v", static_cast<long>(adam_.v.size())}};
  }

  void save_to(Checkpoint& cp) const {
    cp.algo = "s2ac";
    cp.nets.emplace_back("actor", Checkpoint::NetBlob{actor_.net.layers(), actor_.net.params()});
    cp.nets.emplace_back("critic", Checkpoint::NetBlob{critic_.layers(), critic_.params()});
    cp.vectors.emplace_back("critic_trace", trace_.z);
    cp.vectors.emplace_back("adam_m", adam_.m);
    cp.vectors.emplace_back("adam_v", adam_.v);
    cp.scalars.emplace_back("adam_t", static_cast<double>(adam_.t));
    cp.scalars.emplace_back("q_warmup_left", static_cast<double>(q_warmup_left_));
  }

  void load_from(const Checkpoint& cp) {
    check_net_compatible("actor", actor_.net.layers(), cp.net("actor"));
    check_net_compatible("critic", critic_.layers(), cp.net("critic"));
    actor_.net.set_params(cp.net("actor").params);
    critic_.set_params(cp.net("critic").params);
    trace_.z = cp.vector("critic_trace");
    adam_.m = cp.vector("adam_m");
    adam_.v = cp.vector("adam_v");
    adam_.t = static_cast<std::int64_t>(cp.scalar("adam_t"));
    q_warmup_left_ = static_cast<std::int64_t>(cp.scalar("q_warmup_left"));
    last_.reset();
  }

 private:
  StreamingConfig cfg_;
  int state_dim_, action_dim_;
  SquashedGaussianHead actor_;
  DenseNet critic_;
  TraceState trace_;
  AdamState adam_;
  std::int64_t q_warmup_left_ = 0;
  std::optional<SquashedGaussianHead::Sample> last_;
};

// Streaming Deterministic Actor-Critic: tanh actor trained with Adam through
// the deterministic policy gradient; Q critic on ObGD traces with a
// noisy-target TD error, no target network.
class SdacAgent {
 public:
  SdacAgent(int state_dim, int action_dim, const StreamingConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        state_dim_(state_dim),
        action_dim_(action_dim),
        actor_(det_policy_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        critic_(q_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine)),
        trace_(critic_.param_count(), cfg.gamma, cfg.lambda),
        adam_(actor_.net.param_count(), cfg.actor_lr),
        q_warmup_left_(cfg.q_warmup_steps) {
    adam_.beta1 = cfg.adam_beta1;
    adam_.beta2 = cfg.adam_beta2;
    adam_.eps = cfg.adam_eps;
    sparse_init(actor_.net, cfg.sparsity, init_rng);
    sparse_init(critic_, cfg.sparsity, init_rng);
  }

  void episode_start() { trace_.reset(); }

  const Vec& act(const Vec& s, Rng& rng) {
    Ctx c;
    c.a_det = actor_.net.forward(s, &c.tape);
    c.a_exec = cfg_.exploration_sigma > 0.0
                   ? clip(Vec(c.a_det + cfg_.exploration_sigma * rng.normal_vec(action_dim_)), -1.0, 1.0)
                   : c.a_det;
    last_ = std::move(c);
    return last_->a_exec;
  }

  StepInfo update(const Vec& s, const Vec& s_next, double r_scaled, bool terminal, double /*sigma_r*/,
                  Rng& rng) {
    require(last_.has_value(), "SdacAgent::update called without a preceding act()");
    const auto& behavior = *last_;
    StepInfo info;

    // Noisy target action; not clipped.
    Vec a_next = actor_.net.forward(s_next);
    if (cfg_.target_sigma > 0.0) a_next += cfg_.target_sigma * rng.normal_vec(action_dim_);

    Vec xsa(state_dim_ + action_dim_);
    xsa << s, behavior.a_exec;
    Tape q_tape;
    const double q_sa = critic_.forward(xsa, &q_tape)[0];
    Vec xnext(state_dim_ + action_dim_);
    xnext << s_next, a_next;
    const double q_next = critic_.forward(xnext)[0];

    info.delta = r_scaled + (terminal ? 0.0 : cfg_.gamma * q_next) - q_sa;

    const Vec q_grad = critic_.backward(q_tape, Vec::Ones(1));
    trace_.update(q_grad);

    // DPG at the noiseless action: grad_theta J = -dQ/da|_{a=pi(s)} dpi/dtheta.
    Vec xdet(state_dim_ + action_dim_);
    xdet << s, behavior.a_det;
    Tape det_tape;
    critic_.forward(xdet, &det_tape);
    Vec q_input_grad;
    critic_.backward(det_tape, Vec::Ones(1), &q_input_grad);
    const Vec dq_da = q_input_grad.tail(action_dim_);
    const Vec actor_grad = actor_.net.backward(behavior.tape, -dq_da);

    info.eta_eff_critic = obgd_step(critic_.params_mut(), trace_, info.delta, cfg_.critic_obgd());
    if (q_warmup_left_ > 0) {
      --q_warmup_left_;
    } else {
      adam_step(actor_.net.params_mut(), actor_grad, adam_);
      info.actor_updated = true;
    }
    last_.reset();
    return info;
  }

  Vec eval_action(const Vec& s) const { return actor_.act(s); }

  const DeterministicHead& actor() const { return actor_; }
  DeterministicHead& actor_mut() { return actor_; }
  const DenseNet& critic() const { return critic_; }
  DenseNet& critic_mut() { return critic_; }
  const TraceState& trace() const { return trace_; }
  AdamState& adam() { return adam_; }
  std::int64_t q_warmup_left() const { return q_warmup_left_; }
  const StreamingConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, long>> footprint() const {
    return {{"actor_params", actor_.net.param_count()},
            {"critic_params", critic_.param_count()},
            {"critic_trace", static_cast<long>(trace_.z.size())},
            {"adam_m", static_cast<long>(adam_.m.size())},
            {"adam_v", static_cast<long>(adam_.v.size())}};
  }

  void save_to(Checkpoint& cp) const {
    cp.algo = "sdac";
    cp.nets.emplace_back("actor", Checkpoint::NetBlob{actor_.net.layers(), actor_.net.params()});
    cp.nets.emplace_back("critic", Checkpoint::NetBlob{critic_.layers(), critic_.params()});
    cp.vectors.emplace_back("critic_trace", trace_.z);
    cp.vectors.emplace_back("adam_m", adam_.m);
    cp.vectors.emplace_back("adam_v", adam_.v);
    cp.scalars.emplace_back("adam_t", static_cast<double>(adam_.t));
    cp.scalars.emplace_back("q_warmup_left", static_cast<double>(q_warmup_left_));
  }

  void load_from(const Checkpoint& cp) {
    check_net_compatible("actor", actor_.net.layers(), cp.net("actor"));
    check_net_compatible("critic", critic_.layers(), cp.net("critic"));
    actor_.net.set_params(cp.net("actor").params);
    critic_.set_params(cp.net("critic").params);
    trace_.z = cp.vector("critic_trace");
    adam_.m = cp.vector("adam_m");
    adam_.v = cp.vector("adam_v");
    adam_.t = static_cast<std::int64_t>(cp.scalar("adam_t"));
    q_warmup_left_ = static_cast<std::int64_t>(cp.scalar("q_warmup_left"));
    last_.reset();
  }

 private:
  struct Ctx {
    Vec a_det, a_exec;
    Tape tape;
  };

  StreamingConfig cfg_;
  int state_dim_, action_dim_;
  DeterministicHead actor_;
  DenseNet critic_;
  TraceState trace_;
  AdamState adam_;
  std::int64_t q_warmup_left_ = 0;
  std::optional<Ctx> last_;
};

// Stream AC(lambda): Gaussian policy and state-value critic, both trained
// with ObGD on eligibility traces; entropy-regularized actor.
class StreamAcAgent {
 public:
  StreamAcAgent(int state_dim, int action_dim, const StreamingConfig& cfg, Rng& init_rng)
      : cfg_(cfg),
        state_dim_(state_dim),
        action_dim_(action_dim),
        actor_(stochastic_policy_net(state_dim, action_dim, cfg.hidden_width, true, cfg.ln_affine),
               action_dim),
        critic_(value_net(state_dim, cfg.hidden_width, true, cfg.ln_affine)),
        critic_trace_(critic_.param_count(), cfg.gamma, cfg.lambda),
        actor_trace_(actor_.net.param_count(), cfg.gamma, cfg.lambda) {
    sparse_init(actor_.net, cfg.sparsity, init_rng);
    sparse_init(critic_, cfg.sparsity, init_rng);
  }

  void episode_start() {
    critic_trace_.reset();
    actor_trace_.reset();
  }

  const Vec& act(const Vec& s, Rng& rng) {
    last_ = actor_.sample(s, rng);
    return last_->a;
  }

  StepInfo update(const Vec& s, const Vec& s_next, double r_scaled, bool terminal, double /*sigma_r*/,
                  Rng& /*rng*/) {
    require(last_.has_value(), "StreamAcAgent::update called without a preceding act()");
    const auto& behavior = *last_;
    StepInfo info;

    Tape v_tape;
    const double v_s = critic_.forward(s, &v_tape)[0];
    const double v_next = critic_.forward(s_next)[0];  // stop-gradient
    info.delta = r_scaled + (terminal ? 0.0 : cfg_.gamma * v_next) - v_s;

    critic_trace_.update(critic_.backward(v_tape, Vec::Ones(1)));

    const Vec grad_logpi = actor_.grad_log_prob(behavior, behavior.a);
    const Vec grad_entropy = actor_.grad_entropy(behavior);

    info.eta_eff_critic = obgd_step(critic_.params_mut(), critic_trace_, info.delta, cfg_.critic_obgd());

    if (cfg_.entropy_in_trace) {
      const double sgn = info.delta > 0.0 ? 1.0 : (info.delta < 0.0 ? -1.0 : 0.0);
      actor_trace_.update(grad_logpi + sgn * cfg_.entropy_coeff * grad_entropy);
      info.eta_eff_actor =
          obgd_step(actor_.net.params_mut(), actor_trace_, info.delta, cfg_.actor_obgd());
    } else {
      actor_trace_.update(grad_logpi);
      const Vec direction = info.delta * actor_trace_.z + cfg_.entropy_coeff * grad_entropy;
      info.eta_eff_actor = obgd_step_direction(actor_.net.params_mut(), direction,
                                               actor_trace_.l1_norm(), info.delta, cfg_.actor_obgd());
    }
    info.actor_updated = true;
    last_.reset();
    return info;
  }

  Vec eval_action(const Vec& s) const { return clip(actor_.mean_action(s), -1.0, 1.0); }

  const GaussianHead& actor() const { return actor_; }
  const DenseNet& critic() const { return critic_; }
  const TraceState& critic_trace() const { return critic_trace_; }
  const TraceState& actor_trace() const { return actor_trace_; }
  const StreamingConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, long>> footprint() const {
    return {{"actor_params", actor_.net.param_count()},
            {"critic_params", critic_.param_count()},
            {"critic_trace", static_cast<long>(critic_trace_.z.size())},
            {"actor_trace", static_cast<long>(actor_trace_.z.size())}};
  }

  void save_to(Checkpoint& cp) const {
    cp.algo = "stream_ac";
    cp.nets.emplace_back("actor", Checkpoint::NetBlob{actor_.net.layers(), actor_.net.params()});
    cp.nets.emplace_back("critic", Checkpoint::NetBlob{critic_.layers(), critic_.params()});
    cp.vectors.emplace_back("critic_trace", critic_trace_.z);
    cp.vectors.emplace_back("actor_trace", actor_trace_.z);
  }

  void load_from(const Checkpoint& cp) {
    check_net_compatible("actor", actor_.net.layers(), cp.net("actor"));
    check_net_compatible("critic", critic_.layers(), cp.net("critic"));
    actor_.net.set_params(cp.net("actor").params);
    critic_.set_params(cp.net("critic").params);
    critic_trace_.z = cp.vector("critic_trace");
    actor_trace_.z = cp.vector("actor_trace");
    last_.reset();
  }

 private:
  StreamingConfig cfg_;
  int state_dim_, action_dim_;
  GaussianHead actor_;
  DenseNet critic_;
  TraceState critic_trace_;
  TraceState actor_trace_;
  std::optional<GaussianHead::Sample> last_;
};

}  // namespace streamrl
