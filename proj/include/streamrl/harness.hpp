#pragma once

#include "streamrl/batch_agents.hpp"
#include "streamrl/checkpoint.hpp"
#include "streamrl/config.hpp"
#include "streamrl/env.hpp"
#include "streamrl/handoff.hpp"
#include "streamrl/metrics.hpp"
#include "streamrl/streaming_agents.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <thread>
#include <type_traits>
#include <variant>

namespace streamrl {

using AgentVariant = std::variant<StreamAcAgent, S2acAgent, SdacAgent, SacNormAgent, Td3NormAgent>;

template <class A>
constexpr bool is_batch_agent_v = std::is_same_v<A, SacNormAgent> || std::is_same_v<A, Td3NormAgent>;

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
};

// Deterministic policy, read-only normalization, raw undiscounted returns.
template <class A>
EvalResult evaluate_agent(const A& agent, const EnvSpec& spec, int episodes, std::uint64_t seed,
                          const NormalizerState& norm) {
  auto env = make_env(spec);
  Rng rng(seed);
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    Vec raw = env->reset(rng);
    double total = 0.0;
    while (true) {
      const Vec a = agent.eval_action(norm.normalize_readonly(raw));
      const StepResult sr = env->step(clip(a, -1.0, 1.0));
      total += sr.r;
      raw = sr.s_next;
      if (sr.terminated || sr.truncated) break;
    }
    returns.push_back(total);
  }
  EvalResult out;
  for (double r : returns) out.mean += r;
  out.mean /= returns.size();
  if (returns.size() > 1) {
    double ss = 0.0;
    for (double r : returns) ss += (r - out.mean) * (r - out.mean);
    out.stddev = std::sqrt(ss / (returns.size() - 1));
  }
  return out;
}

inline EvalResult evaluate_agent(const AgentVariant& agent, const EnvSpec& spec, int episodes,
                                 std::uint64_t seed, const NormalizerState& norm) {
  return std::visit([&](const auto& a) { return evaluate_agent(a, spec, episodes, seed, norm); }, agent);
}

// Reconstructs an agent purely from a checkpoint (shape and algo come from
// the stored blobs); hyperparameters default, which is enough for acting.
inline AgentVariant agent_from_checkpoint(const Checkpoint& cp) {
  const auto& actor = cp.net("actor");
  const int state_dim = actor.layers.front().in_dim;
  const int width = actor.layers.front().out_dim;
  const bool affine = actor.layers.front().ln_affine;
  Rng scratch(0);
  AgentVariant agent = [&]() -> AgentVariant {
    StreamingConfig sc;
    sc.hidden_width = width;
    sc.ln_affine = affine;
    BatchConfig bc;
    bc.hidden_width = width;
    bc.ln_affine = affine;
    const int out = actor.layers.back().out_dim;
    if (cp.algo == "stream_ac") return StreamAcAgent(state_dim, out / 2, sc, scratch);
    if (cp.algo == "s2ac") return S2acAgent(state_dim, out / 2, sc, scratch);
    if (cp.algo == "sdac") return SdacAgent(state_dim, out, sc, scratch);
    if (cp.algo == "sac_norm") return SacNormAgent(state_dim, out / 2, bc, scratch);
    if (cp.algo == "td3_norm") return Td3NormAgent(state_dim, out, bc, scratch);
    throw CheckpointError("checkpoint carries unknown algo '" + cp.algo + "'");
  }();
  std::visit([&](auto& a) { a.load_from(cp); }, agent);
  return agent;
}

// One training run: owns the environment, the agent, the normalization
// state, the RNG streams and the metrics files.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg, bool with_metrics = true)
      : cfg_(std::move(cfg)), spec_(cfg_.env_spec()), env_(make_env(spec_)) {
    if (with_metrics) metrics_ = MetricsWriter(cfg_.out_dir);
    env_rng_ = Rng(stream_seed(cfg_.seed, "env"));
    policy_rng_ = Rng(stream_seed(cfg_.seed, "policy"));
    buffer_rng_ = Rng(stream_seed(cfg_.seed, "buffer"));
    Rng init_rng(stream_seed(cfg_.seed, "init"));

    if (!cfg_.resume_from.empty() && !cfg_.resume_as.empty()) {
      // batch-to-streaming handoff
      const Checkpoint cp = load_checkpoint(cfg_.resume_from);
      const Algo target = algo_from_name(cfg_.resume_as);
      cfg_.algo = target;
      if (target == Algo::sdac)
        agent_.emplace(handoff_to_sdac(cp, cfg_.streaming));
      else if (target == Algo::s2ac)
        agent_.emplace(handoff_to_s2ac(cp, cfg_.streaming));
      else
        throw ConfigError("resume_as must be sdac or s2ac");
      norm_ = cp.normalizer;       // carried verbatim
      rsc_ = cp.reward_scaler;
      global_step_ = 0;            // finetuning starts its own clock
    } else if (!cfg_.resume_from.empty()) {
      const Checkpoint cp = load_checkpoint(cfg_.resume_from);
      if (cp.algo != algo_name(cfg_.algo))
        throw CheckpointError("checkpoint algo '" + cp.algo + "' does not match configured algo '" +
                              std::string(algo_name(cfg_.algo)) + "'");
      if (cp.env_canonical != spec_.canonical())
        throw CheckpointError("checkpoint was produced on a different environment:\n  " +
                              cp.env_canonical + "\nvs\n  " + spec_.canonical());
      agent_.emplace(fresh_agent(init_rng));
      std::visit([&](auto& a) { a.load_from(cp); }, *agent_);
      norm_ = cp.normalizer;
      rsc_ = cp.reward_scaler;
      env_rng_.deserialize(cp.string("env_rng"));
      policy_rng_.deserialize(cp.string("policy_rng"));
      buffer_rng_.deserialize(cp.string("buffer_rng"));
      global_step_ = static_cast<std::int64_t>(cp.global_step);
      loop_ = cp.loop;
      if (loop_.in_episode) env_->restore_state(loop_.env_state);
    } else {
      norm_ = NormalizerState(spec_.state_dim);
      agent_.emplace(fresh_agent(init_rng));
    }
  }

  void run() {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    try {
      if (global_step_ == 0) emit_eval(elapsed());
      while (global_step_ < cfg_.total_steps) {
        if (!loop_.in_episode) begin_episode();
        step_once();
        if (global_step_ % cfg_.eval_every == 0) emit_eval(elapsed());
        if (cfg_.checkpoint_every > 0 && global_step_ % cfg_.checkpoint_every == 0 &&
            global_step_ < cfg_.total_steps && !metrics_.dir().empty())
          save_checkpoint(make_checkpoint(),
                          metrics_.dir() + "/ckpt_" + std::to_string(global_step_) + ".bin");
      }
    } catch (const NonFiniteError&) {
      if (!metrics_.dir().empty()) {
        save_checkpoint(make_checkpoint(), metrics_.dir() + "/diagnostic.ckpt");
        metrics_.finalize();
      }
      throw;
    }
    if (!metrics_.dir().empty()) {
      save_checkpoint(make_checkpoint(), metrics_.dir() + "/final.ckpt");
      metrics_.finalize();
    }
  }

  Checkpoint make_checkpoint() const {
    Checkpoint cp;
    std::visit([&](const auto& a) { a.save_to(cp); }, *agent_);
    cp.env_canonical = spec_.canonical();
    cp.env_hash = spec_.hash();
    cp.global_step = static_cast<std::uint64_t>(global_step_);
    cp.normalizer = norm_;
    cp.reward_scaler = rsc_;
    cp.strings.emplace_back("env_rng", env_rng_.serialize());
    cp.strings.emplace_back("policy_rng", policy_rng_.serialize());
    cp.strings.emplace_back("buffer_rng", buffer_rng_.serialize());
    cp.loop = loop_;
    if (loop_.in_episode) cp.loop.env_state = env_->internal_state();
    return cp;
  }

  AgentVariant& agent() { return *agent_; }
  const RunConfig& config() const { return cfg_; }
  const NormalizerState& normalizer() const { return norm_; }
  const RewardScalerState& reward_scaler() const { return rsc_; }
  std::int64_t global_step() const { return global_step_; }
  const MetricsWriter& metrics() const { return metrics_; }
  const EnvSpec& env_spec() const { return spec_; }

  EvalResult evaluate_now(std::uint64_t seed) const {
    return evaluate_agent(*agent_, spec_, cfg_.eval_episodes, seed, norm_);
  }

 private:
  AgentVariant fresh_agent(Rng& init_rng) {
    const int S = spec_.state_dim, D = spec_.action_dim;
    switch (cfg_.algo) {
      case Algo::stream_ac: return StreamAcAgent(S, D, cfg_.streaming, init_rng);
      case Algo::s2ac: return S2acAgent(S, D, cfg_.streaming, init_rng);
      case Algo::sdac: return SdacAgent(S, D, cfg_.streaming, init_rng);
      case Algo::sac_norm: return SacNormAgent(S, D, cfg_.batch, init_rng);
      case Algo::td3_norm: return Td3NormAgent(S, D, cfg_.batch, init_rng);
    }
    throw ConfigError("unreachable algo");
  }

  void begin_episode() {
    loop_.raw_obs = env_->reset(env_rng_);
    loop_.current_obs = norm_.normalize_update(loop_.raw_obs);
    loop_.episode_return_raw = 0.0;
    loop_.episode_steps = 0;
    loop_.in_episode = true;
    std::visit(
        [&](auto& a) {
          if constexpr (!is_batch_agent_v<std::decay_t<decltype(a)>>) a.episode_start();
        },
        *agent_);
  }

  void step_once() {
    const Vec a = std::visit(
        [&](auto& ag) -> Vec {
          if constexpr (is_batch_agent_v<std::decay_t<decltype(ag)>>)
            return ag.act(loop_.current_obs, global_step_, policy_rng_);
          else
            return ag.act(loop_.current_obs, policy_rng_);
        },
        *agent_);
    const StepResult sr = env_->step(clip(a, -1.0, 1.0));
    ++global_step_;
    const Vec next_norm = norm_.normalize_update(sr.s_next);
    const double r_scaled = rsc_.scale_update(sr.r, sr.terminated, gamma());

    std::visit(
        [&](auto& ag) {
          if constexpr (is_batch_agent_v<std::decay_t<decltype(ag)>>) {
            ag.observe({loop_.raw_obs, a, sr.r, sr.s_next, sr.terminated});
            if (ag.ready(global_step_))
              last_batch_info_ = ag.update(norm_, rsc_.sigma_r, global_step_, buffer_rng_, policy_rng_);
          } else {
            const StepInfo info =
                ag.update(loop_.current_obs, next_norm, r_scaled, sr.terminated, rsc_.sigma_r,
                          policy_rng_);
            eta_sum_ += info.eta_eff_critic;
            eta_min_ = std::min(eta_min_, info.eta_eff_critic);
            ++eta_n_;
          }
        },
        *agent_);

    loop_.episode_return_raw += sr.r;
    ++loop_.episode_steps;
    if (sr.terminated || sr.truncated) {
      if (!metrics_.dir().empty())
        metrics_.write_episode({global_step_, loop_.episode_return_raw,
                                static_cast<std::int64_t>(loop_.episode_steps), rsc_.sigma_r});
      loop_.in_episode = false;
    } else {
      loop_.raw_obs = sr.s_next;
      loop_.current_obs = next_norm;
    }
  }

  void emit_eval(double wall_time_s) {
    EvalRecord r;
    r.step = global_step_;
    const std::uint64_t eval_seed =
        stream_seed(cfg_.seed, "eval", static_cast<std::uint64_t>(global_step_ / cfg_.eval_every));
    const EvalResult res = evaluate_agent(*agent_, spec_, cfg_.eval_episodes, eval_seed, norm_);
    r.eval_return_mean = res.mean;
    r.eval_return_std = res.stddev;
    r.sigma_r = rsc_.sigma_r;
    std::visit(
        [&](const auto& ag) {
          using T = std::decay_t<decltype(ag)>;
          if constexpr (std::is_same_v<T, SacNormAgent>) {
            r.critic_l2_norm = l2_norm(ag.q1().params());
            r.actor_l2_norm = l2_norm(ag.actor().net.params());
            r.alpha = ag.alpha();
          } else if constexpr (std::is_same_v<T, Td3NormAgent>) {
            r.critic_l2_norm = l2_norm(ag.q1().params());
            r.actor_l2_norm = l2_norm(ag.actor().net.params());
          } else if constexpr (std::is_same_v<T, S2acAgent>) {
            r.critic_l2_norm = l2_norm(ag.critic().params());
            r.actor_l2_norm = l2_norm(ag.actor().net.params());
            r.alpha = ag.config().adaptive_alpha ? ag.config().alpha0 / rsc_.sigma_r
                                                 : ag.config().alpha0;
          } else if constexpr (std::is_same_v<T, SdacAgent>) {
            r.critic_l2_norm = l2_norm(ag.critic().params());
            r.actor_l2_norm = l2_norm(ag.actor().net.params());
          } else {
            r.critic_l2_norm = l2_norm(ag.critic().params());
            r.actor_l2_norm = l2_norm(ag.actor().net.params());
          }
        },
        *agent_);
    if (eta_n_ > 0) {
      r.eta_eff_mean = eta_sum_ / eta_n_;
      r.eta_eff_min = eta_min_;
    }
    eta_sum_ = 0.0;
    eta_min_ = std::numeric_limits<double>::infinity();
    eta_n_ = 0;
    if (!metrics_.dir().empty()) metrics_.write_eval(r, wall_time_s);
    last_eval_ = res;
  }

  double gamma() const {
    return is_streaming(cfg_.algo) ? cfg_.streaming.gamma : cfg_.batch.gamma;
  }

  RunConfig cfg_;
  EnvSpec spec_;
  std::unique_ptr<Env> env_;
  std::optional<AgentVariant> agent_;
  NormalizerState norm_;
  RewardScalerState rsc_;
  Rng env_rng_, policy_rng_, buffer_rng_;
  std::int64_t global_step_ = 0;
  LoopState loop_;
  MetricsWriter metrics_;
  BatchUpdateInfo last_batch_info_;
  double eta_sum_ = 0.0;
  double eta_min_ = std::numeric_limits<double>::infinity();
  std::int64_t eta_n_ = 0;

 public:
  EvalResult last_eval_;
};

struct SweepResult {
  std::uint64_t seed = 0;
  double final_eval_mean = 0.0;
  std::string out_dir;
};

// Independent workers, one per seed; no shared mutable state.
inline std::vector<SweepResult> run_sweep(const RunConfig& base, std::uint64_t seed_lo,
                                          std::uint64_t seed_hi, int jobs) {
  require(seed_hi >= seed_lo, "run_sweep: empty seed range");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = seed_lo; s <= seed_hi; ++s) seeds.push_back(s);
  std::vector<SweepResult> results(seeds.size());
  std::atomic<std::size_t> cursor{0};
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  auto worker = [&]() {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= seeds.size()) return;
      RunConfig cfg = base;
      cfg.seed = seeds[i];
      cfg.out_dir = base.out_dir + "/seed_" + std::to_string(seeds[i]);
      Trainer t(cfg);
      t.run();
      results[i] = {seeds[i], t.metrics().evals().back().eval_return_mean, cfg.out_dir};
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace streamrl
