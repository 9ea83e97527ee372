#include "streamrl/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

using namespace streamrl;

namespace {

RunConfig load_config(const std::string& path, std::int64_t seed_override,
                      const std::string& out_override) {
  KvConfig kv = KvConfig::parse_file(path);
  kv.apply_env_overrides();
  RunConfig cfg = RunConfig::from_kv(kv);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

void print_evals(const Trainer& t) {
  for (const auto& e : t.metrics().evals())
    std::printf("step %10lld  eval %10.2f +- %.2f\n", static_cast<long long>(e.step),
                e.eval_return_mean, e.eval_return_std);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamrl: streaming and batch actor-critic training engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir, from_ckpt, as_algo, seeds_range;
  std::int64_t seed = -1;
  int episodes = 10;
  int jobs = 0;

  auto* train = app.add_subcommand("train", "train an agent from scratch or resume a run");
  train->add_option("--config", config_path, "run configuration file")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", out_dir, "output directory override");

  auto* finetune = app.add_subcommand("finetune", "batch-to-streaming finetuning from a checkpoint");
  finetune->add_option("--config", config_path, "run configuration file")->required();
  finetune->add_option("--from", from_ckpt, "source (batch) checkpoint")->required();
  finetune->add_option("--as", as_algo, "target streaming algo: sdac | s2ac")->required();
  finetune->add_option("--seed", seed, "seed override");
  finetune->add_option("--out", out_dir, "output directory override");

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpointed policy");
  evalc->add_option("--from", from_ckpt, "checkpoint to evaluate")->required();
  evalc->add_option("--episodes", episodes, "number of evaluation episodes");
  evalc->add_option("--seed", seed, "evaluation seed");

  auto* sweep = app.add_subcommand("sweep", "run a seed sweep of independent workers");
  sweep->add_option("--config", config_path, "run configuration file")->required();
  sweep->add_option("--seeds", seeds_range, "seed range a..b")->required();
  sweep->add_option("--out", out_dir, "output directory override");
  sweep->add_option("--jobs", jobs, "parallel workers (default: hardware threads)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      Trainer t(load_config(config_path, seed, out_dir));
      t.run();
      print_evals(t);
    } else if (*finetune) {
      RunConfig cfg = load_config(config_path, seed, out_dir);
      cfg.resume_from = from_ckpt;
      cfg.resume_as = as_algo;
      // finetuning defaults apply unless the config file pins its own values
      KvConfig kv = KvConfig::parse_file(config_path);
      kv.apply_env_overrides();
      if (!kv.has("agent.actor_lr")) cfg.streaming.actor_lr = 3e-4 / 256.0;
      if (!kv.has("run.q_warmup_steps")) cfg.streaming.q_warmup_steps = 5000;
      if (!kv.has("agent.exploration_sigma")) cfg.streaming.exploration_sigma = 0.1;
      if (!kv.has("agent.target_sigma")) cfg.streaming.target_sigma = 0.1;
      Trainer t(cfg);
      t.run();
      print_evals(t);
    } else if (*evalc) {
      const Checkpoint cp = load_checkpoint(from_ckpt);
      const EnvSpec spec = EnvSpec::from_canonical(cp.env_canonical);
      AgentVariant agent = agent_from_checkpoint(cp);
      const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : 0;
      const EvalResult res =
          evaluate_agent(agent, spec, episodes, stream_seed(s, "eval"), cp.normalizer);
      std::printf("%s @ step %llu on %s: mean return %.2f +- %.2f over %d episodes\n",
                  cp.algo.c_str(), static_cast<unsigned long long>(cp.global_step),
                  spec.name.c_str(), res.mean, res.stddev, episodes);
    } else if (*sweep) {
      const auto dots = seeds_range.find("..");
      if (dots == std::string::npos) throw ConfigError("--seeds expects a range like 1..10");
      const std::uint64_t lo = std::stoull(seeds_range.substr(0, dots));
      const std::uint64_t hi = std::stoull(seeds_range.substr(dots + 2));
      RunConfig cfg = load_config(config_path, -1, out_dir);
      const auto results = run_sweep(cfg, lo, hi, jobs);
      for (const auto& r : results)
        std::printf("seed %llu: final eval %.2f  (%s)\n", static_cast<unsigned long long>(r.seed),
                    r.final_eval_mean, r.out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
