#include "streamrl/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace streamrl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig tiny_cfg(const std::string& algo, const std::string& out, std::int64_t steps) {
  RunConfig cfg = RunConfig::from_kv(KvConfig::parse_string(
      "[run]\nalgo = \"" + algo + "\"\n[agent]\nhidden_width = 16\n"));
  cfg.total_steps = steps;
  cfg.eval_every = 200;
  cfg.eval_episodes = 2;
  cfg.checkpoint_every = 0;
  cfg.seed = 11;
  cfg.out_dir = out;
  if (!is_streaming(cfg.algo)) {
    cfg.batch.exploration_steps = 100;
    cfg.batch.batch_size = 32;
    cfg.batch.buffer_capacity = 4096;
  }
  return cfg;
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string operator/(const std::string& p) const { return (path / p).string(); }
};

}  // namespace

TEST_CASE("zero training steps emit exactly the initial evaluation record") {
  TmpDir tmp("srl_h0");
  Trainer t(tiny_cfg("sdac", tmp / "run", 0));
  t.run();
  CHECK(t.metrics().evals().size() == 1);
  CHECK(t.metrics().evals()[0].step == 0);
  CHECK(t.metrics().episodes().empty());
}

TEST_CASE("identical config and seed reproduce metrics and checkpoints byte-for-byte") {
  TmpDir tmp("srl_h1");
  for (const std::string algo : {std::string("sdac"), std::string("stream_ac")}) {
    Trainer a(tiny_cfg(algo, tmp / (algo + "_a"), 450));
    a.run();
    Trainer b(tiny_cfg(algo, tmp / (algo + "_b"), 450));
    b.run();
    CHECK(slurp(tmp / (algo + "_a/metrics.jsonl")) == slurp(tmp / (algo + "_b/metrics.jsonl")));
    CHECK(slurp(tmp / (algo + "_a/final.ckpt")) == slurp(tmp / (algo + "_b/final.ckpt")));
  }
}

TEST_CASE("evaluation does not mutate the normalizer") {
  TmpDir tmp("srl_h2");
  Trainer t(tiny_cfg("sdac", tmp / "run", 250));
  t.run();
  const NormalizerState before = t.normalizer();
  t.evaluate_now(123);
  CHECK((t.normalizer().mu - before.mu).norm() == 0.0);
  CHECK((t.normalizer().p - before.p).norm() == 0.0);
  CHECK(t.normalizer().t == before.t);
}

TEST_CASE("deterministic policy evaluation is reproducible; single-episode std is zero") {
  TmpDir tmp("srl_h3");
  Trainer t(tiny_cfg("sdac", tmp / "run", 0));
  t.run();
  const EvalResult r1 = t.evaluate_now(77);
  const EvalResult r2 = t.evaluate_now(77);
  CHECK(r1.mean == r2.mean);
  CHECK(r1.stddev == r2.stddev);
  RunConfig one = tiny_cfg("sdac", tmp / "one", 0);
  one.eval_episodes = 1;
  Trainer t1(one);
  const EvalResult r3 = t1.evaluate_now(77);
  CHECK(r3.stddev == 0.0);
}

TEST_CASE("random-policy pendulum baseline sits in the expected band") {
  auto env = make_env(Pendulum::default_spec());
  Rng rng(400);
  double total = 0.0;
  const int episodes = 10;
  for (int e = 0; e < episodes; ++e) {
    env->reset(rng);
    while (true) {
      const auto r = env->step(Vec::Constant(1, rng.uniform(-1.0, 1.0)));
      total += r.r;
      if (r.truncated || r.terminated) break;
    }
  }
  const double mean = total / episodes;
  CHECK(mean >= -1600.0);
  CHECK(mean <= -1000.0);
}

TEST_CASE("split runs equal uninterrupted runs bit-exactly, including mid-episode stops") {
  TmpDir tmp("srl_h4");
  // checkpoint cadence 150 is not a multiple of the 200-step horizon, so the
  // intermediate checkpoint lands mid-episode
  RunConfig full = tiny_cfg("sdac", tmp / "full", 450);
  full.checkpoint_every = 150;
  Trainer a(full);
  a.run();

  RunConfig resumed = tiny_cfg("sdac", tmp / "resumed", 450);
  resumed.checkpoint_every = 150;
  resumed.resume_from = tmp / "full/ckpt_300.bin";
  Trainer b(resumed);
  CHECK(b.global_step() == 300);
  b.run();

  const Checkpoint fa = load_checkpoint(tmp / "full/final.ckpt");
  const Checkpoint fb = load_checkpoint(tmp / "resumed/final.ckpt");
  CHECK(serialize_checkpoint(fa) == serialize_checkpoint(fb));

  // the eval records after the resume point coincide as well
  const auto& ea = a.metrics().evals();
  const auto& eb = b.metrics().evals();
  REQUIRE(eb.size() == 1);  // one eval at step 400
  const auto& last_a = ea.back();
  CHECK(last_a.step == eb[0].step);
  CHECK(last_a.eval_return_mean == eb[0].eval_return_mean);
  CHECK(last_a.critic_l2_norm == eb[0].critic_l2_norm);
}

TEST_CASE("resume validates algo and environment") {
  TmpDir tmp("srl_h5");
  RunConfig cfg = tiny_cfg("sdac", tmp / "src", 250);
  cfg.checkpoint_every = 0;
  Trainer a(cfg);
  a.run();

  RunConfig wrong_algo = tiny_cfg("s2ac", tmp / "w1", 300);
  wrong_algo.resume_from = tmp / "src/final.ckpt";
  CHECK_THROWS_AS(Trainer{wrong_algo}, CheckpointError);

  RunConfig wrong_env = tiny_cfg("sdac", tmp / "w2", 300);
  wrong_env.resume_from = tmp / "src/final.ckpt";
  wrong_env.perturb_multipliers = {{"actuator_gain", 0.8}};
  CHECK_THROWS_AS(Trainer{wrong_env}, CheckpointError);
}

TEST_CASE("finetune handoff carries normalization and freezes the actor through the warm-up") {
  TmpDir tmp("srl_h6");
  RunConfig pre = tiny_cfg("td3_norm", tmp / "pre", 400);
  Trainer a(pre);
  a.run();
  const Checkpoint src = load_checkpoint(tmp / "pre/final.ckpt");

  RunConfig ft = tiny_cfg("sdac", tmp / "ft", 300);
  ft.resume_from = tmp / "pre/final.ckpt";
  ft.resume_as = "sdac";
  ft.streaming.q_warmup_steps = 1000;  // longer than the run: actor never moves
  ft.streaming.actor_lr = 3e-4 / 256.0;
  Trainer b(ft);

  // statistics carried verbatim
  CHECK((b.normalizer().mu - src.normalizer.mu).norm() == 0.0);
  CHECK(b.normalizer().t == src.normalizer.t);
  CHECK(b.reward_scaler().sigma_r == src.reward_scaler.sigma_r);
  // the first normalized observation matches what the source-side statistics
  // would produce on the same raw state
  Rng probe(5);
  const Vec raw = probe.normal_vec(3);
  CHECK((b.normalizer().normalize_readonly(raw) - src.normalizer.normalize_readonly(raw)).norm() ==
        0.0);

  b.run();
  const Checkpoint after = load_checkpoint(tmp / "ft/final.ckpt");
  CHECK((after.net("actor").params - src.net("actor").params).norm() == 0.0);   // frozen
  CHECK((after.net("critic").params - src.net("q1").params).norm() > 0.0);      // adapting
  // baseline evaluation record exists at finetune step zero
  CHECK(b.metrics().evals().front().step == 0);
}

TEST_CASE("seed sweep spawns independent workers") {
  TmpDir tmp("srl_h7");
  RunConfig base = tiny_cfg("stream_ac", tmp / "sweep", 250);
  const auto results = run_sweep(base, 1, 2, 2);
  REQUIRE(results.size() == 2);
  CHECK(results[0].seed == 1);
  CHECK(results[1].seed == 2);
  CHECK(fs::exists(tmp / "sweep/seed_1/metrics.jsonl"));
  CHECK(fs::exists(tmp / "sweep/seed_2/final.ckpt"));
  CHECK(slurp(tmp / "sweep/seed_1/metrics.jsonl") != slurp(tmp / "sweep/seed_2/metrics.jsonl"));
}

TEST_CASE("non-finite updates abort with a diagnostic checkpoint") {
  TmpDir tmp("srl_h8");
  RunConfig cfg = tiny_cfg("sdac", tmp / "pre", 150);
  Trainer a(cfg);
  a.run();
  // poison the critic's output layer so the next Q evaluation overflows
  // (hidden layers are layernormed and would swallow a uniform poison)
  auto& agent = std::get<SdacAgent>(a.agent());
  Vec p = agent.critic().params();
  const int last = agent.critic().num_layers() - 1;
  for (int i = agent.critic().weight_offset(last); i < agent.critic().bias_offset(last); ++i)
    p[i] = 1e307;
  agent.critic_mut().set_params(p);
  save_checkpoint(a.make_checkpoint(), tmp / "poisoned.ckpt");

  RunConfig resume = tiny_cfg("sdac", tmp / "crash", 400);
  resume.resume_from = tmp / "poisoned.ckpt";
  Trainer b(resume);
  CHECK_THROWS_AS(b.run(), NonFiniteError);
  CHECK(fs::exists(tmp / "crash/diagnostic.ckpt"));
}
