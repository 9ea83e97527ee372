#include "streamrl/env.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace streamrl;

namespace {

// Kolmogorov-Smirnov statistic against a uniform CDF on [lo, hi].
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = (xs[i] - lo) / (hi - lo);
    d = std::max(d, std::abs(cdf - (i + 1) / n));
    d = std::max(d, std::abs(cdf - i / n));
  }
  return d;
}

double pendulum_energy(double th, double thdot) {
  // rod pendulum: I = m l^2 / 3, COM at l/2, theta measured from upright
  return 0.5 * (1.0 / 3.0) * thdot * thdot + 10.0 * 0.5 * std::cos(th);
}

}  // namespace

TEST_CASE("same seed gives identical initial states") {
  auto env = make_env(Pendulum::default_spec());
  Rng a(33), b(33);
  const Vec s1 = env->reset(a);
  const Vec s2 = env->reset(b);
  CHECK((s1 - s2).norm() == 0.0);
}

TEST_CASE("pendulum initial-state marginals are uniform (KS test, alpha=0.01)") {
  auto env = make_env(Pendulum::default_spec());
  Rng rng(17);
  std::vector<double> thetas, thdots;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    env->reset(rng);
    const Vec st = env->internal_state();
    thetas.push_back(st[0]);
    thdots.push_back(st[1]);
  }
  const double crit = 1.628 / std::sqrt(static_cast<double>(n));
  CHECK(ks_uniform(thetas, -M_PI, M_PI) < crit);
  CHECK(ks_uniform(thdots, -1.0, 1.0) < crit);
}

TEST_CASE("cartpole swing-up starts hanging down") {
  auto env = make_env(CartpoleSwingup::default_spec());
  Rng rng(3);
  const Vec s = env->reset(rng);
  CHECK(s.size() == 5);
  CHECK(s[2] < -0.99);              // cos(theta) near -1
  CHECK(std::abs(s[0]) <= 0.05);    // cart near the origin
  CHECK(env->spec().horizon == 500);
}

TEST_CASE("pendulum equilibria are fixed points under zero torque") {
  Pendulum env(Pendulum::default_spec());
  Vec down(3);
  down << M_PI, 0.0, 0.0;
  env.restore_state(down);
  env.step(Vec::Zero(1));
  Vec after = env.internal_state();
  CHECK(std::abs(after[0] - M_PI) <= 1e-12);
  CHECK(std::abs(after[1]) <= 1e-12);

  Vec up(3);
  up << 0.0, 0.0, 0.0;
  env.restore_state(up);
  env.step(Vec::Zero(1));
  after = env.internal_state();
  CHECK(std::abs(after[0]) <= 1e-12);
  CHECK(std::abs(after[1]) <= 1e-12);
}

TEST_CASE("undamped zero-torque pendulum conserves mechanical energy to 1%") {
  Pendulum env(Pendulum::default_spec());
  Vec st(3);
  st << 2.8, 0.0, 0.0;  // moderate swing around the hanging position
  env.restore_state(st);
  const double e0 = pendulum_energy(2.8, 0.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    env.step(Vec::Zero(1));
    const Vec cur = env.internal_state();
    worst = std::max(worst, std::abs(pendulum_energy(cur[0], cur[1]) - e0));
  }
  CHECK(worst <= 0.01 * std::abs(e0));
}

TEST_CASE("trajectories are bit-exact given seed and action sequence") {
  auto run = [&] {
    auto env = make_env(Pendulum::default_spec());
    Rng reset_rng(5), act_rng(6);
    Vec s = env->reset(reset_rng);
    std::vector<double> trace;
    for (int i = 0; i < 150; ++i) {
      const auto r = env->step(Vec::Constant(1, act_rng.uniform(-1, 1)));
      trace.push_back(r.s_next[0]);
      trace.push_back(r.s_next[2]);
      trace.push_back(r.r);
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("out-of-box actions are clipped") {
  Pendulum a(Pendulum::default_spec()), b(Pendulum::default_spec());
  Vec st(3);
  st << 1.0, 0.5, 0.0;
  a.restore_state(st);
  b.restore_state(st);
  const auto ra = a.step(Vec::Constant(1, 5.0));   // clipped to 1
  const auto rb = b.step(Vec::Constant(1, 1.0));
  CHECK((ra.s_next - rb.s_next).norm() == 0.0);
  CHECK(ra.r == rb.r);
}

TEST_CASE("pendulum rewards stay inside the stated bound") {
  auto env = make_env(Pendulum::default_spec());
  Rng rng(9);
  const double lo = -(M_PI * M_PI + 0.1 * 64.0 + 0.001 * 4.0);
  Vec s = env->reset(rng);
  for (int i = 0; i < 400; ++i) {
    const auto r = env->step(Vec::Constant(1, rng.uniform(-1, 1)));
    CHECK(r.r <= 0.0);
    CHECK(r.r >= lo);
    if (r.truncated) s = env->reset(rng);
  }
}

TEST_CASE("episodes truncate at the horizon and never terminate") {
  auto env = make_env(Pendulum::default_spec());
  Rng rng(1);
  env->reset(rng);
  for (int i = 0; i < 199; ++i) {
    const auto r = env->step(Vec::Zero(1));
    CHECK_FALSE(r.terminated);
    CHECK_FALSE(r.truncated);
  }
  const auto last = env->step(Vec::Zero(1));
  CHECK_FALSE(last.terminated);
  CHECK(last.truncated);
}

TEST_CASE("identity perturbation leaves dynamics bit-exact") {
  const EnvSpec base = Pendulum::default_spec();
  const EnvSpec same = perturb(base, {{"actuator_gain", 1.0}, {"max_torque", 1.0}});
  auto e1 = make_env(base);
  auto e2 = make_env(same);
  Rng r1(4), r2(4);
  e1->reset(r1);
  e2->reset(r2);
  for (int i = 0; i < 100; ++i) {
    const double a = std::sin(0.1 * i);
    const auto s1 = e1->step(Vec::Constant(1, a));
    const auto s2 = e2->step(Vec::Constant(1, a));
    CHECK((s1.s_next - s2.s_next).norm() == 0.0);
    CHECK(s1.r == s2.r);
  }
}

TEST_CASE("gain and torque-limit multipliers scale the applied torque") {
  const EnvSpec shifted = perturb(Pendulum::default_spec(), {{"actuator_gain", 0.8}, {"max_torque", 0.7}});
  CHECK(shifted.physics.at("actuator_gain") == doctest::Approx(0.8));
  CHECK(shifted.physics.at("max_torque") == doctest::Approx(1.4));
  // same state, full-throttle action: accelerations scale by 0.56
  Pendulum a{Pendulum::default_spec()}, b{shifted};
  Vec st(3);
  st << M_PI, 0.0, 0.0;  // gravity torque vanishes here
  a.restore_state(st);
  b.restore_state(st);
  a.step(Vec::Constant(1, 1.0));
  b.step(Vec::Constant(1, 1.0));
  const double wa = a.internal_state()[1], wb = b.internal_state()[1];
  CHECK(wb == doctest::Approx(wa * 0.56).epsilon(1e-12));
}

TEST_CASE("perturbing an unknown parameter names the valid ones") {
  try {
    perturb(Pendulum::default_spec(), {{"bogus", 0.5}});
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus") != std::string::npos);
    CHECK(msg.find("max_torque") != std::string::npos);
  }
  CHECK_THROWS_AS(perturb(Pendulum::default_spec(), {{"max_torque", -1.0}}), std::invalid_argument);
}

TEST_CASE("perturbed and base envs expose identical dimensions") {
  const EnvSpec shifted = perturb(Pendulum::default_spec(), {{"actuator_gain", 0.8}});
  CHECK(shifted.state_dim == 3);
  CHECK(shifted.action_dim == 1);
  CHECK(shifted.horizon == Pendulum::default_spec().horizon);
}

TEST_CASE("canonical env spec round-trips") {
  const EnvSpec spec = perturb(CartpoleSwingup::default_spec(), {{"actuator_gain", 0.9}});
  const EnvSpec back = EnvSpec::from_canonical(spec.canonical());
  CHECK(back.canonical() == spec.canonical());
  CHECK(back.hash() == spec.hash());
}

TEST_CASE("cartpole dynamics are deterministic and truncate at 500") {
  auto env = make_env(CartpoleSwingup::default_spec());
  Rng rng(12);
  env->reset(rng);
  int steps = 0;
  while (true) {
    const auto r = env->step(Vec::Constant(1, 0.3));
    ++steps;
    CHECK_FALSE(r.terminated);
    CHECK(std::isfinite(r.r));
    if (r.truncated) break;
  }
  CHECK(steps == 500);
}
