#include "streamrl/arch.hpp"
#include "streamrl/policy.hpp"

#include "oracle_helpers.hpp"

#include <doctest.h>

using namespace streamrl;

namespace {

void randomize(DenseNet& net, Rng& rng, double scale = 0.5) {
  Vec& p = net.params_mut();
  for (int i = 0; i < p.size(); ++i) p[i] = rng.uniform(-scale, scale);
}

// 1-input head with weights zero: mu and raw_log_std come straight from the
// output biases.
SquashedGaussianHead fixed_head(double mu, double log_std) {
  DenseNet net({{1, 2, false, Activation::Identity, false}});
  Vec p = Vec::Zero(net.param_count());
  // raw value that squashes to the requested log_std
  const double t = (log_std - (-20.0)) / (0.5 * (2.0 - (-20.0))) - 1.0;
  p[2] = mu;                 // bias of mu output
  p[3] = std::atanh(t);      // bias of raw_log_std output
  net.set_params(p);
  return SquashedGaussianHead(std::move(net), 1);
}

double normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

}  // namespace

TEST_CASE("zero noise gives the mean action") {
  Rng rng(1);
  SquashedGaussianHead head(stochastic_policy_net(3, 2, 16), 2);
  randomize(head.net, rng);
  const Vec s = rng.normal_vec(3);
  const auto sp = head.sample_with_eps(s, Vec::Zero(2));
  CHECK((sp.a - head.mean_action(s)).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK((sp.a.array().abs() < 1.0).all());
}

TEST_CASE("log std squashes into [-20, 2] for any raw value") {
  SquashedGaussianHead head(stochastic_policy_net(1, 1, 4), 1);
  for (double raw : {-1e6, -30.0, -1.0, 0.0, 1.0, 30.0, 1e6}) {
    const double ls = head.effective_log_std(raw);
    CHECK(ls >= -20.0);
    CHECK(ls <= 2.0);
  }
  // saturation: raw -> +inf gives sigma = e^2
  CHECK(std::exp(head.effective_log_std(1e6)) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
}

TEST_CASE("log_prob at the standard normal origin") {
  // D=1, mu=0, sigma=1, u=0: the softplus correction cancels and the density
  // is the standard normal's: -0.9189385...
  auto head = fixed_head(0.0, 0.0);
  const double lp = head.log_prob(Vec::Zero(1), Vec::Zero(1));
  CHECK(lp == doctest::Approx(-0.91893853320467274).epsilon(1e-12));
}

TEST_CASE("exp(log_prob) matches the change-of-variables density on a grid") {
  auto head = fixed_head(0.3, -0.5);
  const double mu = 0.3, sd = std::exp(-0.5);
  for (double u = -4.0; u <= 4.0; u += 0.05) {
    const double a = std::tanh(u);
    const double expect = normal_pdf(u, mu, sd) / (1.0 - a * a);
    const double got = std::exp(head.log_prob(Vec::Zero(1), Vec::Constant(1, u)));
    CHECK(std::abs(got - expect) <= 1e-8 * std::max(1.0, expect));
  }
  // the log-domain form stays exact far into the tails
  for (double u : {-8.0, 8.0}) {
    const double lp = head.log_prob(Vec::Zero(1), Vec::Constant(1, u));
    const double z = (u - mu) / sd;
    const double expect_lp =
        -std::log(sd) - 0.5 * kLogTwoPi - 0.5 * z * z - std::log1p(-std::tanh(u) * std::tanh(u));
    CHECK(lp == doctest::Approx(expect_lp).epsilon(1e-9));
  }
}

TEST_CASE("multi-dimensional log_prob factorizes over dimensions") {
  Rng rng(2);
  SquashedGaussianHead head(stochastic_policy_net(2, 3, 8), 3);
  randomize(head.net, rng);
  const Vec s = rng.normal_vec(2);
  const Vec u = rng.normal_vec(3);
  const double joint = head.log_prob(s, u);

  // per-dimension sum computed from the head's own mu/log_std outputs
  const Vec h = head.net.forward(s);
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double sd = std::exp(head.effective_log_std(h[3 + i]));
    const double z = (u[i] - h[i]) / sd;
    total += -std::log(sd) - 0.5 * kLogTwoPi - 0.5 * z * z - tanh_log_jacobian(u[i]);
  }
  CHECK(joint == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("pathwise gradients match finite differences with frozen noise") {
  Rng rng(3);
  SquashedGaussianHead head(stochastic_policy_net(3, 2, 10), 2);
  randomize(head.net, rng);
  const Vec s = rng.normal_vec(3);
  const Vec eps = rng.normal_vec(2);
  const Vec wa = rng.normal_vec(2);  // projection of the action
  const double c = 0.7;              // coefficient on log_pi

  const auto sp = head.sample_with_eps(s, eps);
  const Vec analytic = head.backward_pathwise(sp, wa, c);

  auto f = [&](const std::vector<double>& p) {
    SquashedGaussianHead probe = head;
    probe.net.set_params(Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size())));
    const auto x = probe.sample_with_eps(s, eps);
    return c * x.log_pi + wa.dot(x.a);
  };
  const auto fd = oracle::finite_diff(
      f, {head.net.params().data(), head.net.params().data() + head.net.param_count()});
  CHECK(oracle::max_rel_err({analytic.data(), analytic.data() + analytic.size()}, fd) <= 1e-5);
}

TEST_CASE("batch sampling agrees with the single-sample path") {
  Rng rng(4);
  SquashedGaussianHead head(stochastic_policy_net(3, 2, 8), 2);
  randomize(head.net, rng);
  Mat S(5, 3);
  for (int r = 0; r < 5; ++r) S.row(r) = rng.normal_vec(3).transpose();
  Rng draw(99);
  const auto bs = head.sample_batch(S, draw, false);
  for (int r = 0; r < 5; ++r) {
    const auto single = head.sample_with_eps(S.row(r).transpose(), bs.eps.row(r).transpose());
    CHECK((single.a - bs.a.row(r).transpose()).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(single.log_pi == doctest::Approx(bs.log_pi[r]).epsilon(1e-12));
  }
}

TEST_CASE("batch pathwise gradient matches the summed per-sample gradients") {
  Rng rng(5);
  SquashedGaussianHead head(stochastic_policy_net(2, 2, 8), 2);
  randomize(head.net, rng);
  Mat S(4, 2);
  for (int r = 0; r < 4; ++r) S.row(r) = rng.normal_vec(2).transpose();
  Rng draw(7);
  const auto bs = head.sample_batch(S, draw, true);
  Mat dA(4, 2);
  Vec dlp(4);
  for (int r = 0; r < 4; ++r) {
    dA.row(r) = rng.normal_vec(2).transpose();
    dlp[r] = rng.uniform(-1, 1);
  }
  const Vec batch_grad = head.backward_pathwise_batch(bs, dA, dlp);
  Vec total = Vec::Zero(head.net.param_count());
  for (int r = 0; r < 4; ++r) {
    const auto sp = head.sample_with_eps(S.row(r).transpose(), bs.eps.row(r).transpose());
    total += head.backward_pathwise(sp, dA.row(r).transpose(), dlp[r]);
  }
  CHECK((batch_grad - total).lpNorm<Eigen::Infinity>() <=
        1e-10 * std::max(1.0, total.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("gaussian head: likelihood-ratio and entropy gradients match finite differences") {
  Rng rng(6);
  GaussianHead head(stochastic_policy_net(3, 2, 8), 2);
  randomize(head.net, rng);
  const Vec s = rng.normal_vec(3);
  Rng draw(11);
  const auto sp = head.sample(s, draw);

  const Vec g_logpi = head.grad_log_prob(sp, sp.a);
  auto f_logpi = [&](const std::vector<double>& p) {
    GaussianHead probe = head;
    probe.net.set_params(Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size())));
    const Vec h = probe.net.forward(s);
    double lp = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double sd = softplus(h[2 + i]);
      const double z = (sp.a[i] - h[i]) / sd;
      lp += -std::log(sd) - 0.5 * kLogTwoPi - 0.5 * z * z;
    }
    return lp;
  };
  const auto fd1 = oracle::finite_diff(
      f_logpi, {head.net.params().data(), head.net.params().data() + head.net.param_count()});
  CHECK(oracle::max_rel_err({g_logpi.data(), g_logpi.data() + g_logpi.size()}, fd1) <= 1e-5);

  const Vec g_ent = head.grad_entropy(sp);
  auto f_ent = [&](const std::vector<double>& p) {
    GaussianHead probe = head;
    probe.net.set_params(Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size())));
    const Vec h = probe.net.forward(s);
    double e = 0.0;
    for (int i = 0; i < 2; ++i) e += 0.5 * (kLogTwoPi + 1.0) + std::log(softplus(h[2 + i]));
    return e;
  };
  const auto fd2 = oracle::finite_diff(
      f_ent, {head.net.params().data(), head.net.params().data() + head.net.param_count()});
  CHECK(oracle::max_rel_err({g_ent.data(), g_ent.data() + g_ent.size()}, fd2) <= 1e-5);

  CHECK((head.mean_action(s) - head.net.forward(s).head(2)).norm() == 0.0);
}

TEST_CASE("deterministic head: pure actions repeat, noise respects the box") {
  Rng rng(7);
  DeterministicHead head(det_policy_net(3, 2, 8));
  randomize(head.net, rng);
  const Vec s = rng.normal_vec(3);
  CHECK((head.act(s) - head.act(s)).norm() == 0.0);
  CHECK((head.act(s).array().abs() <= 1.0).all());

  Rng noise(5);
  const Vec quiet = head.act_noisy(s, 0.0, noise);
  CHECK((quiet - head.act(s)).norm() == 0.0);

  for (int i = 0; i < 200; ++i) {
    const Vec noisy = head.act_noisy(s, 0.5, noise);
    CHECK((noisy.array().abs() <= 1.0).all());
  }
}
