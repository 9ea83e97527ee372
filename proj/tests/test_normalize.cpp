#include "streamrl/normalize.hpp"
#include "streamrl/rng.hpp"

#include "oracle_helpers.hpp"

#include <doctest.h>

using namespace streamrl;

TEST_CASE("first sample normalizes to zero") {
  NormalizerState st(3);
  Vec s(3);
  s << 4.0, -2.0, 7.5;
  const Vec out = st.normalize_update(s);
  CHECK(out.lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK((st.mu - s).norm() == 0.0);
}

TEST_CASE("scalar stream 1,2,3 gives mean 2 and unbiased variance 1") {
  NormalizerState st(1);
  for (double x : {1.0, 2.0, 3.0}) st.normalize_update(Vec::Constant(1, x));
  CHECK(st.mu[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(st.samples_seen() == 3);
  CHECK(st.p[0] / 2.0 == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("welford statistics match a two-pass batch computation") {
  Rng rng(7);
  NormalizerState st(2);
  std::vector<double> d0, d1;
  for (int i = 0; i < 10000; ++i) {
    Vec s(2);
    s << rng.normal() * 3.0 + 5.0, rng.uniform(-10, 2);
    d0.push_back(s[0]);
    d1.push_back(s[1]);
    st.normalize_update(s);
  }
  const auto t0 = oracle::two_pass(d0);
  const auto t1 = oracle::two_pass(d1);
  CHECK(std::abs(st.mu[0] - t0.mean) <= 1e-10 * std::max(1.0, std::abs(t0.mean)));
  CHECK(std::abs(st.mu[1] - t1.mean) <= 1e-10 * std::max(1.0, std::abs(t1.mean)));
  const double var0 = st.p[0] / (st.samples_seen() - 1);
  const double var1 = st.p[1] / (st.samples_seen() - 1);
  CHECK(std::abs(var0 - t0.var) <= 1e-10 * std::max(1.0, t0.var));
  CHECK(std::abs(var1 - t1.var) <= 1e-10 * std::max(1.0, t1.var));
}

TEST_CASE("normalized stream converges to zero mean and unit std") {
  Rng rng(8);
  NormalizerState st(1);
  std::vector<double> tail;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Vec out = st.normalize_update(Vec::Constant(1, rng.normal() * 2.0 + 3.0));
    if (i >= n / 2) tail.push_back(out[0]);
  }
  const auto tp = oracle::two_pass(tail);
  CHECK(std::abs(tp.mean) <= 0.1);
  CHECK(std::abs(std::sqrt(tp.var) - 1.0) <= 0.1);
}

TEST_CASE("statistics updates are order deterministic") {
  Rng ra(9), rb(9);
  NormalizerState a(2), b(2);
  for (int i = 0; i < 500; ++i) {
    a.normalize_update(ra.normal_vec(2));
    b.normalize_update(rb.normal_vec(2));
  }
  CHECK(memcmp(a.mu.data(), b.mu.data(), 16) == 0);
  CHECK(memcmp(a.p.data(), b.p.data(), 16) == 0);
  CHECK(a.t == b.t);
}

TEST_CASE("read-only normalization leaves the state untouched") {
  Rng rng(10);
  NormalizerState st(2);
  for (int i = 0; i < 50; ++i) st.normalize_update(rng.normal_vec(2));
  const Vec mu = st.mu, p = st.p;
  const auto t = st.t;
  st.normalize_readonly(rng.normal_vec(2));
  CHECK((st.mu - mu).norm() == 0.0);
  CHECK((st.p - p).norm() == 0.0);
  CHECK(st.t == t);
}

TEST_CASE("non-finite observations are rejected") {
  NormalizerState st(2);
  Vec bad(2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(st.normalize_update(bad), NonFiniteError);
  RewardScalerState rs;
  CHECK_THROWS_AS(rs.scale_update(std::numeric_limits<double>::quiet_NaN(), false, 0.99),
                  NonFiniteError);
}

TEST_CASE("all-zero rewards scale to zero with a floored sigma") {
  RewardScalerState rs;
  for (int i = 0; i < 100; ++i) {
    const double scaled = rs.scale_update(0.0, false, 0.99);
    CHECK(scaled == 0.0);
  }
  CHECK(rs.sigma_r == doctest::Approx(1e-8));  // floor engaged after count >= 2
  CHECK(rs.sigma_r > 0.0);
}

TEST_CASE("terminal flag restarts the discounted accumulator") {
  RewardScalerState rs;
  rs.scale_update(2.0, false, 0.9);
  CHECK(rs.u == doctest::Approx(2.0));
  rs.scale_update(3.0, true, 0.9);  // terminal: u = r only
  CHECK(rs.u == doctest::Approx(3.0));
  rs.scale_update(1.0, false, 0.9);  // restarts from the terminal step's r
  CHECK(rs.u == doctest::Approx(3.0 * 0.9 + 1.0));
}

TEST_CASE("sigma_r matches an independently simulated u-sequence std") {
  const double gamma = 0.99;
  RewardScalerState rs;
  std::vector<double> us;
  double u = 0.0;

  SUBCASE("constant rewards, 500 non-terminal steps") {
    for (int k = 0; k < 500; ++k) {
      rs.scale_update(1.0, false, gamma);
      u = gamma * u + 1.0;
      us.push_back(u);
    }
  }
  SUBCASE("random rewards with terminal resets") {
    Rng rng(11);
    for (int k = 0; k < 2000; ++k) {
      const bool terminal = rng.uniform() < 0.02;
      const double r = rng.normal() * 4.0 - 1.0;
      rs.scale_update(r, terminal, gamma);
      u = gamma * (terminal ? 0.0 : 1.0) * u + r;
      us.push_back(u);
    }
  }

  const auto tp = oracle::two_pass(us);
  const double expect = std::max(std::sqrt(tp.var), 1e-8);
  CHECK(std::abs(rs.sigma_r - expect) <= 1e-10 * std::max(1.0, expect));
  CHECK(std::isfinite(rs.sigma_r));
  CHECK(rs.sigma_r > 0.0);
}
