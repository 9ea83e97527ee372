#pragma once

#include "streamrl/common.hpp"
#include "streamrl/rng.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <string>

namespace streamrl {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  int horizon = 0;
  std::map<std::string, double> physics;  // ordered: canonical form is deterministic

  std::string canonical() const {
    std::string s = name + "|h=" + std::to_string(horizon) + "|";
    char buf[64];
    for (const auto& [k, v] : physics) {
      std::snprintf(buf, sizeof(buf), "%s=%.17g;", k.c_str(), v);
      s += buf;
    }
    return s;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }

  static EnvSpec from_canonical(const std::string& s);
};

struct StepResult {
  Vec s_next;
  double r = 0.0;
  bool terminated = false;  // genuine MDP termination
  bool truncated = false;   // time limit
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vec reset(Rng& rng) = 0;
  virtual StepResult step(const Vec& a) = 0;
  // Full dynamical state incl. the episode step counter, for checkpointing.
  virtual Vec internal_state() const = 0;
  virtual void restore_state(const Vec& s) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

inline double wrap_angle(double x) {
  double y = std::fmod(x + M_PI, 2.0 * M_PI);
  if (y < 0) y += 2.0 * M_PI;
  return y - M_PI;
}

// Torque-limited pendulum swing-up. theta = 0 is upright; observation is
// (cos th, sin th, thdot); reward = -(wrap(th)^2 + 0.1 thdot^2 + 0.001 u^2).
class Pendulum : public Env {
 public:
  static EnvSpec default_spec() {
    EnvSpec s;
    s.name = "pendulum";
    s.state_dim = 3;
    s.action_dim = 1;
    s.horizon = 200;
    s.physics = {{"mass", 1.0},       {"length", 1.0},     {"gravity", 10.0},
                 {"dt", 0.05},        {"max_torque", 2.0}, {"actuator_gain", 1.0},
                 {"max_speed", 8.0}};
    return s;
  }

  explicit Pendulum(EnvSpec spec) : spec_(std::move(spec)) {
    m_ = spec_.physics.at("mass");
    l_ = spec_.physics.at("length");
    g_ = spec_.physics.at("gravity");
    dt_ = spec_.physics.at("dt");
    max_torque_ = spec_.physics.at("max_torque");
    gain_ = spec_.physics.at("actuator_gain");
    max_speed_ = spec_.physics.at("max_speed");
  }

  const EnvSpec& spec() const override { return spec_; }

  Vec reset(Rng& rng) override {
    th_ = rng.uniform(-M_PI, M_PI);
    thdot_ = rng.uniform(-1.0, 1.0);
    steps_ = 0;
    return observation();
  }

  StepResult step(const Vec& a) override {
    require(a.size() == 1, "Pendulum::step: action dimension mismatch");
    check_finite(a, "action");
    double cmd = a[0];
    if (cmd < -1.0 || cmd > 1.0) {
      warn_clip();
      cmd = clip(cmd, -1.0, 1.0);
    }
    const double u = cmd * max_torque_ * gain_;
    const double thw = wrap_angle(th_);
    const double cost = thw * thw + 0.1 * thdot_ * thdot_ + 0.001 * u * u;
    // semi-implicit Euler
    thdot_ += (1.5 * g_ / l_ * std::sin(th_) + 3.0 / (m_ * l_ * l_) * u) * dt_;
    thdot_ = clip(thdot_, -max_speed_, max_speed_);
    th_ += thdot_ * dt_;
    ++steps_;
    StepResult out;
    out.s_next = observation();
    out.r = -cost;
    out.terminated = false;  // swing-up never terminates
    out.truncated = steps_ >= spec_.horizon;
    return out;
  }

  Vec internal_state() const override {
    Vec v(3);
    v << th_, thdot_, static_cast<double>(steps_);
    return v;
  }

  void restore_state(const Vec& s) override {
    require(s.size() == 3, "Pendulum::restore_state: bad state");
    th_ = s[0];
    thdot_ = s[1];
    steps_ = static_cast<int>(s[2]);
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<Pendulum>(*this); }

 private:
  Vec observation() const {
    Vec s(3);
    s << std::cos(th_), std::sin(th_), thdot_;
    return s;
  }

  void warn_clip() {
    if (!warned_) {
      std::fprintf(stderr, "[env] warning: action outside [-1,1], clipping\n");
      warned_ = true;
    }
  }

  EnvSpec spec_;
  double m_, l_, g_, dt_, max_torque_, gain_, max_speed_;
  double th_ = 0.0, thdot_ = 0.0;
  int steps_ = 0;
  bool warned_ = false;
};

// Cart-pole swing-up: the pole starts hanging down and never terminates;
// reward = cos(theta) - 0.01 x^2. Observation (x, xdot, cos th, sin th, thdot).
class CartpoleSwingup : public Env {
 public:
  static EnvSpec default_spec() {
    EnvSpec s;
    s.name = "cartpole_swingup";
    s.state_dim = 5;
    s.action_dim = 1;
    s.horizon = 500;
    s.physics = {{"cart_mass", 1.0}, {"pole_mass", 0.1},     {"pole_length", 0.5},
                 {"gravity", 9.8},   {"dt", 0.02},           {"max_force", 10.0},
                 {"actuator_gain", 1.0}};
    return s;
  }

  explicit CartpoleSwingup(EnvSpec spec) : spec_(std::move(spec)) {
    mc_ = spec_.physics.at("cart_mass");
    mp_ = spec_.physics.at("pole_mass");
    l_ = spec_.physics.at("pole_length");
    g_ = spec_.physics.at("gravity");
    dt_ = spec_.physics.at("dt");
    max_force_ = spec_.physics.at("max_force");
    gain_ = spec_.physics.at("actuator_gain");
  }

  const EnvSpec& spec() const override { return spec_; }

  Vec reset(Rng& rng) override {
    x_ = rng.uniform(-0.05, 0.05);
    xdot_ = rng.uniform(-0.05, 0.05);
    th_ = M_PI + rng.uniform(-0.05, 0.05);  // hanging down
    thdot_ = rng.uniform(-0.05, 0.05);
    steps_ = 0;
    return observation();
  }

  StepResult step(const Vec& a) override {
    require(a.size() == 1, "CartpoleSwingup::step: action dimension mismatch");
    check_finite(a, "action");
    double cmd = a[0];
    if (cmd < -1.0 || cmd > 1.0) {
      warn_clip();
      cmd = clip(cmd, -1.0, 1.0);
    }
    const double f = cmd * max_force_ * gain_;
    const double sin_th = std::sin(th_), cos_th = std::cos(th_);
    const double total = mc_ + mp_;
    const double tmp = (f + mp_ * l_ * thdot_ * thdot_ * sin_th) / total;
    const double thacc = (g_ * sin_th - cos_th * tmp) / (l_ * (4.0 / 3.0 - mp_ * cos_th * cos_th / total));
    const double xacc = tmp - mp_ * l_ * thacc * cos_th / total;
    // semi-implicit Euler
    thdot_ += thacc * dt_;
    xdot_ += xacc * dt_;
    th_ += thdot_ * dt_;
    x_ += xdot_ * dt_;
    ++steps_;
    StepResult out;
    out.s_next = observation();
    out.r = std::cos(th_) - 0.01 * x_ * x_;
    out.terminated = false;
    out.truncated = steps_ >= spec_.horizon;
    return out;
  }

  Vec internal_state() const override {
    Vec v(5);
    v << x_, xdot_, th_, thdot_, static_cast<double>(steps_);
    return v;
  }

  void restore_state(const Vec& s) override {
    require(s.size() == 5, "CartpoleSwingup::restore_state: bad state");
    x_ = s[0];
    xdot_ = s[1];
    th_ = s[2];
    thdot_ = s[3];
    steps_ = static_cast<int>(s[4]);
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<CartpoleSwingup>(*this); }

 private:
  Vec observation() const {
    Vec s(5);
    s << x_, xdot_, std::cos(th_), std::sin(th_), thdot_;
    return s;
  }

  void warn_clip() {
    if (!warned_) {
      std::fprintf(stderr, "[env] warning: action outside [-1,1], clipping\n");
      warned_ = true;
    }
  }

  EnvSpec spec_;
  double mc_, mp_, l_, g_, dt_, max_force_, gain_;
  double x_ = 0.0, xdot_ = 0.0, th_ = M_PI, thdot_ = 0.0;
  int steps_ = 0;
  bool warned_ = false;
};

inline EnvSpec default_env_spec(const std::string& name) {
  if (name == "pendulum") return Pendulum::default_spec();
  if (name == "cartpole_swingup") return CartpoleSwingup::default_spec();
  throw std::invalid_argument("unknown environment '" + name + "' (valid: pendulum, cartpole_swingup)");
}

// Multiplicative overrides on physics parameters; the handle for sim-to-real
// style dynamics shift.
inline EnvSpec perturb(const EnvSpec& spec, const std::map<std::string, double>& multipliers) {
  EnvSpec out = spec;
  for (const auto& [key, mult] : multipliers) {
    if (!(mult > 0.0)) throw std::invalid_argument("perturb: multiplier for '" + key + "' must be > 0");
    auto it = out.physics.find(key);
    if (it == out.physics.end()) {
      std::string valid;
      for (const auto& [k, _] : out.physics) valid += (valid.empty() ? "" : ", ") + k;
      throw std::invalid_argument("perturb: unknown physics parameter '" + key + "' (valid: " + valid + ")");
    }
    it->second *= mult;
  }
  return out;
}

inline std::unique_ptr<Env> make_env(const EnvSpec& spec) {
  if (spec.name == "pendulum") return std::make_unique<Pendulum>(spec);
  if (spec.name == "cartpole_swingup") return std::make_unique<CartpoleSwingup>(spec);
  throw std::invalid_argument("unknown environment '" + spec.name + "'");
}

inline EnvSpec EnvSpec::from_canonical(const std::string& s) {
  const auto p1 = s.find('|');
  const auto p2 = s.find('|', p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw std::invalid_argument("malformed env spec string: " + s);
  EnvSpec spec = default_env_spec(s.substr(0, p1));
  const std::string h = s.substr(p1 + 1, p2 - p1 - 1);
  if (h.rfind("h=", 0) != 0) throw std::invalid_argument("malformed env spec string: " + s);
  spec.horizon = std::stoi(h.substr(2));
  std::size_t pos = p2 + 1;
  while (pos < s.size()) {
    const auto semi = s.find(';', pos);
    if (semi == std::string::npos) break;
    const std::string kv = s.substr(pos, semi - pos);
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed env spec string: " + s);
    spec.physics[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    pos = semi + 1;
  }
  return spec;
}

}  // namespace streamrl
