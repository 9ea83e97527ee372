#pragma once

#include "streamrl/batch_agents.hpp"
#include "streamrl/env.hpp"
#include "streamrl/streaming_agents.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

extern char** environ;

namespace streamrl {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// TOML-style sections with key = value lines; values are strings, numbers or
// booleans. Keys are addressed as "section.key" (sections may nest with
// dots). Environment variables override file values: STREAMRL_A__B=x sets
// key "a.b".
class KvConfig {
 public:
  static KvConfig parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (!value.empty() && value.front() == '"') {
        const auto close = value.find('"', 1);
        if (close == std::string::npos)
          throw ConfigError("line " + std::to_string(lineno) + ": unterminated string");
        value = value.substr(1, close - 1);
      } else {
        const auto hash = value.find('#');
        if (hash != std::string::npos) value = trim(value.substr(0, hash));
      }
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_string(text);
  }

  void apply_env_overrides(const std::string& prefix = "STREAMRL_") {
    for (char** e = environ; *e != nullptr; ++e) {
      std::string entry(*e);
      if (entry.rfind(prefix, 0) != 0) continue;
      const auto eq = entry.find('=');
      if (eq == std::string::npos) continue;
      std::string key = entry.substr(prefix.size(), eq - prefix.size());
      // "__" separates path components
      std::string path;
      std::size_t pos = 0;
      while (pos < key.size()) {
        const auto sep = key.find("__", pos);
        std::string comp = key.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
        std::transform(comp.begin(), comp.end(), comp.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        path += (path.empty() ? "" : ".") + comp;
        if (sep == std::string::npos) break;
        pos = sep + 2;
      }
      values_[path] = entry.substr(eq + 1);
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("key '" + key + "': expected a number, got '" + it->second + "'");
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc() || p != it->second.data() + it->second.size())
      throw ConfigError("key '" + key + "': expected an integer, got '" + it->second + "'");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + it->second + "'");
  }

  // All keys under "<prefix>." with their double values.
  std::map<std::string, double> section_doubles(const std::string& prefix) const {
    std::map<std::string, double> out;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : values_)
      if (k.rfind(p, 0) == 0) out[k.substr(p.size())] = get_double(k, 0.0);
    return out;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

enum class Algo { stream_ac, s2ac, sdac, sac_norm, td3_norm };

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::stream_ac: return "stream_ac";
    case Algo::s2ac: return "s2ac";
    case Algo::sdac: return "sdac";
    case Algo::sac_norm: return "sac_norm";
    case Algo::td3_norm: return "td3_norm";
  }
  return "?";
}

inline Algo algo_from_name(const std::string& s) {
  if (s == "stream_ac") return Algo::stream_ac;
  if (s == "s2ac") return Algo::s2ac;
  if (s == "sdac") return Algo::sdac;
  if (s == "sac_norm") return Algo::sac_norm;
  if (s == "td3_norm") return Algo::td3_norm;
  throw ConfigError("unknown algo '" + s + "' (valid: stream_ac, s2ac, sdac, sac_norm, td3_norm)");
}

inline bool is_streaming(Algo a) { return a == Algo::stream_ac || a == Algo::s2ac || a == Algo::sdac; }

// Fully resolved run description; together with the seed it determines a run.
struct RunConfig {
  Algo algo = Algo::sdac;
  std::string env_name = "pendulum";
  std::map<std::string, double> perturb_multipliers;
  std::int64_t env_horizon = 0;  // 0 = environment default

  std::int64_t total_steps = 150000;
  std::uint64_t seed = 1;
  std::int64_t eval_every = 10000;
  int eval_episodes = 10;
  std::int64_t checkpoint_every = 100000;
  std::string out_dir = "runs/run";

  std::string resume_from;  // checkpoint path
  std::string resume_as;    // target algo for the batch-to-streaming handoff

  std::string critic_optimizer;  // obgd | adam | sgdc
  StreamingConfig streaming;
  BatchConfig batch;

  EnvSpec env_spec() const {
    EnvSpec spec = default_env_spec(env_name);
    if (env_horizon > 0) spec.horizon = static_cast<int>(env_horizon);
    return perturb(spec, perturb_multipliers);
  }

  static RunConfig from_kv(const KvConfig& kv) {
    RunConfig c;
    c.algo = algo_from_name(kv.get_string("run.algo", "sdac"));
    c.env_name = kv.get_string("env.name", "pendulum");
    c.perturb_multipliers = kv.section_doubles("env.perturb");
    c.env_horizon = kv.get_int("env.horizon", 0);
    c.total_steps = kv.get_int("run.total_steps", 150000);
    c.seed = static_cast<std::uint64_t>(kv.get_int("run.seed", 1));
    c.eval_every = kv.get_int("run.eval_every", 10000);
    c.eval_episodes = static_cast<int>(kv.get_int("run.eval_episodes", 10));
    c.checkpoint_every = kv.get_int("run.checkpoint_every", 100000);
    c.out_dir = kv.get_string("run.out_dir", "runs/run");
    c.resume_from = kv.get_string("run.resume_from", "");
    c.resume_as = kv.get_string("run.resume_as", "");

    // streaming defaults (per-algo tables)
    StreamingConfig& s = c.streaming;
    s.gamma = kv.get_double("agent.gamma", 0.99);
    s.lambda = kv.get_double("agent.lambda", 0.8);
    s.critic_eta = kv.get_double("agent.critic_lr", 1.0);
    s.kappa_critic = kv.get_double("agent.kappa_critic", 2.0);
    s.kappa_actor = kv.get_double("agent.kappa_actor", 3.0);
    s.actor_eta = kv.get_double("agent.actor_lr_obgd", 1.0);
    s.actor_lr = kv.get_double("agent.actor_lr", 3e-4);
    s.adam_beta1 = kv.get_double("agent.adam_beta1", 0.9);
    s.adam_beta2 = kv.get_double("agent.adam_beta2", 0.999);
    s.adam_eps = kv.get_double("agent.adam_eps", 1e-8);
    s.entropy_coeff = kv.get_double("agent.entropy_coeff", 0.01);
    s.entropy_in_trace = kv.get_bool("agent.entropy_in_trace", false);
    s.alpha0 = kv.get_double("agent.alpha0", 0.01);
    s.adaptive_alpha = kv.get_bool("agent.adaptive_alpha", true);
    s.exploration_sigma = kv.get_double("agent.exploration_sigma", 0.2);
    s.target_sigma = kv.get_double("agent.target_sigma", 0.2);
    s.hidden_width = static_cast<int>(kv.get_int("agent.hidden_width", 128));
    s.sparsity = kv.get_double("agent.sparsity", 0.9);
    s.ln_affine = kv.get_bool("agent.layernorm_affine", false);
    s.q_warmup_steps = kv.get_int("run.q_warmup_steps", 0);

    // batch defaults
    BatchConfig& b = c.batch;
    b.gamma = s.gamma;
    b.buffer_capacity = static_cast<std::size_t>(kv.get_int("agent.buffer_capacity", 1000000));
    b.batch_size = static_cast<int>(kv.get_int("agent.batch_size", 256));
    b.exploration_steps =
        kv.get_int("agent.exploration_steps", c.algo == Algo::td3_norm ? 25000 : 5000);
    b.polyak_tau = kv.get_double("agent.polyak_tau", 0.005);
    b.policy_frequency = static_cast<int>(kv.get_int("agent.policy_frequency", 2));
    b.lr = kv.get_double("agent.actor_lr", 3e-4);
    b.adam_beta1 = s.adam_beta1;
    b.adam_beta2 = s.adam_beta2;
    b.adam_eps = s.adam_eps;
    b.sgdc_lr = kv.get_double("agent.sgdc_lr", 0.5);
    b.sgdc_h = kv.get_double("agent.sgdc_h", 1.0);
    b.target_noise = kv.get_double("agent.target_noise", 0.2);
    b.target_noise_clip = kv.get_double("agent.target_noise_clip", 0.5);
    b.exploration_noise = kv.get_double("agent.exploration_noise", 0.1);
    b.autotune_alpha = kv.get_bool("agent.autotune_alpha", true);
    b.alpha_fixed = kv.get_double("agent.alpha_fixed", 0.2);
    b.hidden_width = s.hidden_width;
    b.sparsity = s.sparsity;
    b.ln_affine = s.ln_affine;

    c.critic_optimizer =
        kv.get_string("agent.critic_optimizer", is_streaming(c.algo) ? "obgd" : "adam");
    b.critic_sgdc = c.critic_optimizer == "sgdc";
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path, bool env_overrides = true) {
    KvConfig kv = KvConfig::parse_file(path);
    if (env_overrides) kv.apply_env_overrides();
    return from_kv(kv);
  }

  void validate() const {
    default_env_spec(env_name);  // throws on unknown env
    if (total_steps < 0) throw ConfigError("run.total_steps must be >= 0");
    if (eval_every <= 0) throw ConfigError("run.eval_every must be > 0");
    if (eval_episodes <= 0) throw ConfigError("run.eval_episodes must be > 0");
    if (is_streaming(algo)) {
      if (critic_optimizer != "obgd")
        throw ConfigError(std::string("algo ") + algo_name(algo) +
                          " requires critic_optimizer = obgd, got '" + critic_optimizer + "'");
    } else {
      if (critic_optimizer != "adam" && critic_optimizer != "sgdc")
        throw ConfigError(std::string("algo ") + algo_name(algo) +
                          " requires critic_optimizer adam or sgdc, got '" + critic_optimizer + "'");
    }
    if (!resume_as.empty()) {
      const Algo target = algo_from_name(resume_as);
      if (!is_streaming(target)) throw ConfigError("resume_as must name a streaming algo");
    }
    if (!(streaming.sparsity >= 0.0 && streaming.sparsity < 1.0))
      throw ConfigError("agent.sparsity must be in [0,1)");
    if (!(streaming.gamma >= 0.0 && streaming.gamma < 1.0))
      throw ConfigError("agent.gamma must be in [0,1)");
  }

  // Canonical resolved form; identical configs produce identical strings.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "algo=" << algo_name(algo) << "\n";
    os << "env.name=" << env_name << "\n";
    os << "env.horizon=" << env_horizon << "\n";
    for (const auto& [k, v] : perturb_multipliers) os << "env.perturb." << k << "=" << v << "\n";
    os << "run.total_steps=" << total_steps << "\n";
    os << "run.eval_every=" << eval_every << "\n";
    os << "run.eval_episodes=" << eval_episodes << "\n";
    os << "run.checkpoint_every=" << checkpoint_every << "\n";
    os << "run.q_warmup_steps=" << streaming.q_warmup_steps << "\n";
    os << "critic_optimizer=" << critic_optimizer << "\n";
    const StreamingConfig& s = streaming;
    os << "s.gamma=" << s.gamma << " s.lambda=" << s.lambda << " s.critic_eta=" << s.critic_eta
       << " s.kc=" << s.kappa_critic << " s.ka=" << s.kappa_actor << " s.actor_lr=" << s.actor_lr
       << " s.actor_eta=" << s.actor_eta << " s.b1=" << s.adam_beta1 << " s.b2=" << s.adam_beta2
       << " s.eps=" << s.adam_eps << " s.tau=" << s.entropy_coeff << " s.eit=" << s.entropy_in_trace
       << " s.alpha0=" << s.alpha0 << " s.adapt=" << s.adaptive_alpha
       << " s.expl=" << s.exploration_sigma << " s.target=" << s.target_sigma
       << " s.width=" << s.hidden_width << " s.sparsity=" << s.sparsity << " s.affine=" << s.ln_affine
       << "\n";
    const BatchConfig& b = batch;
    os << "b.cap=" << b.buffer_capacity << " b.batch=" << b.batch_size
       << " b.expl_steps=" << b.exploration_steps << " b.tau=" << b.polyak_tau
       << " b.pfreq=" << b.policy_frequency << " b.lr=" << b.lr << " b.sgdc=" << b.critic_sgdc
       << " b.sgdc_lr=" << b.sgdc_lr << " b.sgdc_h=" << b.sgdc_h << " b.tnoise=" << b.target_noise
       << " b.tclip=" << b.target_noise_clip << " b.enoise=" << b.exploration_noise
       << " b.autotune=" << b.autotune_alpha << " b.alpha=" << b.alpha_fixed << "\n";
    return os.str();
  }
};

}  // namespace streamrl
