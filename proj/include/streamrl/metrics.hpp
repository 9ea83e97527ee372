#pragma once

#include "streamrl/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace streamrl {

using json = nlohmann::ordered_json;

struct EvalRecord {
  std::int64_t step = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double critic_l2_norm = 0.0;
  double actor_l2_norm = 0.0;
  double sigma_r = 1.0;
  std::optional<double> alpha;
  std::optional<double> eta_eff_mean;
  std::optional<double> eta_eff_min;
};

struct EpisodeRecord {
  std::int64_t step = 0;
  double episode_return = 0.0;  // raw undiscounted
  std::int64_t episode_length = 0;
  double sigma_r = 1.0;
};

// One JSON object per line while the run streams; CSV exported post-run.
// Wall-clock time is nondeterministic and therefore lives in a sidecar file
// so that metrics.jsonl stays byte-identical across identical runs.
class MetricsWriter {
 public:
  MetricsWriter() = default;

  explicit MetricsWriter(const std::string& out_dir) : dir_(out_dir) {
    std::filesystem::create_directories(dir_);
    metrics_.open(dir_ + "/metrics.jsonl", std::ios::trunc);
    timing_.open(dir_ + "/timing.jsonl", std::ios::trunc);
    if (!metrics_ || !timing_) throw std::runtime_error("cannot open metrics files under " + dir_);
  }

  void write_eval(const EvalRecord& r, double wall_time_s) {
    json j;
    j["type"] = "eval";
    j["step"] = r.step;
    j["eval_return_mean"] = r.eval_return_mean;
    j["eval_return_std"] = r.eval_return_std;
    j["critic_l2_norm"] = r.critic_l2_norm;
    j["actor_l2_norm"] = r.actor_l2_norm;
    j["sigma_r"] = r.sigma_r;
    if (r.alpha) j["alpha"] = *r.alpha;
    if (r.eta_eff_mean) j["eta_eff_mean"] = *r.eta_eff_mean;
    if (r.eta_eff_min) j["eta_eff_min"] = *r.eta_eff_min;
    metrics_ << j.dump() << "\n";
    metrics_.flush();
    timing_ << json{{"type", "eval"}, {"step", r.step}, {"wall_time_s", wall_time_s}}.dump() << "\n";
    timing_.flush();
    evals_.push_back(r);
  }

  void write_episode(const EpisodeRecord& r) {
    json j;
    j["type"] = "episode";
    j["step"] = r.step;
    j["episode_return"] = r.episode_return;
    j["episode_length"] = r.episode_length;
    j["sigma_r"] = r.sigma_r;
    metrics_ << j.dump() << "\n";
    episodes_.push_back(r);
  }

  // Post-run CSV export for plotting.
  void finalize() {
    if (dir_.empty()) return;
    metrics_.flush();
    {
      std::ofstream f(dir_ + "/eval.csv", std::ios::trunc);
      f << "step,eval_return_mean,eval_return_std,critic_l2_norm,actor_l2_norm,sigma_r,alpha\n";
      for (const auto& r : evals_) {
        f << r.step << "," << fmt(r.eval_return_mean) << "," << fmt(r.eval_return_std) << ","
          << fmt(r.critic_l2_norm) << "," << fmt(r.actor_l2_norm) << "," << fmt(r.sigma_r) << ","
          << (r.alpha ? fmt(*r.alpha) : "") << "\n";
      }
    }
    {
      std::ofstream f(dir_ + "/episodes.csv", std::ios::trunc);
      f << "step,episode_return,episode_length,sigma_r\n";
      for (const auto& r : episodes_)
        f << r.step << "," << fmt(r.episode_return) << "," << r.episode_length << "," << fmt(r.sigma_r)
          << "\n";
    }
  }

  const std::vector<EvalRecord>& evals() const { return evals_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  const std::string& dir() const { return dir_; }

 private:
  static std::string fmt(double v) {
    json j = v;
    return j.dump();
  }

  std::string dir_;
  std::ofstream metrics_, timing_;
  std::vector<EvalRecord> evals_;
  std::vector<EpisodeRecord> episodes_;
};

}  // namespace streamrl
