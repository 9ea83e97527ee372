#pragma once

#include "streamrl/common.hpp"
#include "streamrl/net.hpp"
#include "streamrl/normalize.hpp"
#include "streamrl/replay.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace streamrl {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Mid-episode loop context so that a resumed run continues bit-exactly.
struct LoopState {
  bool in_episode = false;
  Vec env_state;       // Env::internal_state()
  Vec current_obs;     // normalized observation the agent will act on
  Vec raw_obs;         // the same observation before normalization
  double episode_return_raw = 0.0;
  std::uint64_t episode_steps = 0;
};

// Everything needed to reconstruct an agent and resume its run. Nets,
// vectors, scalars and strings are ordered name->value sections so the byte
// layout is canonical.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kMagic[9] = "SRLCKPT1";

  std::string algo;
  std::string env_canonical;
  std::uint64_t env_hash = 0;
  std::uint64_t global_step = 0;

  struct NetBlob {
    std::vector<LayerSpec> layers;
    Vec params;
  };

  std::vector<std::pair<std::string, NetBlob>> nets;
  std::vector<std::pair<std::string, Vec>> vectors;
  std::vector<std::pair<std::string, double>> scalars;
  std::vector<std::pair<std::string, std::string>> strings;  // rng states etc.

  NormalizerState normalizer;
  RewardScalerState reward_scaler;

  std::optional<ReplayBuffer> buffer;  // batch agents only
  LoopState loop;

  const NetBlob& net(const std::string& name) const {
    for (const auto& [n, b] : nets)
      if (n == name) return b;
    throw CheckpointError("checkpoint has no net '" + name + "'");
  }
  const Vec& vector(const std::string& name) const {
    for (const auto& [n, v] : vectors)
      if (n == name) return v;
    throw CheckpointError("checkpoint has no vector '" + name + "'");
  }
  double scalar(const std::string& name) const {
    for (const auto& [n, v] : scalars)
      if (n == name) return v;
    throw CheckpointError("checkpoint has no scalar '" + name + "'");
  }
  const std::string& string(const std::string& name) const {
    for (const auto& [n, v] : strings)
      if (n == name) return v;
    throw CheckpointError("checkpoint has no string '" + name + "'");
  }
  bool has_net(const std::string& name) const {
    for (const auto& [n, b] : nets)
      if (n == name) return true;
    return false;
  }
};

struct ReplayBufferIO {
  static void write(std::string& out, const ReplayBuffer& b);
  static ReplayBuffer read(const char*& p, const char* end);
};

namespace detail {

inline void put_bytes(std::string& out, const void* data, std::size_t n) {
  out.append(static_cast<const char*>(data), n);
}
inline void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, 4); }
inline void put_u64(std::string& out, std::uint64_t v) { put_bytes(out, &v, 8); }
inline void put_f64(std::string& out, double v) { put_bytes(out, &v, 8); }
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}
inline void put_vec(std::string& out, const Vec& v) {
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  put_bytes(out, v.data(), sizeof(double) * v.size());
}

struct Reader {
  const char* p;
  const char* end;
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) throw CheckpointError("checkpoint: truncated payload");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(p, n);
    p += n;
    return s;
  }
  Vec vec() {
    const std::uint64_t n = u64();
    need(8 * n);
    Vec v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), p, 8 * n);
    p += 8 * n;
    return v;
  }
};

}  // namespace detail

inline void ReplayBufferIO::write(std::string& out, const ReplayBuffer& b) {
  using namespace detail;
  put_u64(out, b.capacity_);
  put_u64(out, b.store_.size());
  put_u64(out, b.next_);
  if (!b.store_.empty()) {
    put_u32(out, static_cast<std::uint32_t>(b.store_[0].s.size()));
    put_u32(out, static_cast<std::uint32_t>(b.store_[0].a.size()));
    for (const auto& t : b.store_) {
      put_bytes(out, t.s.data(), 8 * t.s.size());
      put_bytes(out, t.a.data(), 8 * t.a.size());
      put_f64(out, t.r);
      put_bytes(out, t.s_next.data(), 8 * t.s_next.size());
      out.push_back(t.terminal ? 1 : 0);
    }
  }
}

inline ReplayBuffer ReplayBufferIO::read(const char*& p, const char* end) {
  detail::Reader r{p, end};
  const std::uint64_t cap = r.u64();
  const std::uint64_t n = r.u64();
  const std::uint64_t next = r.u64();
  ReplayBuffer b(cap);
  if (n > 0) {
    const std::uint32_t sdim = r.u32();
    const std::uint32_t adim = r.u32();
    for (std::uint64_t i = 0; i < n; ++i) {
      RawTransition t;
      t.s.resize(sdim);
      r.need(8 * sdim);
      std::memcpy(t.s.data(), r.p, 8 * sdim);
      r.p += 8 * sdim;
      t.a.resize(adim);
      r.need(8 * adim);
      std::memcpy(t.a.data(), r.p, 8 * adim);
      r.p += 8 * adim;
      t.r = r.f64();
      t.s_next.resize(sdim);
      r.need(8 * sdim);
      std::memcpy(t.s_next.data(), r.p, 8 * sdim);
      r.p += 8 * sdim;
      r.need(1);
      t.terminal = *r.p++ != 0;
      b.store_.push_back(std::move(t));
    }
  }
  b.next_ = next;
  p = r.p;
  return b;
}

inline std::string serialize_checkpoint(const Checkpoint& cp) {
  using namespace detail;
  std::string payload;
  put_str(payload, cp.algo);
  put_str(payload, cp.env_canonical);
  put_u64(payload, cp.env_hash);
  put_u64(payload, cp.global_step);

  put_u32(payload, static_cast<std::uint32_t>(cp.nets.size()));
  for (const auto& [name, blob] : cp.nets) {
    put_str(payload, name);
    put_u32(payload, static_cast<std::uint32_t>(blob.layers.size()));
    for (const auto& l : blob.layers) {
      put_u32(payload, static_cast<std::uint32_t>(l.in_dim));
      put_u32(payload, static_cast<std::uint32_t>(l.out_dim));
      payload.push_back(l.layernorm ? 1 : 0);
      payload.push_back(static_cast<char>(l.activation));
      payload.push_back(l.ln_affine ? 1 : 0);
    }
    put_vec(payload, blob.params);
  }
  put_u32(payload, static_cast<std::uint32_t>(cp.vectors.size()));
  for (const auto& [name, v] : cp.vectors) {
    put_str(payload, name);
    put_vec(payload, v);
  }
  put_u32(payload, static_cast<std::uint32_t>(cp.scalars.size()));
  for (const auto& [name, v] : cp.scalars) {
    put_str(payload, name);
    put_f64(payload, v);
  }
  put_u32(payload, static_cast<std::uint32_t>(cp.strings.size()));
  for (const auto& [name, v] : cp.strings) {
    put_str(payload, name);
    put_str(payload, v);
  }

  put_vec(payload, cp.normalizer.mu);
  put_vec(payload, cp.normalizer.p);
  put_u64(payload, cp.normalizer.t);
  put_f64(payload, cp.normalizer.eps);

  put_f64(payload, cp.reward_scaler.u);
  put_f64(payload, cp.reward_scaler.mu_u);
  put_f64(payload, cp.reward_scaler.p_r);
  put_u64(payload, cp.reward_scaler.count);
  put_f64(payload, cp.reward_scaler.sigma_r);
  put_f64(payload, cp.reward_scaler.floor);

  payload.push_back(cp.buffer ? 1 : 0);
  if (cp.buffer) ReplayBufferIO::write(payload, *cp.buffer);

  payload.push_back(cp.loop.in_episode ? 1 : 0);
  put_vec(payload, cp.loop.env_state);
  put_vec(payload, cp.loop.current_obs);
  put_vec(payload, cp.loop.raw_obs);
  put_f64(payload, cp.loop.episode_return_raw);
  put_u64(payload, cp.loop.episode_steps);

  std::string out;
  out.append(Checkpoint::kMagic, 8);
  put_u32(out, Checkpoint::kVersion);
  put_u64(out, static_cast<std::uint64_t>(payload.size()));
  out += payload;
  put_u64(out, fnv1a(payload.data(), payload.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  using namespace detail;
  if (bytes.size() < 28 || std::memcmp(bytes.data(), Checkpoint::kMagic, 8) != 0)
    throw CheckpointError("checkpoint: bad magic (not a checkpoint file)");
  Reader head{bytes.data() + 8, bytes.data() + bytes.size()};
  const std::uint32_t version = head.u32();
  if (version != Checkpoint::kVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) +
                          " (expected " + std::to_string(Checkpoint::kVersion) + ")");
  const std::uint64_t payload_len = head.u64();
  if (bytes.size() != 8 + 4 + 8 + payload_len + 8)
    throw CheckpointError("checkpoint: truncated or oversized file");
  const char* payload = bytes.data() + 20;
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, payload + payload_len, 8);
  if (fnv1a(payload, payload_len) != stored_sum)
    throw CheckpointError("checkpoint: checksum mismatch (corrupt file)");

  Reader r{payload, payload + payload_len};
  Checkpoint cp;
  cp.algo = r.str();
  cp.env_canonical = r.str();
  cp.env_hash = r.u64();
  cp.global_step = r.u64();

  const std::uint32_t n_nets = r.u32();
  for (std::uint32_t i = 0; i < n_nets; ++i) {
    std::string name = r.str();
    Checkpoint::NetBlob blob;
    const std::uint32_t n_layers = r.u32();
    for (std::uint32_t j = 0; j < n_layers; ++j) {
      LayerSpec l;
      l.in_dim = static_cast<int>(r.u32());
      l.out_dim = static_cast<int>(r.u32());
      r.need(3);
      l.layernorm = *r.p++ != 0;
      l.activation = static_cast<Activation>(*r.p++);
      l.ln_affine = *r.p++ != 0;
      blob.layers.push_back(l);
    }
    blob.params = r.vec();
    cp.nets.emplace_back(std::move(name), std::move(blob));
  }
  const std::uint32_t n_vecs = r.u32();
  for (std::uint32_t i = 0; i < n_vecs; ++i) {
    std::string name = r.str();
    cp.vectors.emplace_back(std::move(name), r.vec());
  }
  const std::uint32_t n_scalars = r.u32();
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    std::string name = r.str();
    cp.scalars.emplace_back(std::move(name), r.f64());
  }
  const std::uint32_t n_strings = r.u32();
  for (std::uint32_t i = 0; i < n_strings; ++i) {
    std::string name = r.str();
    cp.strings.emplace_back(std::move(name), r.str());
  }

  cp.normalizer.mu = r.vec();
  cp.normalizer.p = r.vec();
  cp.normalizer.t = r.u64();
  cp.normalizer.eps = r.f64();

  cp.reward_scaler.u = r.f64();
  cp.reward_scaler.mu_u = r.f64();
  cp.reward_scaler.p_r = r.f64();
  cp.reward_scaler.count = r.u64();
  cp.reward_scaler.sigma_r = r.f64();
  cp.reward_scaler.floor = r.f64();

  r.need(1);
  if (*r.p++ != 0) {
    const char* q = r.p;
    cp.buffer = ReplayBufferIO::read(q, r.end);
    r.p = q;
  }

  r.need(1);
  cp.loop.in_episode = *r.p++ != 0;
  cp.loop.env_state = r.vec();
  cp.loop.current_obs = r.vec();
  cp.loop.raw_obs = r.vec();
  cp.loop.episode_return_raw = r.f64();
  cp.loop.episode_steps = r.u64();
  return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  const std::string bytes = serialize_checkpoint(cp);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// Validates that a stored net blob matches the expected architecture; the
// error names the first mismatching layer.
inline void check_net_compatible(const std::string& net_name, const std::vector<LayerSpec>& expected,
                                 const Checkpoint::NetBlob& blob) {
  if (expected.size() != blob.layers.size())
    throw CheckpointError("incompatible checkpoint: net '" + net_name + "' has " +
                          std::to_string(blob.layers.size()) + " layers, expected " +
                          std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected[i];
    const auto& g = blob.layers[i];
    if (e.in_dim != g.in_dim || e.out_dim != g.out_dim || e.layernorm != g.layernorm ||
        e.ln_affine != g.ln_affine)
      throw CheckpointError("incompatible checkpoint: net '" + net_name + "' layer " + std::to_string(i) +
                            " is " + std::to_string(g.out_dim) + "x" + std::to_string(g.in_dim) +
                            (g.layernorm ? " (layernorm)" : "") + ", expected " + std::to_string(e.out_dim) +
                            "x" + std::to_string(e.in_dim) + (e.layernorm ? " (layernorm)" : ""));
  }
}

}  // namespace streamrl
