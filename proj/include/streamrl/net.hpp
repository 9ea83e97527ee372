#pragma once

#include "streamrl/common.hpp"
#include "streamrl/rng.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace streamrl {

enum class Activation { LeakyReLU, ReLU, Tanh, Identity };

constexpr double kLeakySlope = 0.01;
constexpr double kLayerNormEps = 1e-5;

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::LeakyReLU: return x > 0.0 ? x : kLeakySlope * x;
    case Activation::ReLU:      return x > 0.0 ? x : 0.0;
    case Activation::Tanh:      return std::tanh(x);
    case Activation::Identity:  return x;
  }
  return x;
}

// Subgradient at exactly 0 uses the negative-side slope (deterministic
// tie-break).
inline double activate_grad(Activation a, double pre) {
  switch (a) {
    case Activation::LeakyReLU: return pre > 0.0 ? 1.0 : kLeakySlope;
    case Activation::ReLU:      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::Identity:  return 1.0;
  }
  return 1.0;
}

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  bool layernorm = false;       // applied to pre-activations
  Activation activation = Activation::Identity;
  bool ln_affine = false;       // learnable gain/bias; off by default

  bool operator==(const LayerSpec&) const = default;

  int param_count() const {
    return in_dim * out_dim + out_dim + (layernorm && ln_affine ? 2 * out_dim : 0);
  }
};

// Activation record of one forward pass. Only valid against the exact
// parameter state it was recorded from.
struct Tape {
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  std::vector<Vec> inputs;    // per layer: input x
  std::vector<Vec> preact;    // per layer: value fed into the activation
  std::vector<Vec> xhat;      // per LN layer: normalized pre-activation
  std::vector<double> inv_std;
};

struct BatchTape {
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  std::vector<Mat> inputs;    // rows = samples
  std::vector<Mat> preact;
  std::vector<Mat> xhat;
  std::vector<Vec> inv_std;   // per row
};

// Fully-connected net with a flat canonical parameter vector: per layer,
// weights row-major, then biases, then LayerNorm gain/bias when affine is
// enabled; layers in forward order.
class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    require(!layers_.empty(), "DenseNet: needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      require(layers_[i].in_dim >= 1 && layers_[i].out_dim >= 1, "DenseNet: layer dims must be >= 1");
      if (i > 0)
        require(layers_[i].in_dim == layers_[i - 1].out_dim, "DenseNet: layer dims do not chain");
      offsets_.push_back(total_);
      total_ += layers_[i].param_count();
    }
    params_ = Vec::Zero(total_);
    id_ = next_id();
  }

  DenseNet(const DenseNet& o)
      : layers_(o.layers_), offsets_(o.offsets_), total_(o.total_), params_(o.params_), id_(next_id()) {}

  DenseNet& operator=(const DenseNet& o) {
    layers_ = o.layers_;
    offsets_ = o.offsets_;
    total_ = o.total_;
    params_ = o.params_;
    id_ = next_id();
    version_ = 0;
    return *this;
  }

  DenseNet(DenseNet&&) = default;
  DenseNet& operator=(DenseNet&&) = default;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  int in_dim() const { return layers_.front().in_dim; }
  int out_dim() const { return layers_.back().out_dim; }
  int param_count() const { return total_; }

  const Vec& params() const { return params_; }

  // Any mutation goes through here; it invalidates outstanding tapes.
  Vec& params_mut() {
    ++version_;
    return params_;
  }

  void set_params(const Vec& p) {
    require(p.size() == total_, "DenseNet::set_params: size mismatch");
    params_mut() = p;
  }

  std::uint64_t version() const { return version_; }

  Eigen::Map<const RowMat> weight(int layer) const {
    const auto& l = layers_[layer];
    return {params_.data() + offsets_[layer], l.out_dim, l.in_dim};
  }
  Eigen::Map<const Vec> bias(int layer) const {
    const auto& l = layers_[layer];
    return {params_.data() + offsets_[layer] + l.in_dim * l.out_dim, l.out_dim};
  }
  Eigen::Map<const Vec> ln_gain(int layer) const {
    const auto& l = layers_[layer];
    require(l.layernorm && l.ln_affine, "ln_gain: layer has no affine norm");
    return {params_.data() + offsets_[layer] + l.in_dim * l.out_dim + l.out_dim, l.out_dim};
  }
  Eigen::Map<const Vec> ln_bias(int layer) const {
    const auto& l = layers_[layer];
    require(l.layernorm && l.ln_affine, "ln_bias: layer has no affine norm");
    return {params_.data() + offsets_[layer] + l.in_dim * l.out_dim + 2 * l.out_dim, l.out_dim};
  }

  int weight_offset(int layer) const { return offsets_[layer]; }
  int bias_offset(int layer) const { return offsets_[layer] + layers_[layer].in_dim * layers_[layer].out_dim; }

  Vec forward(const Vec& x, Tape* tape = nullptr) const {
    if (x.size() != in_dim()) throw std::invalid_argument("DenseNet::forward: input dimension mismatch");
    check_finite(x, "input to DenseNet::forward");
    if (tape) {
      tape->net_id = id_;
      tape->version = version_;
      tape->inputs.clear();
      tape->preact.clear();
      tape->xhat.assign(layers_.size(), Vec());
      tape->inv_std.assign(layers_.size(), 0.0);
    }
    Vec h = x;
    for (int i = 0; i < num_layers(); ++i) {
      const auto& l = layers_[i];
      if (tape) tape->inputs.push_back(h);
      Vec z = weight(i) * h + bias(i);
      if (l.layernorm) {
        const double mu = z.mean();
        const double var = (z.array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        Vec xh = (z.array() - mu).matrix() * inv;
        if (tape) {
          tape->xhat[i] = xh;
          tape->inv_std[i] = inv;
        }
        z = l.ln_affine ? Vec(ln_gain(i).cwiseProduct(xh) + ln_bias(i)) : xh;
      }
      if (tape) tape->preact.push_back(z);
      for (int j = 0; j < z.size(); ++j) z[j] = activate(l.activation, z[j]);
      h = std::move(z);
    }
    return h;
  }

  // Gradient of out_grad . output w.r.t. the flat parameters; optionally also
  // w.r.t. the input.
  Vec backward(const Tape& tape, const Vec& out_grad, Vec* input_grad = nullptr) const {
    check_tape(tape.net_id, tape.version);
    require(out_grad.size() == out_dim(), "DenseNet::backward: out_grad size mismatch");
    Vec grad = Vec::Zero(total_);
    Vec g = out_grad;
    for (int i = num_layers() - 1; i >= 0; --i) {
      const auto& l = layers_[i];
      const Vec& n = tape.preact[i];
      for (int j = 0; j < g.size(); ++j) g[j] *= activate_grad(l.activation, n[j]);
      if (l.layernorm) {
        const Vec& xh = tape.xhat[i];
        if (l.ln_affine) {
          Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim + l.out_dim, l.out_dim) =
              g.cwiseProduct(xh);
          Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim + 2 * l.out_dim, l.out_dim) = g;
          g = g.cwiseProduct(ln_gain(i));
        }
        const double m1 = g.mean();
        const double m2 = g.cwiseProduct(xh).mean();
        g = tape.inv_std[i] * (g.array() - m1 - xh.array() * m2).matrix();
      }
      Eigen::Map<RowMat> dW(grad.data() + offsets_[i], l.out_dim, l.in_dim);
      dW.noalias() = g * tape.inputs[i].transpose();
      Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim, l.out_dim) = g;
      if (i > 0 || input_grad) {
        Vec gx = weight(i).transpose() * g;
        if (i == 0 && input_grad) *input_grad = gx;
        g = std::move(gx);
      }
    }
    return grad;
  }

  Mat forward_batch(const Mat& X, BatchTape* tape = nullptr) const {
    if (X.cols() != in_dim()) throw std::invalid_argument("DenseNet::forward_batch: input dimension mismatch");
    if (!X.allFinite()) throw NonFiniteError("non-finite input to DenseNet::forward_batch");
    if (tape) {
      tape->net_id = id_;
      tape->version = version_;
      tape->inputs.clear();
      tape->preact.clear();
      tape->xhat.assign(layers_.size(), Mat());
      tape->inv_std.assign(layers_.size(), Vec());
    }
    Mat H = X;
    for (int i = 0; i < num_layers(); ++i) {
      const auto& l = layers_[i];
      if (tape) tape->inputs.push_back(H);
      Mat Z = H * weight(i).transpose();
      Z.rowwise() += bias(i).transpose();
      if (l.layernorm) {
        Vec mu = Z.rowwise().mean();
        Mat C = Z.colwise() - mu;
        Vec inv = (C.array().square().rowwise().mean() + kLayerNormEps).sqrt().inverse();
        Mat Xh = C.array().colwise() * inv.array();
        if (tape) {
          tape->xhat[i] = Xh;
          tape->inv_std[i] = inv;
        }
        if (l.ln_affine) {
          Z = Xh.array().rowwise() * ln_gain(i).transpose().array();
          Z.rowwise() += ln_bias(i).transpose();
        } else {
          Z = std::move(Xh);
        }
      }
      if (tape) tape->preact.push_back(Z);
      switch (l.activation) {
        case Activation::LeakyReLU:
          Z = Z.array().max(0.0) + kLeakySlope * Z.array().min(0.0);
          break;
        case Activation::ReLU:
          Z = Z.array().max(0.0);
          break;
        case Activation::Tanh:
          Z = Z.array().tanh();
          break;
        case Activation::Identity:
          break;
      }
      H = std::move(Z);
    }
    return H;
  }

  // Sums parameter gradients over the batch rows.
  Vec backward_batch(const BatchTape& tape, const Mat& out_grad, Mat* input_grad = nullptr) const {
    check_tape(tape.net_id, tape.version);
    require(out_grad.cols() == out_dim() && out_grad.rows() == tape.inputs[0].rows(),
            "DenseNet::backward_batch: out_grad shape mismatch");
    Vec grad = Vec::Zero(total_);
    Mat G = out_grad;
    for (int i = num_layers() - 1; i >= 0; --i) {
      const auto& l = layers_[i];
      const Mat& N = tape.preact[i];
      apply_activation_grad(l.activation, N, G);
      if (l.layernorm) {
        const Mat& Xh = tape.xhat[i];
        if (l.ln_affine) {
          Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim + l.out_dim, l.out_dim) =
              G.cwiseProduct(Xh).colwise().sum();
          Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim + 2 * l.out_dim, l.out_dim) =
              G.colwise().sum();
          G = G.array().rowwise() * ln_gain(i).transpose().array();
        }
        Vec m1 = G.rowwise().mean();
        Vec m2 = G.cwiseProduct(Xh).rowwise().mean();
        G = ((G.colwise() - m1).array() - (Xh.array().colwise() * m2.array())).colwise() *
            tape.inv_std[i].array();
      }
      Eigen::Map<RowMat> dW(grad.data() + offsets_[i], l.out_dim, l.in_dim);
      dW.noalias() = G.transpose() * tape.inputs[i];
      Eigen::Map<Vec>(grad.data() + offsets_[i] + l.in_dim * l.out_dim, l.out_dim) = G.colwise().sum();
      if (i > 0 || input_grad) {
        Mat GX = G * weight(i);
        if (i == 0 && input_grad) *input_grad = GX;
        G = std::move(GX);
      }
    }
    return grad;
  }

  // Gradient w.r.t. the batch input only; parameter gradients are not formed.
  Mat backward_batch_input(const BatchTape& tape, const Mat& out_grad) const {
    check_tape(tape.net_id, tape.version);
    Mat G = out_grad;
    for (int i = num_layers() - 1; i >= 0; --i) {
      const auto& l = layers_[i];
      apply_activation_grad(l.activation, tape.preact[i], G);
      if (l.layernorm) {
        const Mat& Xh = tape.xhat[i];
        if (l.ln_affine) G = G.array().rowwise() * ln_gain(i).transpose().array();
        Vec m1 = G.rowwise().mean();
        Vec m2 = G.cwiseProduct(Xh).rowwise().mean();
        G = ((G.colwise() - m1).array() - (Xh.array().colwise() * m2.array())).colwise() *
            tape.inv_std[i].array();
      }
      G = G * weight(i);
    }
    return G;
  }

  std::string layer_signature() const {
    std::string s;
    for (const auto& l : layers_) {
      s += std::to_string(l.in_dim) + "x" + std::to_string(l.out_dim);
      s += l.layernorm ? (l.ln_affine ? "na" : "n") : "-";
      s += std::to_string(static_cast<int>(l.activation));
      s += ";";
    }
    return s;
  }

 private:
  static void apply_activation_grad(Activation act, const Mat& preact, Mat& G) {
    switch (act) {
      case Activation::LeakyReLU:
        G = G.array() * ((preact.array() > 0.0).cast<double>() * (1.0 - kLeakySlope) + kLeakySlope);
        break;
      case Activation::ReLU:
        G = G.array() * (preact.array() > 0.0).cast<double>();
        break;
      case Activation::Tanh:
        G = G.array() * (1.0 - preact.array().tanh().square());
        break;
      case Activation::Identity:
        break;
    }
  }

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  void check_tape(std::uint64_t net_id, std::uint64_t version) const {
    require(net_id == id_ && version == version_,
            "DenseNet::backward: stale tape (parameters changed since forward)");
  }

  std::vector<LayerSpec> layers_;
  std::vector<int> offsets_;
  int total_ = 0;
  Vec params_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

// Per output unit, zeroes a `sparsity` fraction of incoming weights (chosen
// uniformly without replacement); the rest are U(-1/sqrt(in), 1/sqrt(in)).
// Biases zero, LayerNorm gain 1 / bias 0 when affine is enabled.
inline void sparse_init(DenseNet& net, double sparsity, Rng& rng) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw std::invalid_argument("sparse_init: sparsity must be in [0,1)");
  Vec& p = net.params_mut();
  for (int i = 0; i < net.num_layers(); ++i) {
    const auto& l = net.layers()[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
    const int zeros = static_cast<int>(std::floor(sparsity * l.in_dim));
    double* w = p.data() + net.weight_offset(i);
    std::vector<int> idx(l.in_dim);
    for (int r = 0; r < l.out_dim; ++r) {
      double* row = w + static_cast<std::ptrdiff_t>(r) * l.in_dim;
      for (int c = 0; c < l.in_dim; ++c) row[c] = rng.uniform(-bound, bound);
      std::iota(idx.begin(), idx.end(), 0);
      for (int k = 0; k < zeros; ++k) {
        const int j = k + static_cast<int>(rng.uniform_index(l.in_dim - k));
        std::swap(idx[k], idx[j]);
        row[idx[k]] = 0.0;
      }
    }
    double* b = p.data() + net.bias_offset(i);
    for (int j = 0; j < l.out_dim; ++j) b[j] = 0.0;
    if (l.layernorm && l.ln_affine) {
      for (int j = 0; j < l.out_dim; ++j) b[l.out_dim + j] = 1.0;
      for (int j = 0; j < l.out_dim; ++j) b[2 * l.out_dim + j] = 0.0;
    }
  }
}

inline double l2_norm(const Vec& v) { return v.norm(); }

}  // namespace streamrl
