#pragma once

#include "streamrl/net.hpp"

namespace streamrl {

// Network shapes shared by the streaming agents and their batch
// counterparts: two hidden layers, LayerNorm on pre-activations, LeakyReLU.

inline DenseNet value_net(int state_dim, int width, bool ln = true, bool ln_affine = false) {
  return DenseNet({{state_dim, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, 1, false, Activation::Identity, false}});
}

inline DenseNet q_net(int state_dim, int action_dim, int width, bool ln = true, bool ln_affine = false) {
  return DenseNet({{state_dim + action_dim, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, 1, false, Activation::Identity, false}});
}

// Deterministic policy: tanh on the final linear layer.
inline DenseNet det_policy_net(int state_dim, int action_dim, int width, bool ln = true,
                               bool ln_affine = false) {
  return DenseNet({{state_dim, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, action_dim, false, Activation::Tanh, false}});
}

// Stochastic policy trunk: emits [mu; second head] side by side, which is
// algebraically the same as two separate output linears.
inline DenseNet stochastic_policy_net(int state_dim, int action_dim, int width, bool ln = true,
                                      bool ln_affine = false) {
  return DenseNet({{state_dim, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, width, ln, Activation::LeakyReLU, ln_affine},
                   {width, 2 * action_dim, false, Activation::Identity, false}});
}

}  // namespace streamrl
