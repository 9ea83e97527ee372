#pragma once

#include "streamrl/batch_agents.hpp"
#include "streamrl/checkpoint.hpp"
#include "streamrl/streaming_agents.hpp"

namespace streamrl {

// Batch-to-streaming transfer: actor weights copied, critic #1 becomes the
// single streaming critic, normalization statistics carried verbatim (the
// caller reads them off the checkpoint), traces zeroed, fresh Adam state for
// the actor. cfg carries the finetuning hyperparameters (reduced learning
// rate, Q-warm-up length, exploration/target noise).

inline SdacAgent handoff_to_sdac(const Checkpoint& cp, const StreamingConfig& cfg) {
  if (cp.algo != "td3_norm")
    throw CheckpointError("handoff to sdac requires a td3_norm checkpoint, got '" + cp.algo + "'");
  const auto& actor_blob = cp.net("actor");
  const int state_dim = actor_blob.layers.front().in_dim;
  const int action_dim = actor_blob.layers.back().out_dim;
  Rng scratch(0);
  SdacAgent agent(state_dim, action_dim, cfg, scratch);
  check_net_compatible("actor", agent.actor().net.layers(), actor_blob);
  check_net_compatible("critic", agent.critic().layers(), cp.net("q1"));
  agent.actor_mut().net.set_params(actor_blob.params);
  agent.critic_mut().set_params(cp.net("q1").params);
  return agent;
}

inline S2acAgent handoff_to_s2ac(const Checkpoint& cp, const StreamingConfig& cfg) {
  if (cp.algo != "sac_norm")
    throw CheckpointError("handoff to s2ac requires a sac_norm checkpoint, got '" + cp.algo + "'");
  const auto& actor_blob = cp.net("actor");
  const int state_dim = actor_blob.layers.front().in_dim;
  const int action_dim = actor_blob.layers.back().out_dim / 2;
  Rng scratch(0);
  S2acAgent agent(state_dim, action_dim, cfg, scratch);
  check_net_compatible("actor", agent.actor().net.layers(), actor_blob);
  check_net_compatible("critic", agent.critic().layers(), cp.net("q1"));
  agent.actor_mut().net.set_params(actor_blob.params);
  agent.critic_mut().set_params(cp.net("q1").params);
  return agent;
}

}  // namespace streamrl
