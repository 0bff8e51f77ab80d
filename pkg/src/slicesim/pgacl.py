"""Actor-critic puncturing scheduler with a Gibbs policy and a linear critic.

The agent decides, once per slot, how many mini-slots to puncture from each
resource block.  The policy factorizes across RBs: a full joint softmax over
(M+1)^B level combinations is intractable, so each RB carries its own Gibbs
distribution over levels 0..M sharing one parameter vector theta.  The score
of the factorized policy is the sum of per-RB softmax scores, which keeps
the policy-gradient update exact for the factor model.

Reliability is steered by a nonnegative weight phi(t) on the URLLC service
slack in the reward.  phi integrates the excess of the windowed outage
estimate over the target and cannot go below zero, so sustained violations
raise the pressure to serve URLLC and quiet stretches drain it away.

The critic is linear in the same features, updated by TD(0); replayed
mini-batch updates touch the critic only, since replaying actor updates
would be off-policy without a correction.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .model import (Allocation, SlotState, embb_user_rates,
                    rate_no_puncturing, risk_averse_utility, urllc_sum_rate)

FEATURE_DIM = 6


@dataclass
class RlState:
    """Reduced per-slot state: no-puncture user rates, URLLC channel, load."""
    rate_no_puncture: np.ndarray   # (K,) bits/slot
    urllc_gain_rb: np.ndarray      # (B,) mean URLLC gain per RB
    arrivals: int
    owner: np.ndarray              # (B,) owning user per RB, -1 if unassigned


@dataclass
class RlAction:
    """Punctured mini-slots per (user, RB); zero wherever the RB is not owned."""
    z: np.ndarray                  # (K, B) ints in {0..M}
    levels: np.ndarray             # (B,) the per-RB level actually chosen


@dataclass
class AgentState:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    v: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    phi: float = 0.0
    outage_window: deque = field(default_factory=lambda: deque(maxlen=200))
    replay_pool: deque = field(default_factory=lambda: deque(maxlen=10_000))
    step_count: int = 0
    pending: tuple | None = None   # (features(s,a), reward) awaiting the next slot

    @classmethod
    def fresh(cls, cfg: ScenarioConfig) -> "AgentState":
        return cls(outage_window=deque(maxlen=cfg.outage_window),
                   replay_pool=deque(maxlen=cfg.replay_capacity))


def build_state(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig) -> RlState:
    """Project the slot onto the reduced state the policy conditions on."""
    owner = np.where(alloc.x.sum(axis=0) > 0, alloc.x.argmax(axis=0), -1)
    return RlState(rate_no_puncture=rate_no_puncturing(alloc, slot, cfg),
                   urllc_gain_rb=slot.urllc_gain.mean(axis=0),
                   arrivals=slot.arrivals,
                   owner=owner)


def features(state: RlState, rb: int, level: int, cfg: ScenarioConfig) -> np.ndarray:
    """Feature vector of puncturing ``level`` mini-slots from ``rb``.

    [bias, owner rate / max rate, RB URLLC gain / max gain,
     load / mean load clipped to [0, 4], level fraction,
     level fraction * owner rate share]
    """
    return _feature_table(state, cfg)[rb, level]


def _feature_table(state: RlState, cfg: ScenarioConfig) -> np.ndarray:
    """All feature vectors at once, shape (B, M+1, FEATURE_DIM)."""
    M = cfg.minislots_per_slot
    B = state.urllc_gain_rb.size
    r_max = state.rate_no_puncture.max()
    own_rate = np.where(state.owner >= 0,
                        state.rate_no_puncture[state.owner], 0.0)
    r_norm = own_rate / r_max if r_max > 0 else np.zeros(B)
    g_max = state.urllc_gain_rb.max()
    g_norm = state.urllc_gain_rb / g_max if g_max > 0 else np.zeros(B)
    load = np.clip(state.arrivals / cfg.arrival_rate, 0.0, 4.0) \
        if cfg.arrival_rate > 0 else 0.0
    frac = np.arange(M + 1) / M                    # (M+1,)

    table = np.empty((B, M + 1, FEATURE_DIM))
    table[:, :, 0] = 1.0
    table[:, :, 1] = r_norm[:, None]
    table[:, :, 2] = g_norm[:, None]
    table[:, :, 3] = load
    table[:, :, 4] = frac[None, :]
    table[:, :, 5] = frac[None, :] * r_norm[:, None]
    return table


def policy_probs(theta: np.ndarray, state: RlState,
                 cfg: ScenarioConfig) -> np.ndarray:
    """Per-RB Gibbs distributions over puncture levels, shape (B, M+1)."""
    energy = _feature_table(state, cfg) @ theta              # (B, M+1)
    energy -= energy.max(axis=1, keepdims=True)
    probs = np.exp(energy)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def sample_action(probs: np.ndarray, state: RlState, cfg: ScenarioConfig,
                  rng: np.random.Generator) -> RlAction:
    """Independent categorical draw per owned RB; unowned RBs stay at zero."""
    B, levels_n = probs.shape
    u = rng.random(B)
    cum = probs.cumsum(axis=1)
    levels = (u[:, None] > cum).sum(axis=1)
    levels = np.where(state.owner >= 0, levels, 0)
    z = np.zeros((cfg.num_embb_users, B), dtype=int)
    owned = state.owner >= 0
    z[state.owner[owned], np.nonzero(owned)[0]] = levels[owned]
    return RlAction(z=z, levels=levels)


def action_from_z(z: np.ndarray, state: RlState) -> RlAction:
    """Wrap an externally supplied puncture matrix (e.g. the optimizer's)."""
    z = np.asarray(z, dtype=int)
    owned = state.owner >= 0
    levels = np.zeros(z.shape[1], dtype=int)
    levels[owned] = z[state.owner[owned], np.nonzero(owned)[0]]
    return RlAction(z=z, levels=levels)


def reward(alloc: Allocation, slot: SlotState, phi: float,
           cfg: ScenarioConfig, saa_gain: np.ndarray | None = None) -> float:
    """Per-slot reward: risk-averse eMBB utility plus phi-weighted URLLC slack.

    The slack (served URLLC rate minus the arrived bits) is expressed in the
    same Mbps scale as the utility so phi stays dimensionless.
    """
    if saa_gain is not None:
        snr = alloc.p[None] * saa_gain / cfg.noise_power_w
        keep = 1.0 - alloc.z / cfg.minislots_per_slot
        coef = cfg.rb_bandwidth_hz * cfg.slot_duration_s * cfg.utility_rate_unit()
        rates = np.einsum("kb,skb->sk", alloc.x * keep * coef, np.log1p(snr)) \
            / np.log(2.0)
        g = risk_averse_utility(rates, cfg.risk_param)
    else:
        rates = embb_user_rates(alloc, slot, cfg) * cfg.utility_rate_unit()
        g = risk_averse_utility(rates, cfg.risk_param)
    served = urllc_sum_rate(alloc, slot, cfg)
    slack = (served - cfg.urllc_packet_bits * slot.arrivals) * cfg.utility_rate_unit()
    return float(g + phi * slack)


def update_phi(phi: float, outage_window, theta_max: float) -> float:
    """Integrate the windowed outage excess; the weight never goes negative."""
    if len(outage_window) == 0:
        return max(phi, 0.0)
    theta_hat = float(np.mean(outage_window))
    return max(phi + theta_hat - theta_max, 0.0)


def critic_features(state: RlState, action: RlAction,
                    cfg: ScenarioConfig) -> np.ndarray:
    """Value-function features: per-RB chosen-level features, averaged."""
    table = _feature_table(state, cfg)
    owned = state.owner >= 0
    if not np.any(owned):
        return np.zeros(FEATURE_DIM)
    idx = np.nonzero(owned)[0]
    return table[idx, action.levels[idx]].mean(axis=0)


def td_error(r: float, v: np.ndarray, feat: np.ndarray, feat_next: np.ndarray,
             gamma: float) -> float:
    """One-step temporal difference R + gamma V(s',a') - V(s,a)."""
    return float(r + gamma * (v @ feat_next) - (v @ feat))


def update_critic(v: np.ndarray, delta: float, feat: np.ndarray,
                  rho_c: float) -> np.ndarray:
    return v + rho_c * delta * feat


def policy_score(theta: np.ndarray, state: RlState, action: RlAction,
                 cfg: ScenarioConfig) -> np.ndarray:
    """Gradient of log pi(action | state): chosen features minus their mean."""
    table = _feature_table(state, cfg)
    probs = policy_probs(theta, state, cfg)
    expected = np.einsum("bm,bmf->bf", probs, table)
    owned = state.owner >= 0
    idx = np.nonzero(owned)[0]
    if idx.size == 0:
        return np.zeros(FEATURE_DIM)
    chosen = table[idx, action.levels[idx]]
    return (chosen - expected[idx]).sum(axis=0)


def update_actor(theta: np.ndarray, delta: float, state: RlState,
                 action: RlAction, rho_a: float,
                 cfg: ScenarioConfig) -> np.ndarray:
    """Policy-gradient step with the TD error standing in for the advantage."""
    return theta + rho_a * delta * policy_score(theta, state, action, cfg)


def step(agent: AgentState, alloc: Allocation, slot: SlotState,
         cfg: ScenarioConfig, rng: np.random.Generator,
         warmstart_z: np.ndarray | None = None,
         saa_gain: np.ndarray | None = None):
    """Run one scheduling decision and all learning updates for the slot.

    During the first ``warmstart_slots`` steps the sampled action is
    replaced by the optimizer's puncturing (when provided) so the early
    experience pool is seeded with sensible decisions.  Returns (action,
    reward, outage_bit); the agent is updated in place.
    """
    state = build_state(alloc, slot, cfg)
    probs = policy_probs(agent.theta, state, cfg)
    action = sample_action(probs, state, cfg, rng)
    if warmstart_z is not None and agent.step_count < cfg.warmstart_slots:
        action = action_from_z(warmstart_z, state)

    executed = alloc.copy()
    executed.z = action.z
    r = reward(executed, slot, agent.phi, cfg, saa_gain=saa_gain)
    served = urllc_sum_rate(executed, slot, cfg)
    outage = int(served < cfg.urllc_packet_bits * slot.arrivals)
    agent.outage_window.append(outage)

    feat = critic_features(state, action, cfg)
    if agent.pending is not None:
        prev_feat, prev_r, prev_state, prev_action = agent.pending
        delta = td_error(prev_r, agent.v, prev_feat, feat, cfg.discount)
        agent.v = update_critic(agent.v, delta, prev_feat, cfg.critic_lr)
        agent.theta = update_actor(agent.theta, delta, prev_state, prev_action,
                                   cfg.actor_lr, cfg)
        agent.replay_pool.append((prev_feat, prev_r, feat))
        if len(agent.replay_pool) >= 1:
            n = min(cfg.minibatch_size, len(agent.replay_pool))
            idx = rng.integers(0, len(agent.replay_pool), size=n)
            for i in idx:
                f0, r0, f1 = agent.replay_pool[i]
                d = td_error(r0, agent.v, f0, f1, cfg.discount)
                agent.v = update_critic(agent.v, d, f0, cfg.critic_lr)
    agent.pending = (feat, r, state, action)

    agent.phi = update_phi(agent.phi, agent.outage_window, cfg.outage_target)
    agent.step_count += 1
    return action, r, outage


def save_checkpoint(agent: AgentState, cfg: ScenarioConfig, path: str) -> None:
    """Structured-text dump of (theta, v, phi, step) with a config hash."""
    from .config import config_hash
    payload = {
        "theta": agent.theta.tolist(),
        "v": agent.v.tolist(),
        "phi": float(agent.phi),
        "step": int(agent.step_count),
        "config_hash": config_hash(cfg),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_checkpoint(path: str, cfg: ScenarioConfig,
                    strict: bool = True) -> AgentState:
    from .config import config_hash
    with open(path) as fh:
        payload = json.load(fh)
    if strict and payload["config_hash"] != config_hash(cfg):
        raise ValueError("checkpoint was written under a different config")
    agent = AgentState.fresh(cfg)
    agent.theta = np.asarray(payload["theta"], dtype=float)
    agent.v = np.asarray(payload["v"], dtype=float)
    agent.phi = float(payload["phi"])
    agent.step_count = int(payload["step"])
    return agent
