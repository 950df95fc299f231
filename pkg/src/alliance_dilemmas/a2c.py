"""Advantage actor-critic loss over full-episode unrolls."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec, Params, masked_softmax, sequence_backward, sequence_forward
from .optim import RMSProp


@dataclass
class AgentTrajectory:
    """One agent's view of a batch of B complete episodes, time-major."""

    obs: np.ndarray  # (T, B, obs_dim)
    env_actions: np.ndarray  # (T, B) action codes
    env_masks: np.ndarray  # (T, B, A) legal/contract mask
    env_active: np.ndarray  # (T, B) agent acted at this step
    contract_actions: np.ndarray  # (T, B) offer indices
    contract_forced: np.ndarray  # (T, B) forced offer index, -1 if none
    rewards: np.ndarray  # (T, B)
    contract_enabled: bool = False
    p_c: float = 0.0


@dataclass(frozen=True)
class LossWeights:
    entropy_env: float = 0.001443
    entropy_contract: float = 0.000534
    contract_weight: float = 1.801635
    value_coef: float = 0.5


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Monte-Carlo returns along axis 0, with nothing bootstrapped past the end."""
    returns = np.zeros_like(rewards, dtype=float)
    running = np.zeros(rewards.shape[1:])
    for t in reversed(range(len(rewards))):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def returns_and_advantages(rewards: np.ndarray, values: np.ndarray, gamma: float):
    returns = discounted_returns(rewards, gamma)
    return returns, returns - values


def _entropy_terms(probs, logp):
    logp = np.where(probs > 0, logp, 0.0)
    plogp = np.where(probs > 0, probs * logp, 0.0)
    H = -plogp.sum(axis=-1)
    # dH/dz_k = -p_k (log p_k + H)
    dH = -np.where(probs > 0, probs * (logp + H[..., None]), 0.0)
    return H, dH


def a2c_loss_and_grads(params: Params, spec: NetworkSpec, traj: AgentTrajectory,
                       weights: LossWeights, gamma: float, advantages=None):
    """Loss, parameter gradients and diagnostics for one agent.

    Advantages are held constant (no gradient flows through them).  Passing
    ``advantages`` explicitly freezes them, which is what a finite-difference
    check of this function needs.
    """
    T, B = traj.env_actions.shape
    env_logits, con_logits, values, cache = sequence_forward(params, spec, traj.obs)
    returns = discounted_returns(traj.rewards, gamma)
    if advantages is None:
        advantages = returns - values
    active = traj.env_active.astype(float)

    # environment head
    env_probs = masked_softmax(env_logits, traj.env_masks)
    with np.errstate(divide="ignore"):
        env_logp = np.log(env_probs)
    env_logp = np.where(env_probs > 0, env_logp, 0.0)
    onehot = np.eye(spec.n_actions)[traj.env_actions]
    chosen = np.where(active > 0, np.take_along_axis(env_logp, traj.env_actions[..., None], -1)[..., 0], 0.0)
    H_env, dH_env = _entropy_terms(env_probs, env_logp)
    pg_env = -(advantages * chosen * active).sum()
    ent_env = (H_env * active).sum()
    d_env = (-advantages[..., None] * (onehot - env_probs) - weights.entropy_env * dH_env) * active[..., None]

    # contract head
    d_con = np.zeros_like(con_logits)
    pg_con = ent_con = 0.0
    if traj.contract_enabled:
        probs = masked_softmax(con_logits)
        logp = np.log(probs)
        a = traj.contract_actions
        forced = traj.contract_forced
        pa = np.take_along_axis(probs, a[..., None], -1)[..., 0]
        mix = (1.0 - traj.p_c) * pa + traj.p_c * (forced == a)
        scale = np.where(forced >= 0, (1.0 - traj.p_c) * pa / mix, 1.0)
        pg_con = -(advantages * np.log(mix)).sum()
        H_con, dH_con = _entropy_terms(probs, logp)
        ent_con = H_con.sum()
        d_logmix = scale[..., None] * (np.eye(spec.n_offers)[a] - probs)
        d_con = weights.contract_weight * (-advantages[..., None] * d_logmix
                                           - weights.entropy_contract * dH_con)

    value_loss = ((returns - values) ** 2).sum()
    d_value = 2.0 * weights.value_coef * (values - returns)

    loss = (pg_env - weights.entropy_env * ent_env + weights.value_coef * value_loss
            + weights.contract_weight * (pg_con - weights.entropy_contract * ent_con)) / B
    grads = sequence_backward(params, spec, cache, d_env / B, d_con / B, d_value / B)
    metrics = {
        "loss": float(loss),
        "policy_loss": float(pg_env / B),
        "value_loss": float(value_loss / B),
        "entropy_env": float(ent_env / max(active.sum(), 1.0)),
        "contract_loss": float(pg_con / B),
        "mean_value": float(values.mean()),
    }
    return float(loss), grads, metrics


def a2c_update(params: Params, spec: NetworkSpec, traj: AgentTrajectory, optimizer: RMSProp,
               weights: LossWeights, gamma: float, max_grad_norm: float | None = None):
    loss, grads, metrics = a2c_loss_and_grads(params, spec, traj, weights, gamma)
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if not np.isfinite(loss) or not np.isfinite(norm):
        raise FloatingPointError(f"non-finite A2C loss or gradient: loss={loss}, "
                                 f"grad_norm={norm}, metrics={metrics}")
    if max_grad_norm is not None and norm > max_grad_norm:
        grads = {k: g * (max_grad_norm / norm) for k, g in grads.items()}
    optimizer.step(params, grads)
    metrics["grad_norm"] = norm
    return params, metrics
