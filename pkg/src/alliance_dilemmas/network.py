"""A small numpy network: dense ReLU trunk -> LSTM -> three linear heads.

The heads produce environment-action logits, contract-offer logits and a
scalar value.  Everything is batched over episodes; ``sequence_forward`` and
``sequence_backward`` implement backpropagation through time over a full
episode.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    obs_dim: int
    n_actions: int
    n_offers: int
    trunk: tuple[int, ...] = (128, 128)
    lstm: int = 128

    def shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        width = self.obs_dim
        for k, h in enumerate(self.trunk):
            shapes[f"W{k}"] = (width, h)
            shapes[f"b{k}"] = (h,)
            width = h
        H = self.lstm
        shapes.update({
            "Wx": (width, 4 * H), "Wh": (H, 4 * H), "bl": (4 * H,),
            "We": (H, self.n_actions), "be": (self.n_actions,),
            "Wc": (H, self.n_offers), "bc": (self.n_offers,),
            "Wv": (H, 1), "bv": (1,),
        })
        return shapes


Params = dict[str, np.ndarray]


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases (forget gate +1)."""
    params = {}
    for name, shape in spec.shapes().items():
        if len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    params["bl"][spec.lstm: 2 * spec.lstm] = 1.0
    # small policy heads start close to uniform
    for name in ("We", "Wc"):
        params[name] *= 0.1
    return params


@dataclass
class AgentMemory:
    h: np.ndarray
    c: np.ndarray


def initial_memory(spec: NetworkSpec, batch: int) -> AgentMemory:
    return AgentMemory(np.zeros((batch, spec.lstm)), np.zeros((batch, spec.lstm)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _trunk(params, spec, x):
    acts = [x]
    for k in range(len(spec.trunk)):
        x = np.maximum(x @ params[f"W{k}"] + params[f"b{k}"], 0.0)
        acts.append(x)
    return acts


def _lstm_step(params, H, x, h, c):
    z = x @ params["Wx"] + h @ params["Wh"] + params["bl"]
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = _sigmoid(z[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, g, o, tc)


def _heads(params, h):
    return (h @ params["We"] + params["be"], h @ params["Wc"] + params["bc"],
            (h @ params["Wv"] + params["bv"])[:, 0])


def masked_softmax(logits: np.ndarray, mask=None) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def core_step(params: Params, spec: NetworkSpec, memory: AgentMemory, obs: np.ndarray):
    """One timestep for a batch: returns (env_logits, contract_logits, value, new_memory)."""
    obs = np.atleast_2d(obs)
    if obs.shape[-1] != spec.obs_dim:
        raise ValueError(f"observation has {obs.shape[-1]} features, network expects {spec.obs_dim}")
    x = _trunk(params, spec, obs)[-1]
    h, c, _ = _lstm_step(params, spec.lstm, x, memory.h, memory.c)
    e, k, v = _heads(params, h)
    return e, k, v, AgentMemory(h, c)


def forward(params: Params, spec: NetworkSpec, memory: AgentMemory, obs: np.ndarray,
            env_mask=None, forced_offer=None, p_c: float = 0.0):
    """Distributions for one timestep.

    ``env_mask`` restricts the environment action; ``forced_offer`` (index per
    batch row, -1 for none) mixes the contract distribution with a point
    mass of weight ``p_c``.  Returns (env_probs, contract_probs, value,
    new_memory).
    """
    e, k, v, memory = core_step(params, spec, memory, obs)
    if env_mask is not None and np.shape(env_mask)[-1] != spec.n_actions:
        raise ValueError("environment mask has the wrong width")
    env_probs = masked_softmax(e, env_mask)
    contract_probs = masked_softmax(k)
    if forced_offer is not None:
        forced = np.broadcast_to(np.asarray(forced_offer), (contract_probs.shape[0],))
        rows = np.flatnonzero(forced >= 0)
        contract_probs[rows] *= (1.0 - p_c)
        contract_probs[rows, forced[rows]] += p_c
    return env_probs, contract_probs, v, memory


# ---------------------------------------------------------------------------
# Full-episode forward and backward
# ---------------------------------------------------------------------------


def sequence_forward(params: Params, spec: NetworkSpec, obs: np.ndarray):
    """Forward over (T, B, obs_dim) observations from a fresh memory.

    Returns head outputs of shape (T, B, .) and a cache for the backward pass.
    """
    T, B, _ = obs.shape
    H = spec.lstm
    acts = _trunk(params, spec, obs.reshape(T * B, -1))
    x = acts[-1].reshape(T, B, -1)
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs, cs, gates = [h], [c], []
    for t in range(T):
        h, c, g = _lstm_step(params, H, x[t], h, c)
        hs.append(h)
        cs.append(c)
        gates.append(g)
    hseq = np.stack(hs[1:])
    e, k, v = _heads(params, hseq.reshape(T * B, H))
    cache = {"acts": acts, "x": x, "hs": hs, "cs": cs, "gates": gates, "hseq": hseq}
    return e.reshape(T, B, -1), k.reshape(T, B, -1), v.reshape(T, B), cache


def sequence_backward(params: Params, spec: NetworkSpec, cache, d_env, d_contract, d_value) -> Params:
    """Gradients of a scalar loss given its gradients w.r.t. the three heads."""
    T, B, _ = d_env.shape
    H = spec.lstm
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    hflat = cache["hseq"].reshape(T * B, H)
    de = d_env.reshape(T * B, -1)
    dk = d_contract.reshape(T * B, -1)
    dv = d_value.reshape(T * B, 1)
    grads["We"] = hflat.T @ de
    grads["be"] = de.sum(axis=0)
    grads["Wc"] = hflat.T @ dk
    grads["bc"] = dk.sum(axis=0)
    grads["Wv"] = hflat.T @ dv
    grads["bv"] = dv.sum(axis=0)
    dh_heads = (de @ params["We"].T + dk @ params["Wc"].T + dv @ params["Wv"].T).reshape(T, B, H)

    x, hs, cs, gates = cache["x"], cache["hs"], cache["cs"], cache["gates"]
    dx = np.zeros_like(x)
    dz_all = np.zeros((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    Wh = params["Wh"]
    for t in reversed(range(T)):
        i, f, g, o, tc = gates[t]
        dh = dh_heads[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = do * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ Wh.T
    dz_flat = dz_all.reshape(T * B, 4 * H)
    grads["Wx"] = x.reshape(T * B, -1).T @ dz_flat
    grads["Wh"] = np.stack(hs[:-1]).reshape(T * B, H).T @ dz_flat
    grads["bl"] = dz_flat.sum(axis=0)
    dx = dz_flat @ params["Wx"].T

    acts = cache["acts"]
    for k in reversed(range(len(spec.trunk))):
        dpre = dx * (acts[k + 1] > 0)
        grads[f"W{k}"] = acts[k].T @ dpre
        grads[f"b{k}"] = dpre.sum(axis=0)
        dx = dpre @ params[f"W{k}"].T
    return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, spec: NetworkSpec, params: Params, extra: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(spec),
        "params": {k: v.tolist() for k, v in params.items()},
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[NetworkSpec, Params, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    raw = payload["spec"]
    spec = NetworkSpec(raw["obs_dim"], raw["n_actions"], raw["n_offers"],
                       tuple(raw["trunk"]), raw["lstm"])
    params = {k: np.asarray(v, dtype=float) for k, v in payload["params"].items()}
    return spec, params, payload.get("extra", {})
