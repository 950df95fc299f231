"""Exact expected payoffs and simultaneous policy-gradient dynamics.

Policies are stored as the probability each player takes action 0.  The
expected payoff is trilinear in these probabilities, so own-policy gradients
and the Jacobian of the ascent field are exact finite differences of table
entries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, logit

from .matrix_games import ThreePlayerGame

DIRECT = "direct"
LOGIT = "logit"


class UnsupportedGameError(ValueError):
    """Raised when analytic fixed points are requested for a game without a closed form."""


@dataclass(frozen=True)
class PolicyTriple:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"policy probabilities must lie in [0, 1], got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


def _probs(policy) -> np.ndarray:
    if isinstance(policy, PolicyTriple):
        return policy.as_array()
    return np.asarray(policy, dtype=float)


def _mixtures(probs: np.ndarray) -> np.ndarray:
    # (..., 3) action-0 probabilities -> (..., 3, 2) distributions
    return np.stack([probs, 1.0 - probs], axis=-1)


def expected_payoffs(game: ThreePlayerGame, policy) -> np.ndarray:
    """Expected payoff triple; accepts one policy or an array of shape (k, 3)."""
    m = _mixtures(_probs(policy))
    return np.einsum("...a,...b,...c,abcj->...j", m[..., 0, :], m[..., 1, :], m[..., 2, :],
                     game.table)


def _payoff_with_fixed(game, probs, player, action):
    probs = np.array(probs, dtype=float, copy=True)
    probs[..., player] = 1.0 - action
    return expected_payoffs(game, probs)[..., player]


def exact_gradient(game: ThreePlayerGame, policy, player: int) -> np.ndarray | float:
    """d(own expected payoff) / d(own probability of action 0)."""
    probs = _probs(policy)
    g = _payoff_with_fixed(game, probs, player, 0) - _payoff_with_fixed(game, probs, player, 1)
    return float(g) if np.ndim(g) == 0 else g


def _own_differences(game: ThreePlayerGame) -> list[np.ndarray]:
    # D[i][a, b]: player i's gain from action 0 over action 1, others at (a, b)
    t = game.table
    return [np.take(t[..., i], 0, axis=i) - np.take(t[..., i], 1, axis=i) for i in range(3)]


def gradient_field(game: ThreePlayerGame, policy) -> np.ndarray:
    """Every player's own-policy gradient, shape (..., 3)."""
    probs = _probs(policy)
    out = np.empty(np.shape(probs))
    for i, D in enumerate(_own_differences(game)):
        j, k = [o for o in range(3) if o != i]
        xj, xk = probs[..., j], probs[..., k]
        out[..., i] = (D[0, 0] * xj * xk + D[0, 1] * xj * (1 - xk)
                       + D[1, 0] * (1 - xj) * xk + D[1, 1] * (1 - xj) * (1 - xk))
    return out


def field_jacobian(game: ThreePlayerGame, policy) -> np.ndarray:
    """Jacobian J[i, j] = d(gradient of player i) / d(probability of player j).

    Each gradient is linear in every other player's probability and independent
    of the player's own, so the difference quotient over {0, 1} is exact.
    """
    probs = _probs(policy)
    J = np.zeros((3, 3))
    for i, j in itertools.permutations(range(3), 2):
        hi, lo = probs.copy(), probs.copy()
        hi[j], lo[j] = 1.0, 0.0
        J[i, j] = exact_gradient(game, hi, i) - exact_gradient(game, lo, i)
    return J


# ---------------------------------------------------------------------------
# Simultaneous ascent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicsConfig:
    learning_rate: float = 0.1
    n_steps: int = 10_000
    parameterization: str = LOGIT
    learners: tuple[int, ...] = (0, 1)
    stubborn_policy: float = 1.0
    tol: float = 1e-9

    def __post_init__(self):
        if not self.learners:
            raise ValueError("learner set must be non-empty")
        if self.parameterization not in (DIRECT, LOGIT):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrajectoryRecord:
    steps: np.ndarray
    policies: np.ndarray
    payoffs: np.ndarray
    converged: bool = False

    def __len__(self):
        return len(self.steps)

    @property
    def final_policy(self) -> np.ndarray:
        return self.policies[-1]

    @property
    def final_payoffs(self) -> np.ndarray:
        return self.payoffs[-1]

    def rows(self, run_id=0):
        for s, pol, pay in zip(self.steps, self.policies, self.payoffs):
            yield (run_id, int(s), *map(float, pol), *map(float, pay))


def _initial_probs(config: DynamicsConfig, init) -> np.ndarray:
    probs = np.array(_probs(init), dtype=float, copy=True)
    mask = np.zeros(3, dtype=bool)
    mask[list(config.learners)] = True
    probs[..., ~mask] = config.stubborn_policy
    if config.parameterization == LOGIT:
        lp = probs[..., mask]
        if np.any((lp <= 0.0) | (lp >= 1.0)):
            raise ValueError("logit parameterization needs learner probabilities strictly inside (0, 1)")
    return probs


def ascend(game: ThreePlayerGame, config: DynamicsConfig, inits, record_every: int | None = 1):
    """Run simultaneous ascent for a batch of initial policies.

    Returns ``(steps, history, converged)`` where ``history`` has shape
    ``(n_records, k, 3)``.  With ``record_every=None`` only the start and end
    states are kept.
    """
    probs = np.atleast_2d(_initial_probs(config, inits))
    learners = list(config.learners)
    theta = logit(probs[:, learners]) if config.parameterization == LOGIT else probs[:, learners].copy()
    steps, history = [0], [probs.copy()]
    converged = False
    for step in range(1, config.n_steps + 1):
        g = gradient_field(game, probs)[:, learners]
        if config.parameterization == LOGIT:
            p = probs[:, learners]
            delta = config.learning_rate * g * p * (1.0 - p)
            theta = theta + delta
            probs[:, learners] = expit(theta)
        else:
            new = np.clip(theta + config.learning_rate * g, 0.0, 1.0)
            delta = new - theta
            theta = new
            probs[:, learners] = theta
        converged = bool(np.max(np.abs(delta)) < config.tol)
        if (record_every and step % record_every == 0) or converged or step == config.n_steps:
            if steps[-1] != step:
                steps.append(step)
                history.append(probs.copy())
        if converged:
            break
    return np.array(steps), np.array(history), converged


def simulate_learning(game: ThreePlayerGame, config: DynamicsConfig, init,
                      record_every: int = 1) -> TrajectoryRecord:
    """Simultaneous policy-gradient ascent from a single initial policy.

    Non-learners are pinned to ``config.stubborn_policy``.  Under the logit
    parameterisation each learner ascends its logit, i.e. the two-action
    softmax policy gradient.  Iteration stops early once the largest parameter
    change falls below ``config.tol``.
    """
    steps, history, converged = ascend(game, config, init, record_every)
    policies = history[:, 0, :]
    return TrajectoryRecord(steps, policies, expected_payoffs(game, policies), converged)


def simulate_batch(game: ThreePlayerGame, config: DynamicsConfig, inits,
                   record_every: int = 1) -> list[TrajectoryRecord]:
    """Many independent runs advanced together; one record per initial policy.

    The batch stops once every run has settled, and a run counts as converged
    when its own next step would be below ``config.tol``.
    """
    steps, history, _ = ascend(game, config, inits, record_every)
    final = history[-1]
    learners = list(config.learners)
    step = config.learning_rate * gradient_field(game, final)[:, learners]
    if config.parameterization == LOGIT:
        p = final[:, learners]
        step = step * p * (1.0 - p)
    settled = np.max(np.abs(step), axis=1) < config.tol
    return [TrajectoryRecord(steps, history[:, k, :], expected_payoffs(game, history[:, k, :]),
                             bool(settled[k]))
            for k in range(history.shape[1])]


def final_policies(game: ThreePlayerGame, config: DynamicsConfig, inits) -> np.ndarray:
    """End states of many independent runs, shape (k, 3)."""
    _, history, _ = ascend(game, config, inits, record_every=None)
    return history[-1]


def phase_portrait(game: ThreePlayerGame, stubborn_policy: float = 1.0, n: int = 21):
    """Ascent field for learners 0 and 1 on an n x n grid with player 2 fixed."""
    rows = []
    for x, y in itertools.product(np.linspace(0, 1, n), repeat=2):
        g = gradient_field(game, [x, y, stubborn_policy])
        rows.append((float(x), float(y), float(stubborn_policy), float(g[0]), float(g[1])))
    return rows


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------

UNSTABLE = "unstable"
STABLE = "stable"
MARGINAL = "marginally stable"


@dataclass
class FixedPoint:
    # None marks a free coordinate of a one-parameter family
    pattern: tuple[float | None, float | None, float | None]
    stability: str
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def describe(self) -> str:
        coords = ", ".join("z" if v is None else f"{v:g}" for v in self.pattern)
        return f"({coords})"


def _classify(game, point, free, tol=1e-12) -> tuple[str, np.ndarray]:
    """Stability from the Jacobian on interior coordinates plus boundary push.

    A coordinate sitting on the boundary is attracting when the gradient
    pushes it outward (that is where a logit parameter runs off to infinity).
    """
    g = gradient_field(game, point)
    pinned = [i for i in range(3) if i not in free]
    for i in pinned:
        outward = g[i] if point[i] >= 1.0 else -g[i]
        if outward < -tol:
            return UNSTABLE, np.zeros(0)
    eig = np.linalg.eigvals(field_jacobian(game, point)[np.ix_(free, free)]) if free else np.zeros(0)
    if np.any(eig.real > tol):
        return UNSTABLE, eig
    boundary_marginal = any(abs(g[i]) <= tol for i in pinned)
    if np.any(np.abs(eig.real) <= tol) or boundary_marginal:
        return MARGINAL, eig
    return STABLE, eig


def fixed_point_report(game: ThreePlayerGame, mode: str = "analytic") -> list[FixedPoint]:
    """Fixed points of three-learner simultaneous ascent and their stability.

    ``analytic`` mode knows the closed-form fixed-point set of Odd One Out: the
    centre and the ``(1, 0, z)`` family with its permutations.  ``numeric``
    mode works for any game by solving the gradient equations on every face
    of the unit cube.
    """
    if mode == "numeric":
        return _numeric_fixed_points(game)
    if mode != "analytic":
        raise ValueError(f"unknown mode {mode!r}")
    if not game.is_odd_one_out:
        raise UnsupportedGameError(
            f"no analytic fixed points for p={game.p}, q={game.q}; use mode='numeric'")
    centre = np.full(3, 0.5)
    label, eig = _classify(game, centre, [0, 1, 2])
    report = [FixedPoint((0.5, 0.5, 0.5), label, eig)]
    for perm in itertools.permutations(range(3)):
        pattern = [None, None, None]
        pattern[perm[0]], pattern[perm[1]] = 1.0, 0.0
        free = perm[2]
        # interior members of the family share one label; sample a few
        labels = set()
        for z in (0.25, 0.5, 0.75):
            point = np.array([z if v is None else v for v in pattern])
            labels.add(_classify(game, point, [free])[0])
        label = UNSTABLE if UNSTABLE in labels else (MARGINAL if MARGINAL in labels else STABLE)
        report.append(FixedPoint(tuple(pattern), label))
    return report


def _numeric_fixed_points(game, n_starts=7, tol=1e-9) -> list[FixedPoint]:
    found: list[FixedPoint] = []
    seen: list[np.ndarray] = []
    starts = np.linspace(0.05, 0.95, n_starts)
    for pinned_mask in itertools.product((None, 0.0, 1.0), repeat=3):
        free = [i for i, v in enumerate(pinned_mask) if v is None]
        base = np.array([0.0 if v is None else v for v in pinned_mask])
        candidates = []
        if not free:
            candidates.append(base.copy())
        else:
            for s in itertools.product(starts, repeat=len(free)):
                def residual(v):
                    pt = base.copy()
                    pt[free] = v
                    return gradient_field(game, pt)[free]
                sol = optimize.root(residual, np.array(s), tol=1e-13)
                if sol.success and np.all((sol.x > tol) & (sol.x < 1 - tol)):
                    pt = base.copy()
                    pt[free] = sol.x
                    if np.max(np.abs(residual(sol.x))) < 1e-10:
                        candidates.append(pt)
        for pt in candidates:
            if any(np.allclose(pt, s, atol=1e-6) for s in seen):
                continue
            g = gradient_field(game, pt)
            pinned = [i for i in range(3) if i not in free]
            if any((g[i] if pt[i] >= 1.0 else -g[i]) < -tol for i in pinned):
                continue  # gradient pulls it off the boundary
            seen.append(pt)
            label, eig = _classify(game, pt, free)
            found.append(FixedPoint(tuple(float(v) for v in pt), label, eig))
    return found


# ---------------------------------------------------------------------------
# Alliance optimum against a deterministic stubborn player
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AllianceOptimum:
    match_prob: float
    per_learner_value: float
    unique: bool = True


def joint_learner_return(game: ThreePlayerGame, stubborn_action: int, match_prob) -> np.ndarray:
    """Total payoff of players 0 and 1 when both match player 2 with ``match_prob``."""
    s = np.asarray(match_prob, dtype=float)
    x = s if stubborn_action == 0 else 1.0 - s
    pol = np.stack(np.broadcast_arrays(x, x, np.full_like(x, 1.0 - stubborn_action)), axis=-1)
    pay = expected_payoffs(game, pol)
    return pay[..., 0] + pay[..., 1]


def _quadratic_coefficients(game, stubborn_action):
    # J(s) = A s^2 + B s(1-s) + C (1-s)^2 with s the match probability
    a, d = stubborn_action, 1 - stubborn_action
    t = game.table
    A = t[a, a, a][:2].sum()
    B = t[a, d, a][:2].sum() + t[d, a, a][:2].sum()
    C = t[d, d, a][:2].sum()
    return A, B, C


def alliance_optimum(game: ThreePlayerGame, stubborn_prob: float = 1.0,
                     method: str = "closed-form") -> AllianceOptimum:
    """Best symmetric policy for the two non-stubborn players.

    The joint return is a quadratic in the shared match probability; the
    closed form compares the vertex with the endpoints.  ``method="numeric"``
    does a grid search followed by bounded refinement instead.
    """
    if stubborn_prob not in (0.0, 1.0):
        raise ValueError("the stubborn policy must be deterministic")
    action = 0 if stubborn_prob == 1.0 else 1
    if method == "numeric":
        grid = np.linspace(0.0, 1.0, 1001)
        vals = joint_learner_return(game, action, grid)
        k = int(np.argmax(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(lambda s: -joint_learner_return(game, action, s),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        s, v = (res.x, -res.fun) if -res.fun >= vals[k] else (grid[k], vals[k])
        unique = np.ptp(vals) > 1e-12
        return AllianceOptimum(float(s), float(v) / 2.0, bool(unique))
    if method != "closed-form":
        raise ValueError(f"unknown method {method!r}")
    A, B, C = _quadratic_coefficients(game, action)
    # J(s) = (A - B + C) s^2 + (B - 2C) s + C
    a2, a1, a0 = A - B + C, B - 2 * C, C
    candidates = [0.0, 1.0]
    if a2 < 0:
        vertex = -a1 / (2 * a2)
        if 0.0 < vertex < 1.0:
            candidates.append(vertex)
    values = [a2 * s * s + a1 * s + a0 for s in candidates]
    k = int(np.argmax(values))
    unique = not (abs(a2) < 1e-15 and abs(a1) < 1e-15)
    return AllianceOptimum(float(candidates[k]), float(values[k]) / 2.0, unique)
