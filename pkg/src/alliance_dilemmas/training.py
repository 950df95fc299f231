"""Multi-seed A2C training on Gifting and post-training analysis."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import contracts as ct
from .a2c import LossWeights, a2c_update
from .agents import CopyBot, LearningAgent
from .gifting import GiftingConfig
from .network import NetworkSpec, load_checkpoint, save_checkpoint
from .optim import RMSProp
from .rollout import EVAL, TRAIN, RolloutBatch, collect_episodes, get_scenario, obs_dim

log = logging.getLogger(__name__)

# per-scenario hyperparameters reported for the original experiments
PAPER_DEFAULTS = {
    "baseline": dict(learning_rate=0.000763, entropy_env=0.001443),
    "copybot": dict(learning_rate=0.000763, entropy_env=0.001443),
    "contracts-2": dict(learning_rate=0.000763, entropy_env=0.001443,
                        contract_weight=1.801635, entropy_contract=0.000534),
    "contracts-3": dict(learning_rate=0.000763, entropy_env=0.001443,
                        contract_weight=1.801635, entropy_contract=0.000534),
    "punishment": dict(learning_rate=0.002738, entropy_env=0.004006,
                       contract_weight=3.371262, entropy_contract=0.002278),
}
PAPER_DEFAULTS["contracts-2+1"] = PAPER_DEFAULTS["contracts-2"]

METRIC_COLUMNS = ("update", "agent", "mean_reward", "discard_rate", "gift_rate",
                  "contracts_signed_GG", "contracts_signed_NGNG", "contracts_signed_mixed",
                  "penalties")


@dataclass(frozen=True)
class TrainConfig:
    scenario: str = "baseline"
    gamma: float = 0.99
    learning_rate: float = 0.000763
    entropy_env: float = 0.001443
    entropy_contract: float = 0.000534
    contract_weight: float = 1.801635
    value_coef: float = 0.5
    episodes_per_update: int = 16
    n_updates: int = 1000
    n_seeds: int = 10
    seed: int = 0
    trunk: tuple[int, ...] = (128, 128)
    lstm: int = 128
    rms_decay: float = 0.99
    rms_epsilon: float = 0.001
    rms_momentum: float = 0.0
    max_grad_norm: float | None = None
    eval_every: int = 50
    eval_episodes: int = 64
    n_players: int = 3
    m_chips: int = 5
    observe_discards: bool = True
    observe_obligation: bool = True
    b: int = 6
    r_c: float = -1.0
    p_c: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("entropy_env", "entropy_contract", "contract_weight", "value_coef"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        get_scenario(self.scenario)

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> TrainConfig:
        base = dict(PAPER_DEFAULTS[get_scenario(scenario).name])
        base.update(overrides)
        return cls(scenario=scenario, **base)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.entropy_env, self.entropy_contract, self.contract_weight,
                           self.value_coef)

    @property
    def env(self) -> GiftingConfig:
        return GiftingConfig(self.n_players, self.m_chips, self.observe_discards)

    @property
    def contract_config(self) -> ct.ContractConfig | None:
        sc = get_scenario(self.scenario)
        if sc.contract_mode is None:
            return None
        return ct.ContractConfig(sc.contract_mode, self.b, self.r_c, self.p_c, sc.contracts)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def seed_list(config: TrainConfig) -> list[int]:
    return [config.seed + k for k in range(config.n_seeds)]


def network_spec(config: TrainConfig) -> NetworkSpec:
    sc = get_scenario(config.scenario)
    return NetworkSpec(obs_dim(config.env, sc.contract_mode, config.observe_obligation), config.n_players,
                       ct.offer_alphabet_size(config.n_players), tuple(config.trunk), config.lstm)


def build_agents(config: TrainConfig, rng: np.random.Generator) -> dict[int, object]:
    sc = get_scenario(config.scenario)
    spec = network_spec(config)
    bots = dict(sc.copy_bots)
    agents = {}
    for i in range(config.n_players):
        if i in bots:
            agents[i] = CopyBot(i, bots[i])
        else:
            agents[i] = LearningAgent.create(spec, rng, contracts=sc.contracts[i])
    return agents


def collect(config: TrainConfig, agents: dict[int, object], count: int, mode: str,
            rng: np.random.Generator, log_events: bool = False) -> RolloutBatch:
    return collect_episodes(config.env, get_scenario(config.scenario), agents, count, mode, rng,
                            config.contract_config, log_events, config.observe_obligation)


def batch_metrics(batch: RolloutBatch, update: int) -> list[dict]:
    """Per-agent averages over the episodes of one batch."""
    rows = []
    moves = batch.gifts + batch.discards
    for i in range(batch.payoffs.shape[1]):
        total = moves[:, i].sum()
        rows.append({
            "update": update,
            "agent": i,
            "mean_reward": float(batch.payoffs[:, i].mean()),
            "discard_rate": float(batch.discards[:, i].sum() / total),
            "gift_rate": float(batch.gifts[:, i].sum() / total),
            "contracts_signed_GG": float(batch.signed[:, i, 0].mean()),
            "contracts_signed_NGNG": float(batch.signed[:, i, 1].mean()),
            "contracts_signed_mixed": float(batch.signed[:, i, 2].mean()),
            "penalties": float(batch.penalties[:, i].mean()),
        })
    return rows


def two_way_draws(batch: RolloutBatch) -> int:
    return int(np.sum(np.isclose(batch.payoffs, 0.5).sum(axis=1) == 2))


@dataclass
class SeedResult:
    seed: int
    train_metrics: list[dict] = field(default_factory=list)
    eval_metrics: list[dict] = field(default_factory=list)
    # per eval point: number of two-way draws and episodes evaluated
    eval_draws: list[tuple[int, int, int]] = field(default_factory=list)
    # per training update: G-G / NG-NG signings per episode, summed over players / 2
    signings: list[tuple[int, float, float]] = field(default_factory=list)
    agents: dict[int, object] = field(default_factory=dict)

    def final_eval(self) -> list[dict]:
        last = max(r["update"] for r in self.eval_metrics)
        return [r for r in self.eval_metrics if r["update"] == last]


def run_seed(config: TrainConfig, seed: int, progress: bool = False) -> SeedResult:
    """Train one independent population from ``seed``."""
    rng = np.random.default_rng([seed, 1])
    eval_rng = np.random.default_rng([seed, 2])
    agents = build_agents(config, rng)
    learners = [i for i, a in agents.items() if isinstance(a, LearningAgent)]
    optims = {i: RMSProp(config.learning_rate, config.rms_decay, config.rms_epsilon,
                         config.rms_momentum) for i in learners}
    weights = config.loss_weights
    result = SeedResult(seed, agents=agents)

    def evaluate(update):
        batch = collect(config, agents, config.eval_episodes, EVAL, eval_rng)
        result.eval_metrics.extend(batch_metrics(batch, update))
        result.eval_draws.append((update, two_way_draws(batch), batch.n_episodes))

    for update in range(config.n_updates):
        if config.eval_every and update % config.eval_every == 0:
            evaluate(update)
        batch = collect(config, agents, config.episodes_per_update, TRAIN, rng)
        result.train_metrics.extend(batch_metrics(batch, update))
        gg = batch.signed[:, :, 0].sum() / 2 / batch.n_episodes
        ngng = batch.signed[:, :, 1].sum() / 2 / batch.n_episodes
        result.signings.append((update, float(gg), float(ngng)))
        for i in learners:
            a2c_update(agents[i].params, agents[i].spec, batch.trajectories[i], optims[i],
                       weights, config.gamma, config.max_grad_norm)
        if progress and update % 100 == 0:
            rewards = [round(r["mean_reward"], 3) for r in result.train_metrics[-len(agents):]]
            log.info("seed %d update %d rewards %s", seed, update, rewards)
    evaluate(config.n_updates)
    return result


def run_training(config: TrainConfig, progress: bool = False) -> list[SeedResult]:
    """Train ``config.n_seeds`` independent runs (serially, so runs are reproducible)."""
    return [run_seed(config, s, progress) for s in seed_list(config)]


def final_eval_rewards(results: list[SeedResult]) -> np.ndarray:
    """(n_seeds, n_players) mean eval reward at the last evaluation."""
    return np.array([[r["mean_reward"] for r in sorted(res.final_eval(), key=lambda r: r["agent"])]
                     for res in results])


def final_eval_gift_rates(results: list[SeedResult]) -> np.ndarray:
    return np.array([[r["gift_rate"] for r in sorted(res.final_eval(), key=lambda r: r["agent"])]
                     for res in results])


def confidence_band(values: np.ndarray, level: float = 0.95):
    """Mean and t-based confidence half-width over seeds (axis 0)."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    if len(values) < 2:
        return mean, np.zeros_like(mean)
    sem = values.std(axis=0, ddof=1) / np.sqrt(len(values))
    return mean, sem * stats.t.ppf(0.5 + level / 2, len(values) - 1)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def save_agents(directory, config: TrainConfig, result: SeedResult) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, agent in result.agents.items():
        if isinstance(agent, LearningAgent):
            path = directory / f"seed{result.seed}_agent{i}.json"
            save_checkpoint(path, agent.spec, agent.params,
                            {"agent": i, "contracts": agent.contracts, "seed": result.seed,
                             "config": asdict(config)})
            paths.append(path)
    return paths


def load_agents(paths, config: TrainConfig) -> dict[int, object]:
    """Rebuild a population from per-agent checkpoints; copy bots are recreated."""
    sc = get_scenario(config.scenario)
    agents: dict[int, object] = {b: CopyBot(b, t) for b, t in sc.copy_bots}
    for path in paths:
        spec, params, extra = load_checkpoint(path)
        agents[int(extra["agent"])] = LearningAgent(spec, params, bool(extra["contracts"]))
    missing = set(range(config.n_players)) - set(agents)
    if missing:
        raise ValueError(f"no checkpoint for players {sorted(missing)}")
    return agents


def config_from_checkpoint(path) -> TrainConfig:
    _, _, extra = load_checkpoint(path)
    raw = dict(extra["config"])
    raw["trunk"] = tuple(raw["trunk"])
    return TrainConfig(**raw)


# ---------------------------------------------------------------------------
# Chips-versus-contracts regression
# ---------------------------------------------------------------------------


class DegenerateRegression(ValueError):
    pass


@dataclass
class RegressionReport:
    slope: float
    intercept: float
    p_value: float
    records: list[tuple[int, int, int, int]]  # (episode, player, contracts, chips)


def ols(x, y) -> tuple[float, float, float]:
    """Slope, intercept and two-sided p-value of the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or np.ptp(x) == 0:
        raise DegenerateRegression("the regressor has no variance")
    res = stats.linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.pvalue)


def regression_report(agents: dict[int, object], config: TrainConfig, episodes: int = 50,
                      seed: int = 0) -> RegressionReport:
    """Evaluate a trained population and regress chips accrued on contracts signed."""
    rng = np.random.default_rng([seed, 3])
    batch = collect(config, agents, episodes, EVAL, rng)
    signed = batch.signed.sum(axis=2)
    records = [(b, p, int(signed[b, p]), int(batch.chips[b, p]))
               for b in range(batch.n_episodes) for p in range(batch.payoffs.shape[1])]
    x = [r[2] for r in records]
    y = [r[3] for r in records]
    slope, intercept, p = ols(x, y)
    return RegressionReport(slope, intercept, p, records)


# Settings that meet the outcome checks on one CPU core in about 25 minutes
# for all five scenarios together (five seeds each).
DESK_OVERRIDES = {
    "baseline": dict(learning_rate=0.003, n_updates=1000),
    "copybot": dict(learning_rate=0.003, n_updates=3000),
    "contracts-2": dict(learning_rate=0.003, n_updates=3000),
    "contracts-3": dict(learning_rate=0.003, n_updates=3000),
    "punishment": dict(n_updates=3000),
}
DESK_OVERRIDES["contracts-2+1"] = DESK_OVERRIDES["contracts-2"]


def desk_config(scenario: str, **overrides) -> TrainConfig:
    """Reduced widths, seed count and schedule for runs that must finish in minutes."""
    base = dict(trunk=(32, 32), lstm=32, n_seeds=5, eval_every=100)
    base.update(DESK_OVERRIDES[get_scenario(scenario).name])
    base.update(overrides)
    return TrainConfig.for_scenario(scenario, **base)


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    unknown = set(overrides) - TrainConfig.field_names()
    if unknown:
        raise ValueError(f"unknown training keys: {sorted(unknown)}")
    return replace(config, **overrides)
