"""Symmetric two-action matrix games and alliance-dilemma detection.

The three-player family is indexed by two parameters ``p`` and ``q``.  Every
joint action pays out a unit total, so the games are constant-sum (and hence
strategically zero-sum).  Fixing one "stubborn" player's mixed policy reduces
the game to a symmetric 2x2 game between the remaining two, which may or may
not be a social dilemma.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

JointAction = tuple[int, int, int]

ODD_ONE_OUT = (1.0, 1.0)
MATCHING = (0.0, 0.0)
CONSTANT = (1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class TwoPlayerGame:
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        for m in (self.u1, self.u2):
            if np.shape(m) != (2, 2) or not np.all(np.isfinite(m)):
                raise ValueError("payoff matrices must be finite 2x2 arrays")


@dataclass(frozen=True)
class ThreePlayerGame:
    """The p-q parameterised symmetric constant-sum game.

    ``table[a0, a1, a2]`` holds the payoff triple for joint action
    ``(a0, a1, a2)``.
    """

    p: float
    q: float
    table: np.ndarray = field(repr=False, compare=False)

    def payoff(self, joint: JointAction) -> tuple[float, float, float]:
        return tuple(float(v) for v in self.table[joint])

    @property
    def is_odd_one_out(self) -> bool:
        return (self.p, self.q) == ODD_ONE_OUT

    @property
    def is_matching(self) -> bool:
        return (self.p, self.q) == MATCHING


def build_pq_game(p: float, q: float) -> ThreePlayerGame:
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"p and q must lie in [0, 1], got p={p}, q={q}")
    p, q = float(p), float(q)
    third = 1.0 / 3.0
    table = np.empty((2, 2, 2, 3))
    for joint in itertools.product((0, 1), repeat=3):
        ones = sum(joint)
        if ones in (0, 3):
            row = [third, third, third]
        elif ones == 1:
            # the lone action-1 player gets p, the pair split the rest
            row = [p if a == 1 else (1.0 - p) / 2.0 for a in joint]
        else:
            # the lone action-0 player gets q
            row = [q if a == 0 else (1.0 - q) / 2.0 for a in joint]
        table[joint] = row
    table.setflags(write=False)
    return ThreePlayerGame(p, q, table)


def odd_one_out() -> ThreePlayerGame:
    return build_pq_game(*ODD_ONE_OUT)


def matching() -> ThreePlayerGame:
    return build_pq_game(*MATCHING)


def named_game(name: str) -> ThreePlayerGame:
    games = {"odd-one-out": odd_one_out, "matching": matching,
             "constant": lambda: build_pq_game(*CONSTANT)}
    try:
        return games[name]()
    except KeyError:
        raise ValueError(f"unknown game {name!r}; choose from {sorted(games)}") from None


# ---------------------------------------------------------------------------
# Reduction to two players
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedGame:
    """Symmetric 2x2 game; ``u[a_self, a_other]`` is the row player's payoff."""

    u: np.ndarray
    stubborn_prob: float

    def row_payoff(self, a: int, b: int) -> float:
        return float(self.u[a, b])

    def col_payoff(self, a: int, b: int) -> float:
        # by symmetry the column player at (a, b) is the row player at (b, a)
        return float(self.u[b, a])


def reduce_two_player(game: ThreePlayerGame, stubborn_player: int,
                      stubborn_prob: float) -> ReducedGame:
    """Average out the stubborn player's action.

    ``stubborn_prob`` is the probability that the stubborn player takes
    action 0.  The two remaining players keep their relative order.
    """
    if stubborn_player not in (0, 1, 2):
        raise ValueError(f"stubborn_player must be 0, 1 or 2, got {stubborn_player}")
    if not 0.0 <= stubborn_prob <= 1.0:
        raise ValueError(f"stubborn_prob must lie in [0, 1], got {stubborn_prob}")
    learners = [i for i in range(3) if i != stubborn_player]
    me = learners[0]
    u = np.zeros((2, 2))
    for a, b in itertools.product((0, 1), repeat=2):
        for s, weight in ((0, stubborn_prob), (1, 1.0 - stubborn_prob)):
            joint = [0, 0, 0]
            joint[learners[0]], joint[learners[1]], joint[stubborn_player] = a, b, s
            u[a, b] += weight * game.table[tuple(joint)][me]
    return ReducedGame(u, float(stubborn_prob))


# ---------------------------------------------------------------------------
# Social-dilemma classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DilemmaPayoffs:
    R: float
    S: float
    T: float
    P: float
    cooperate_action: int = 0

    @classmethod
    def from_reduced(cls, reduced: ReducedGame, cooperate_action: int) -> DilemmaPayoffs:
        c, d = cooperate_action, 1 - cooperate_action
        u = reduced.u
        return cls(R=float(u[c, c]), S=float(u[c, d]), T=float(u[d, c]),
                   P=float(u[d, d]), cooperate_action=cooperate_action)


@dataclass(frozen=True)
class DilemmaClassification:
    is_dilemma: bool
    greed: bool
    fear: bool
    strict: bool


def classify(payoffs: DilemmaPayoffs) -> DilemmaClassification:
    R, S, T, P = payoffs.R, payoffs.S, payoffs.T, payoffs.P
    greed = T > R
    fear = P > S
    is_dilemma = R > P and R > S and (greed or fear)
    strict = is_dilemma and 2 * R > T + S
    return DilemmaClassification(is_dilemma, greed, fear, strict)


@dataclass(frozen=True)
class GridpointResult:
    stubborn_prob: float
    by_labeling: tuple[DilemmaClassification, DilemmaClassification]

    @property
    def has_dilemma(self) -> bool:
        return any(c.is_dilemma for c in self.by_labeling)

    @property
    def has_strict(self) -> bool:
        return any(c.strict for c in self.by_labeling)


@dataclass(frozen=True)
class AllianceDilemmaReport:
    gridpoints: tuple[GridpointResult, ...]

    @property
    def has_dilemma(self) -> bool:
        return any(g.has_dilemma for g in self.gridpoints)

    @property
    def has_strict_dilemma(self) -> bool:
        return any(g.has_strict for g in self.gridpoints)


def stubborn_grid(grid_step: float = 0.1) -> np.ndarray:
    n = round(1.0 / grid_step)
    if n < 1 or abs(n * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid_step must divide 1 evenly, got {grid_step}")
    return np.arange(n + 1) / n


def detect_alliance_dilemma(game: ThreePlayerGame, grid_step: float = 0.1,
                            stubborn_player: int = 2) -> AllianceDilemmaReport:
    points = []
    for s in stubborn_grid(grid_step):
        reduced = reduce_two_player(game, stubborn_player, float(s))
        labelings = tuple(classify(DilemmaPayoffs.from_reduced(reduced, c)) for c in (0, 1))
        points.append(GridpointResult(float(s), labelings))
    return AllianceDilemmaReport(tuple(points))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def game_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per game index, so any split of the loop agrees."""
    return np.random.default_rng([seed, index])


@dataclass
class CountingRecord:
    game_index: int
    p: float
    q: float
    has_dilemma: bool
    has_strict: bool
    dilemma_gridpoints: tuple[float, ...]


@dataclass
class CountingSummary:
    records: list[CountingRecord]
    grid: np.ndarray
    # games with a dilemma at each stubborn-probability gridpoint
    games_per_gridpoint: np.ndarray
    # distribution of the number of dilemma gridpoints per game
    gridpoints_per_game: np.ndarray

    @property
    def n_games(self) -> int:
        return len(self.records)

    @property
    def dilemma_fraction(self) -> float:
        return sum(r.has_dilemma for r in self.records) / self.n_games

    @property
    def strict_fraction_of_games(self) -> float:
        return sum(r.has_strict for r in self.records) / self.n_games

    @property
    def strict_fraction_of_dilemmas(self) -> float:
        n_dilemma = sum(r.has_dilemma for r in self.records)
        if n_dilemma == 0:
            return float("nan")
        return sum(r.has_strict for r in self.records) / n_dilemma


def run_counting_experiment(n_games: int = 1000, seed: int = 0,
                            grid_step: float = 0.1) -> CountingSummary:
    if n_games < 1:
        raise ValueError("n_games must be at least 1")
    grid = stubborn_grid(grid_step)
    per_point = np.zeros(len(grid), dtype=int)
    per_game = np.zeros(len(grid) + 1, dtype=int)
    records = []
    for i in range(n_games):
        p, q = game_rng(seed, i).random(2)
        report = detect_alliance_dilemma(build_pq_game(p, q), grid_step)
        hits = [g.has_dilemma for g in report.gridpoints]
        per_point += hits
        per_game[sum(hits)] += 1
        records.append(CountingRecord(
            game_index=i, p=float(p), q=float(q),
            has_dilemma=report.has_dilemma, has_strict=report.has_strict_dilemma,
            dilemma_gridpoints=tuple(g.stubborn_prob for g in report.gridpoints if g.has_dilemma),
        ))
    return CountingSummary(records, grid, per_point, per_game)


def epsilon_of_game(game: TwoPlayerGame) -> float:
    """Smallest epsilon for which all outcome payoff-sums lie within epsilon."""
    sums = np.asarray(game.u1) + np.asarray(game.u2)
    return float(sums.max() - sums.min())


def sample_two_player_game(rng: np.random.Generator) -> TwoPlayerGame:
    u = rng.random((2, 2, 2))
    return TwoPlayerGame(u[0], u[1])


@dataclass
class EpsilonHistogram:
    edges: np.ndarray
    counts: np.ndarray
    epsilons: np.ndarray

    def rows(self):
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            yield float(lo), float(hi), int(c)


def run_epsilon_histogram(n_games: int = 1000, n_bins: int = 20,
                          seed: int = 0) -> EpsilonHistogram:
    if n_games < 1 or n_bins < 2:
        raise ValueError("need n_games >= 1 and n_bins >= 2")
    eps = np.array([epsilon_of_game(sample_two_player_game(game_rng(seed, i)))
                    for i in range(n_games)])
    counts, edges = np.histogram(eps, bins=n_bins, range=(0.0, 2.0))
    return EpsilonHistogram(edges, counts, eps)


def is_unimodal(counts, tolerance_bins: int = 2) -> bool:
    """Unimodality after a moving average over +-tolerance_bins bins."""
    counts = np.asarray(counts, dtype=float)
    width = 2 * tolerance_bins + 1
    padded = np.pad(counts, tolerance_bins, mode="edge")
    smooth = np.convolve(padded, np.ones(width) / width, mode="valid")
    peak = int(np.argmax(smooth))
    slack = 1e-9 * max(float(smooth.max()), 1.0)  # equal neighbours may differ by rounding
    rising = np.all(np.diff(smooth[: peak + 1]) >= -slack)
    falling = np.all(np.diff(smooth[peak:]) <= slack)
    return bool(rising and falling)
