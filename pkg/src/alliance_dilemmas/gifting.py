"""The Gifting game.

Each of ``n`` players starts with ``m`` chips of their own colour.  Seats are
visited round-robin; on its turn a player takes one own-colour chip and
either gifts it to another player or discards it.  After ``n * m`` turns the
players holding the most chips share a unit payoff.

Actions are encoded per actor: code 0 is a discard and code ``k`` in
``1..n-1`` gifts to player ``(actor + k) % n``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np


class EpisodeOver(RuntimeError):
    pass


class IllegalAction(ValueError):
    pass


@dataclass(frozen=True)
class Discard:
    def __str__(self):
        return "discard"


@dataclass(frozen=True)
class GiftTo:
    recipient: int

    def __str__(self):
        return f"gift->{self.recipient}"


DISCARD = Discard()
GiftAction = Discard | GiftTo


def action_to_code(actor: int, action: GiftAction, n_players: int) -> int:
    if isinstance(action, Discard):
        return 0
    offset = (action.recipient - actor) % n_players
    if offset == 0 or not 0 <= action.recipient < n_players:
        raise IllegalAction(f"player {actor} cannot gift to {action.recipient}")
    return offset


def code_to_action(actor: int, code: int, n_players: int) -> GiftAction:
    if not 0 <= code < n_players:
        raise IllegalAction(f"action code {code} out of range")
    return DISCARD if code == 0 else GiftTo((actor + code) % n_players)


@dataclass(frozen=True)
class GiftingConfig:
    n_players: int = 3
    m_chips: int = 5
    observe_discards: bool = True

    def __post_init__(self):
        if self.n_players < 2 or self.m_chips < 1:
            raise ValueError("need n_players >= 2 and m_chips >= 1")

    @property
    def episode_length(self) -> int:
        return self.n_players * self.m_chips

    @property
    def n_actions(self) -> int:
        return self.n_players


@dataclass(frozen=True)
class GiftingState:
    config: GiftingConfig
    own_remaining: tuple[int, ...]
    # holdings[h][c]: chips of colour c held by player h
    holdings: tuple[tuple[int, ...], ...]
    discarded: tuple[int, ...]
    turn: int
    # seat_of[player] is the seat that player occupies this episode
    seat_of: tuple[int, ...]

    @property
    def terminal(self) -> bool:
        return self.turn >= self.config.episode_length

    def occupant(self, seat: int) -> int:
        return self.seat_of.index(seat)

    def chip_totals(self) -> np.ndarray:
        return np.asarray(self.holdings).sum(axis=1)


def reset(config: GiftingConfig = GiftingConfig(), seed=None) -> GiftingState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, m = config.n_players, config.m_chips
    return GiftingState(
        config=config,
        own_remaining=(m,) * n,
        holdings=((0,) * n,) * n,
        discarded=(0,) * n,
        turn=0,
        seat_of=tuple(int(s) for s in rng.permutation(n)),
    )


def current_player(state: GiftingState) -> int:
    if state.terminal:
        raise EpisodeOver("the episode is over")
    return state.occupant(state.turn % state.config.n_players)


def legal_actions(state: GiftingState, player: int) -> list[GiftAction]:
    if state.terminal:
        return []
    if player != current_player(state):
        raise IllegalAction(f"it is not player {player}'s turn")
    if state.own_remaining[player] == 0:
        return []
    n = state.config.n_players
    return [code_to_action(player, k, n) for k in range(n)]


def step(state: GiftingState, action: GiftAction) -> GiftingState:
    player = current_player(state)
    if action not in legal_actions(state, player):
        raise IllegalAction(f"{action} is not legal for player {player}")
    own = list(state.own_remaining)
    own[player] -= 1
    discarded = list(state.discarded)
    holdings = [list(row) for row in state.holdings]
    if isinstance(action, Discard):
        discarded[player] += 1
    else:
        holdings[action.recipient][player] += 1
    return replace(state, own_remaining=tuple(own), discarded=tuple(discarded),
                   holdings=tuple(map(tuple, holdings)), turn=state.turn + 1)


@dataclass(frozen=True)
class EpisodeResult:
    payoffs: tuple[float, ...]
    winners: frozenset[int]


def payoffs_from_totals(totals) -> EpisodeResult:
    totals = np.asarray(totals)
    winners = frozenset(int(i) for i in np.flatnonzero(totals == totals.max()))
    share = 1.0 / len(winners)
    return EpisodeResult(tuple(share if i in winners else 0.0 for i in range(len(totals))), winners)


def score(state: GiftingState) -> EpisodeResult:
    if not state.terminal:
        raise EpisodeOver("score is only defined for terminal states")
    return payoffs_from_totals(state.chip_totals())


def observation_size(config: GiftingConfig, contract_dim: int = 0) -> int:
    n = config.n_players
    return n * n + 4 * n + 1 + contract_dim


def observation(state: GiftingState, player: int, contract_block=None,
                contract_dim: int = 0) -> np.ndarray:
    """Feature vector for ``player``.

    Layout: holdings (n*n), own remaining (n), discarded (n), current seat
    one-hot (n), own seat one-hot (n), turn fraction (1), contract block.
    Chip counts are divided by ``m``.
    """
    cfg = state.config
    n, m = cfg.n_players, cfg.m_chips
    current = np.zeros(n)
    if not state.terminal:
        current[state.turn % n] = 1.0
    own_seat = np.zeros(n)
    own_seat[state.seat_of[player]] = 1.0
    discarded = np.asarray(state.discarded, dtype=float) / m
    if not cfg.observe_discards:
        discarded = np.zeros(n)
    if contract_block is None:
        contract_block = np.zeros(contract_dim)
    return np.concatenate([
        np.asarray(state.holdings, dtype=float).ravel() / m,
        np.asarray(state.own_remaining, dtype=float) / m,
        discarded,
        current,
        own_seat,
        [state.turn / cfg.episode_length],
        np.asarray(contract_block, dtype=float),
    ])


# ---------------------------------------------------------------------------
# Episode logs
# ---------------------------------------------------------------------------


def step_record(state: GiftingState, player: int, action: GiftAction) -> dict:
    return {"turn": state.turn, "seat": state.seat_of[player], "player": player,
            "action": str(action), "holdings": [list(r) for r in state.holdings]}


def terminal_record(result: EpisodeResult) -> dict:
    return {"payoffs": list(result.payoffs), "winners": sorted(result.winners)}


def play_episode(config: GiftingConfig, policies, seed=None, log=None) -> tuple[GiftingState, EpisodeResult]:
    """Roll out one episode; ``policies[p](state)`` returns player p's action."""
    state = reset(config, seed)
    while not state.terminal:
        p = current_player(state)
        action = policies[p](state)
        if log is not None:
            log.write(json.dumps(step_record(state, p, action)) + "\n")
        state = step(state, action)
    result = score(state)
    if log is not None:
        log.write(json.dumps(terminal_record(result)) + "\n")
    return state, result


# ---------------------------------------------------------------------------
# Equilibrium checks
# ---------------------------------------------------------------------------


def best_deviation_value(state: GiftingState, deviator: int) -> float:
    """Highest payoff ``deviator`` can secure while everyone else discards.

    Exhaustive search over the deviator's remaining action sequences.
    """
    n = state.config.n_players

    @lru_cache(maxsize=None)
    def search(holdings, turn):
        if turn >= state.config.episode_length:
            totals = np.asarray(holdings).sum(axis=1)
            return payoffs_from_totals(totals).payoffs[deviator]
        mover = state.seat_of.index(turn % n)
        if mover != deviator:
            return search(holdings, turn + 1)
        best = search(holdings, turn + 1)  # discard
        for k in range(1, n):
            r = (deviator + k) % n
            h = [list(row) for row in holdings]
            h[r][deviator] += 1
            best = max(best, search(tuple(map(tuple, h)), turn + 1))
        return best

    return search(state.holdings, state.turn)


def all_discard_value(state: GiftingState, player: int) -> float:
    return payoffs_from_totals(state.chip_totals()).payoffs[player]


def reachable_states(config: GiftingConfig, seat_of: tuple[int, ...]):
    """Every state reachable from the start under the given seating."""
    n = config.n_players
    start = GiftingState(config, (config.m_chips,) * n, ((0,) * n,) * n, (0,) * n, 0, seat_of)
    frontier = [start]
    seen = {(start.holdings, start.discarded, 0)}
    while frontier:
        state = frontier.pop()
        yield state
        if state.terminal:
            continue
        p = current_player(state)
        for a in legal_actions(state, p):
            nxt = step(state, a)
            key = (nxt.holdings, nxt.discarded, nxt.turn)
            if key not in seen:
                seen.add(key)
                frontier.append(nxt)


def profitable_deviations(config: GiftingConfig, states=None) -> list[tuple[GiftingState, int, float]]:
    """Subgames where a unilateral deviation from all-discard pays off.

    Defaults to every reachable state under every seating, which is
    tractable for small ``m``.
    """
    if states is None:
        states = itertools.chain.from_iterable(
            reachable_states(config, tuple(int(s) for s in perm))
            for perm in itertools.permutations(range(config.n_players)))
    found = []
    for state in states:
        for d in range(config.n_players):
            gain = best_deviation_value(state, d) - all_discard_value(state, d)
            if gain > 1e-12:
                found.append((state, d, gain))
    return found
