"""Peer-to-peer contracts layered on top of Gifting.

Every timestep each contract-enabled player submits an offer naming a
partner, the action it promises and the action it asks of the partner.  Two
mirrored offers sign a contract.  Signed contracts are enforced either by
masking the parties' next actions (``binding``) or by a penalty for parties
that miss a deadline (``punishment``).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .gifting import GiftAction, GiftTo, action_to_code, code_to_action

BINDING = "binding"
PUNISHMENT = "punishment"

GG = "G-G"
NGNG = "NG-NG"
MIXED = "mixed"
CATEGORIES = (GG, NGNG, MIXED)


@dataclass(frozen=True)
class ContractOffer:
    partner: int
    promised: GiftAction
    requested: GiftAction


class OfferAlphabet:
    """Index codec for one player's offers; index 0 is "no offer".

    Offer index ``1 + ((k - 1) * A + promised) * A + requested`` where ``k`` is
    the partner's offset from the offering player and the two actions use the
    usual per-actor codes (promised relative to self, requested relative to the
    partner).
    """

    def __init__(self, n_players: int, player: int):
        self.n_players = n_players
        self.player = player
        self.n_actions = n_players
        self.size = (n_players - 1) * self.n_actions ** 2 + 1

    def __len__(self):
        return self.size

    def encode(self, offer: ContractOffer | None) -> int:
        if offer is None:
            return 0
        n, A = self.n_players, self.n_actions
        k = (offer.partner - self.player) % n
        if k == 0:
            raise ValueError("a player cannot contract with itself")
        promised = action_to_code(self.player, offer.promised, n)
        requested = action_to_code(offer.partner, offer.requested, n)
        return 1 + ((k - 1) * A + promised) * A + requested

    def decode(self, index: int) -> ContractOffer | None:
        if not 0 <= index < self.size:
            raise ValueError(f"offer index {index} out of range")
        if index == 0:
            return None
        n, A = self.n_players, self.n_actions
        k, rest = divmod(index - 1, A * A)
        promised, requested = divmod(rest, A)
        partner = (self.player + k + 1) % n
        return ContractOffer(partner, code_to_action(self.player, promised, n),
                             code_to_action(partner, requested, n))

    def offers(self):
        return [self.decode(i) for i in range(self.size)]


def offer_alphabet_size(n_players: int) -> int:
    return (n_players - 1) * n_players ** 2 + 1


@dataclass(frozen=True)
class ContractConfig:
    mode: str = BINDING
    b: int = 6
    r_c: float = -1.0
    p_c: float = 0.5
    enabled: tuple[bool, ...] = (True, True, True)

    def __post_init__(self):
        if self.mode not in (BINDING, PUNISHMENT):
            raise ValueError(f"unknown contract mode {self.mode!r}")
        if not 0.0 <= self.p_c <= 1.0:
            raise ValueError("p_c must lie in [0, 1]")
        if self.b < 1:
            raise ValueError("b must be at least 1")


@dataclass
class ActiveContract:
    parties: tuple[int, int]
    obligations: dict[int, GiftAction]
    signed_at: int
    deadline: int | None = None
    fulfilled: dict[int, bool] = field(default_factory=dict)
    offer_indices: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for p in self.parties:
            self.fulfilled.setdefault(p, False)

    @property
    def done(self) -> bool:
        return all(self.fulfilled.values())

    def category(self) -> str:
        i, j = self.parties
        gifts = [self.obligations[i] == GiftTo(j), self.obligations[j] == GiftTo(i)]
        if all(gifts):
            return GG
        if not any(gifts):
            return NGNG
        return MIXED


@dataclass
class ContractBook:
    active: list[ActiveContract] = field(default_factory=list)

    def contract_of(self, player: int) -> ActiveContract | None:
        for c in self.active:
            if player in c.parties:
                return c
        return None

    def is_free(self, player: int) -> bool:
        return self.contract_of(player) is None

    def copy(self) -> ContractBook:
        return ContractBook([
            ActiveContract(c.parties, dict(c.obligations), c.signed_at, c.deadline,
                           dict(c.fulfilled), c.offer_indices)
            for c in self.active])


@dataclass(frozen=True)
class ContractEvent:
    timestep: int
    event: str
    parties: tuple[int, ...]
    offer_index: int | None = None
    category: str | None = None

    def to_json(self) -> str:
        return json.dumps({"timestep": self.timestep, "event": self.event,
                           "parties": list(self.parties), "offer_index": self.offer_index,
                           "category": self.category})


def contract_category(obligations: dict[int, GiftAction], parties: tuple[int, int]) -> str:
    return ActiveContract(parties, obligations, 0).category()


def offers_match(i: int, offer_i: ContractOffer | None, j: int, offer_j: ContractOffer | None) -> bool:
    """Mirrored offers: each promises what the other requests."""
    if offer_i is None or offer_j is None:
        return False
    return (offer_i.partner == j and offer_j.partner == i
            and offer_i.promised == offer_j.requested
            and offer_i.requested == offer_j.promised)


def contract_phase(offers, book: ContractBook, rng: np.random.Generator, timestep: int,
                   config: ContractConfig = ContractConfig(),
                   eligible=None, alphabets=None) -> tuple[list[ActiveContract], ContractBook]:
    """Sign every matched pair of free players.

    ``offers[p]`` is player p's ``ContractOffer`` (or None).  Players already
    under contract, disabled players, and players outside ``eligible`` (used
    for players with no turns left) are skipped.  Overlapping matches are
    resolved by visiting candidate pairs in uniformly random order.
    """
    book = book.copy()
    n = len(offers)
    free = [p for p in range(n)
            if config.enabled[p] and book.is_free(p) and (eligible is None or eligible[p])]
    candidates = [(i, j) for i, j in itertools.combinations(free, 2)
                  if offers_match(i, offers[i], j, offers[j])]
    signed = []
    taken: set[int] = set()
    for k in rng.permutation(len(candidates)) if len(candidates) > 1 else range(len(candidates)):
        i, j = candidates[k]
        if i in taken or j in taken:
            continue
        taken.update((i, j))
        indices = (0, 0)
        if alphabets is not None:
            indices = (alphabets[i].encode(offers[i]), alphabets[j].encode(offers[j]))
        contract = ActiveContract(
            parties=(i, j),
            obligations={i: offers[i].promised, j: offers[j].promised},
            signed_at=timestep,
            deadline=timestep + config.b if config.mode == PUNISHMENT else None,
            offer_indices=indices,
        )
        book.active.append(contract)
        signed.append(contract)
    return signed, book


def binding_mask(book: ContractBook, player: int, legal_codes) -> np.ndarray:
    """Boolean mask over the player's action codes."""
    n = len(legal_codes)
    mask = np.asarray(legal_codes, dtype=bool).copy()
    contract = book.contract_of(player)
    if contract is not None and not contract.fulfilled[player]:
        only = action_to_code(player, contract.obligations[player], n)
        mask[:] = False
        mask[only] = True
    return mask


def resolve_binding(book: ContractBook, player: int, timestep: int) -> list[ContractEvent]:
    """Mark the player's obligation as executed; dissolve contracts both parties have executed."""
    events = []
    contract = book.contract_of(player)
    if contract is not None and not contract.fulfilled[player]:
        contract.fulfilled[player] = True
        events.append(ContractEvent(timestep, "fulfilled", (player,)))
        if contract.done:
            book.active.remove(contract)
    return events


def punishment_update(book: ContractBook, acted_player: int, action_taken: GiftAction,
                      timestep: int, config: ContractConfig, n_players: int,
                      terminal: bool = False):
    """Advance punishment-enforced contracts by one timestep.

    Returns ``(penalties, closed, events)``; ``penalties[p]`` is the reward
    added to player p at this timestep.  A contract covers the timesteps
    ``signed_at .. deadline - 1``; unfulfilled parties are penalised once the
    last of those has been played, or at the end of the episode.
    """
    penalties = np.zeros(n_players)
    closed, events = [], []
    contract = book.contract_of(acted_player)
    if (contract is not None and not contract.fulfilled[acted_player]
            and contract.obligations[acted_player] == action_taken
            and timestep < contract.deadline):
        contract.fulfilled[acted_player] = True
        events.append(ContractEvent(timestep, "fulfilled", (acted_player,)))
    for c in list(book.active):
        if c.done:
            book.active.remove(c)
            closed.append(c)
        elif terminal or timestep + 1 >= c.deadline:
            broken = tuple(p for p in c.parties if not c.fulfilled[p])
            for p in broken:
                penalties[p] += config.r_c
            events.append(ContractEvent(timestep, "broken", broken))
            events.append(ContractEvent(timestep, "penalized", broken))
            book.active.remove(c)
            closed.append(c)
    return penalties, closed, events


def trembling_hand_directive(book: ContractBook, free_players, rng: np.random.Generator,
                             n_players: int):
    """Pick a random free pair and a random mirrored offer pair between them.

    Returns None when fewer than two players are free, else
    ``((i, j), {i: offer_i, j: offer_j})``.
    """
    free = [p for p in free_players if book.is_free(p)]
    if len(free) < 2:
        return None
    pairs = list(itertools.combinations(free, 2))
    i, j = pairs[rng.integers(len(pairs))]
    a_i = code_to_action(i, int(rng.integers(n_players)), n_players)
    a_j = code_to_action(j, int(rng.integers(n_players)), n_players)
    return (i, j), {i: ContractOffer(j, a_i, a_j), j: ContractOffer(i, a_j, a_i)}


def apply_floor(probs: np.ndarray, forced_index: int, p_c: float) -> np.ndarray:
    """Mix a distribution with a point mass: (1 - p_c) * probs + p_c * delta."""
    out = (1.0 - p_c) * np.asarray(probs, dtype=float)
    out[..., forced_index] += p_c
    return out


def contract_observation(previous_offers, n_players: int, under_contract=None) -> np.ndarray:
    """One-hot of every player's previous offer index, plus optional contract flags.

    ``previous_offers`` is a sequence of offer indices, or None at the start
    of an episode (which yields an all-zero block).
    """
    size = offer_alphabet_size(n_players)
    block = np.zeros((n_players, size))
    if previous_offers is not None:
        block[np.arange(n_players), list(previous_offers)] = 1.0
    block = block.ravel()
    if under_contract is None:
        return block
    return np.concatenate([block, np.asarray(under_contract, dtype=float)])


def obligation_observation(book: ContractBook, player: int, n_players: int) -> np.ndarray:
    """One-hot over action codes of what the player still owes (all zero when nothing)."""
    owed = np.zeros(n_players)
    code = outstanding_obligation(book, player, n_players)
    if code is not None:
        owed[code] = 1.0
    return owed


def outstanding_obligation(book: ContractBook, player: int, n_players: int) -> int | None:
    """Action code the player still owes under its contract, if any."""
    contract = book.contract_of(player)
    if contract is None or contract.fulfilled[player]:
        return None
    return action_to_code(player, contract.obligations[player], n_players)


def contract_block_size(n_players: int, mode: str | None) -> int:
    size = n_players * offer_alphabet_size(n_players)
    return size + (n_players if mode == PUNISHMENT else 0)
