"""Batched Gifting rollouts with the contract channel.

Episodes in a batch advance in lockstep (every episode has exactly ``n * m``
turns), so each learning agent runs one batched network step per timestep.
The chip bookkeeping is vectorised; contract books are kept per episode.

Order of a timestep:

1. every agent observes the state and last timestep's offers,
2. contract-enabled agents submit offers (trembling hand applied in training),
3. matched pairs sign contracts,
4. the current player acts, masked by any binding obligation,
5. contracts are resolved or penalised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contracts as ct
from .a2c import AgentTrajectory
from .agents import CopyBot, LearningAgent, copy_bot_act
from .gifting import GiftingConfig, action_to_code, code_to_action, payoffs_from_totals
from .network import core_step, initial_memory, masked_softmax

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class Scenario:
    name: str
    contract_mode: str | None = None
    contracts: tuple[bool, ...] = (False, False, False)
    # bot slot -> target player it copies
    copy_bots: tuple[tuple[int, int], ...] = ()
    trembling: bool = False

    @property
    def learners(self) -> list[int]:
        bots = {b for b, _ in self.copy_bots}
        return [i for i in range(len(self.contracts)) if i not in bots]


SCENARIOS = {
    "baseline": Scenario("baseline"),
    "copybot": Scenario("copybot", copy_bots=((1, 0),)),
    "contracts-2": Scenario("contracts-2", ct.BINDING, (True, True, False)),
    "contracts-3": Scenario("contracts-3", ct.BINDING, (True, True, True)),
    "punishment": Scenario("punishment", ct.PUNISHMENT, (True, True, True), trembling=True),
}
SCENARIOS["contracts-2+1"] = SCENARIOS["contracts-2"]


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def obs_dim(env: GiftingConfig, contract_mode: str | None, observe_obligation: bool = True) -> int:
    n = env.n_players
    extra = n if contract_mode == ct.PUNISHMENT and observe_obligation else 0
    return n * n + 4 * n + 1 + ct.contract_block_size(n, contract_mode) + extra


@dataclass
class RolloutBatch:
    trajectories: dict[int, AgentTrajectory]
    payoffs: np.ndarray  # (B, n) environment payoffs
    penalties: np.ndarray  # (B, n) summed contract penalties
    chips: np.ndarray  # (B, n) chips held at the end
    gifts: np.ndarray  # (B, n) chips each player gifted
    discards: np.ndarray  # (B, n)
    signed: np.ndarray  # (B, n, 3) contracts signed per party and category
    forced: int = 0
    events: list[list[ct.ContractEvent]] = field(default_factory=list)

    @property
    def n_episodes(self) -> int:
        return self.payoffs.shape[0]


def _sample(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])[:, None] * cum[:, -1:]
    return np.minimum((u >= cum).sum(axis=-1), probs.shape[-1] - 1)


def collect_episodes(env: GiftingConfig, scenario: Scenario, agents: dict[int, object],
                     count: int, mode: str, rng: np.random.Generator,
                     contract_config: ct.ContractConfig | None = None,
                     log_events: bool = False, observe_obligation: bool = True) -> RolloutBatch:
    """Roll out ``count`` episodes.

    ``agents`` maps every player to a ``LearningAgent`` or ``CopyBot``.  In
    ``eval`` mode no trembling-hand directives are issued.  In punishment
    mode ``observe_obligation`` appends a one-hot of the action each agent
    still owes under its open contract.
    """
    n, m = env.n_players, env.m_chips
    T, B, A = n * m, count, n
    C = ct.offer_alphabet_size(n)
    cmode = scenario.contract_mode
    ccfg = None
    if cmode is not None:
        ccfg = contract_config or ct.ContractConfig(mode=cmode)
        ccfg = ct.ContractConfig(cmode, ccfg.b, ccfg.r_c, ccfg.p_c, scenario.contracts)
    alphabets = [ct.OfferAlphabet(n, i) for i in range(n)]
    decoded = [a.offers() for a in alphabets]
    trembling = scenario.trembling and mode == TRAIN and ccfg is not None
    learners = [i for i, a in agents.items() if isinstance(a, LearningAgent)]
    bots = {i: a for i, a in agents.items() if isinstance(a, CopyBot)}

    seat_of = np.stack([rng.permutation(n) for _ in range(B)])
    player_at = np.argsort(seat_of, axis=1)
    holdings = np.zeros((B, n, n), dtype=int)
    own = np.full((B, n), m, dtype=int)
    disc = np.zeros((B, n), dtype=int)
    prev_offers = None
    under = np.zeros((B, n))
    owed = np.zeros((B, n, n))  # [episode, player, action code]
    books = [ct.ContractBook() for _ in range(B)]
    last_target = {i: [None] * B for i in bots}

    d = obs_dim(env, cmode, observe_obligation)
    memories = {i: initial_memory(agents[i].spec, B) for i in learners}
    traj = {i: AgentTrajectory(
        obs=np.zeros((T, B, d)), env_actions=np.zeros((T, B), dtype=int),
        env_masks=np.ones((T, B, A), dtype=bool), env_active=np.zeros((T, B), dtype=bool),
        contract_actions=np.zeros((T, B), dtype=int), contract_forced=np.full((T, B), -1),
        rewards=np.zeros((T, B)), contract_enabled=bool(ccfg and ccfg.enabled[i] and agents[i].contracts),
        p_c=ccfg.p_c if trembling else 0.0) for i in learners}
    penalties = np.zeros((B, n))
    gifts = np.zeros((B, n), dtype=int)
    signed_counts = np.zeros((B, n, 3), dtype=int)
    forced_total = 0
    events = [[] for _ in range(B)]
    rows = np.arange(B)
    cat_index = {c: k for k, c in enumerate(ct.CATEGORIES)}

    for t in range(T):
        seat = t % n
        actor = player_at[:, seat]
        current = np.zeros((B, n))
        current[:, seat] = 1.0
        cblock = np.zeros((B, n * C))
        if prev_offers is not None:
            cblock.reshape(B, n, C)[rows[:, None], np.arange(n)[None, :], prev_offers] = 1.0
        if cmode == ct.PUNISHMENT:
            cblock = np.concatenate([cblock, under], axis=1)
        disc_obs = disc / m if env.observe_discards else np.zeros((B, n))
        shared = [holdings.reshape(B, n * n) / m, own / m, disc_obs, current]
        tail = [np.full((B, 1), t / T), cblock]
        punish = cmode == ct.PUNISHMENT and observe_obligation

        env_logits, con_logits = {}, {}
        for i in learners:
            own_seat = np.zeros((B, n))
            own_seat[rows, seat_of[:, i]] = 1.0
            extra = [owed[:, i]] if punish else []
            obs = np.concatenate(shared + [own_seat] + tail + extra, axis=1)
            traj[i].obs[t] = obs
            e, k, _, memories[i] = core_step(agents[i].params, agents[i].spec, memories[i], obs)
            env_logits[i], con_logits[i] = e, k

        # contract channel
        offers_idx = np.zeros((B, n), dtype=int)
        if ccfg is not None:
            can_act = own > 0
            forced = np.full((B, n), -1)
            if trembling:
                for b in range(B):
                    free = [p for p in range(n) if ccfg.enabled[p] and can_act[b, p]]
                    directive = ct.trembling_hand_directive(books[b], free, rng, n)
                    if directive is not None:
                        forced_total += 1
                        (i, j), forced_offers = directive
                        forced[b, i] = alphabets[i].encode(forced_offers[i])
                        forced[b, j] = alphabets[j].encode(forced_offers[j])
                        if log_events:
                            events[b].append(ct.ContractEvent(t, "forced", (i, j), int(forced[b, i])))
            for i in learners:
                if not traj[i].contract_enabled:
                    continue
                probs = masked_softmax(con_logits[i])
                f = forced[:, i]
                hit = f >= 0
                if hit.any():
                    probs[hit] *= 1.0 - ccfg.p_c
                    probs[hit, f[hit]] += ccfg.p_c
                offers_idx[:, i] = _sample(probs, rng)
                traj[i].contract_actions[t] = offers_idx[:, i]
                traj[i].contract_forced[t] = f
            for b in range(B):
                if not offers_idx[b].any():
                    continue
                offers = [decoded[p][offers_idx[b, p]] for p in range(n)]
                if log_events:
                    for p in range(n):
                        if offers_idx[b, p]:
                            events[b].append(ct.ContractEvent(t, "offered", (p,), int(offers_idx[b, p])))
                signed, books[b] = ct.contract_phase(offers, books[b], rng, t, ccfg,
                                                     eligible=can_act[b], alphabets=alphabets)
                for c in signed:
                    cat = c.category()
                    for p in c.parties:
                        signed_counts[b, p, cat_index[cat]] += 1
                    if log_events:
                        events[b].append(ct.ContractEvent(t, "signed", c.parties, c.offer_indices[0], cat))

        # environment action
        codes = np.zeros(B, dtype=int)
        for i in learners:
            sel = np.flatnonzero(actor == i)
            if sel.size == 0:
                continue
            mask = np.ones((sel.size, A), dtype=bool)
            if ccfg is not None and ccfg.mode == ct.BINDING:
                for r, b in enumerate(sel):
                    mask[r] = ct.binding_mask(books[b], i, mask[r])
            probs = masked_softmax(env_logits[i][sel], mask)
            codes[sel] = _sample(probs, rng)
            traj[i].env_masks[t, sel] = mask
            traj[i].env_actions[t, sel] = codes[sel]
            traj[i].env_active[t, sel] = True
        for i, bot in bots.items():
            for b in np.flatnonzero(actor == i):
                action = copy_bot_act(last_target[i][b], i, bot.target)
                codes[b] = action_to_code(i, action, n)

        # apply the moves
        recipients = (actor + codes) % n
        gifting = codes > 0
        own[rows, actor] -= 1
        disc[rows[~gifting], actor[~gifting]] += 1
        holdings[rows[gifting], recipients[gifting], actor[gifting]] += 1
        gifts[rows[gifting], actor[gifting]] += 1
        for i, bot in bots.items():
            for b in np.flatnonzero(actor == bot.target):
                last_target[i][b] = code_to_action(bot.target, int(codes[b]), n)

        if ccfg is not None:
            terminal = t == T - 1
            for b in range(B):
                if not books[b].active:
                    continue
                a = int(actor[b])
                if ccfg.mode == ct.BINDING:
                    evs = ct.resolve_binding(books[b], a, t)
                else:
                    pen, _, evs = ct.punishment_update(
                        books[b], a, code_to_action(a, int(codes[b]), n), t, ccfg, n, terminal)
                    if pen.any():
                        penalties[b] += pen
                        for i in learners:
                            traj[i].rewards[t, b] += pen[i]
                if log_events:
                    events[b].extend(evs)
            under = np.array([[0.0 if books[b].is_free(p) else 1.0 for p in range(n)]
                              for b in range(B)])
            owed[:] = 0.0
            for b in range(B):
                for p in range(n):
                    code = ct.outstanding_obligation(books[b], p, n)
                    if code is not None:
                        owed[b, p, code] = 1.0
        prev_offers = offers_idx

    chips = holdings.sum(axis=2)
    payoffs = np.array([payoffs_from_totals(c).payoffs for c in chips])
    for i in learners:
        traj[i].rewards[T - 1] += payoffs[:, i]
    return RolloutBatch(traj, payoffs, penalties, chips, gifts, disc.copy(), signed_counts,
                        forced_total, events if log_events else [])
