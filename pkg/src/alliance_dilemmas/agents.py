"""Learnable and scripted Gifting agents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gifting import DISCARD, Discard, GiftAction, GiftTo
from .network import NetworkSpec, Params, init_params


@dataclass
class LearningAgent:
    """A network-backed agent; ``contracts`` toggles use of its contract head."""

    spec: NetworkSpec
    params: Params
    contracts: bool = False

    @classmethod
    def create(cls, spec: NetworkSpec, rng: np.random.Generator, contracts: bool = False):
        return cls(spec, init_params(spec, rng), contracts)


def stubborn_act(prob: float, rng: np.random.Generator) -> int:
    """Action 0 with probability ``prob``, else action 1."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")
    if prob in (0.0, 1.0):
        return 0 if prob == 1.0 else 1
    return 0 if rng.random() < prob else 1


def copy_bot_act(last_target_action: GiftAction | None, bot: int, target: int) -> GiftAction:
    """Mirror the target's last move, returning gifts aimed at the bot.

    A gift to the bot becomes a gift back to the target; a gift to some third
    player is copied as is; a discard (or no move yet) is a discard.
    """
    if last_target_action is None or isinstance(last_target_action, Discard):
        return DISCARD
    if last_target_action.recipient == bot:
        return GiftTo(target)
    return GiftTo(last_target_action.recipient)


@dataclass
class CopyBot:
    bot: int
    target: int
    last_target_action: GiftAction | None = field(default=None)

    def observe(self, player: int, action: GiftAction) -> None:
        if player == self.target:
            self.last_target_action = action

    def act(self) -> GiftAction:
        return copy_bot_act(self.last_target_action, self.bot, self.target)

    def reset(self) -> None:
        self.last_target_action = None


@dataclass
class RandomAgent:
    player: int
    n_players: int

    def act(self, rng: np.random.Generator) -> GiftAction:
        k = int(rng.integers(self.n_players))
        return DISCARD if k == 0 else GiftTo((self.player + k) % self.n_players)
