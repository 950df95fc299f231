"""RMSProp with the squared-gradient epsilon inside the square root."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RMSProp:
    learning_rate: float
    decay: float = 0.99
    epsilon: float = 0.001
    momentum: float = 0.0
    mean_square: dict[str, np.ndarray] = field(default_factory=dict)
    moment: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update: acc <- d*acc + (1-d)*g^2; p <- p - lr*g/sqrt(acc + eps)."""
        for name, g in grads.items():
            acc = self.mean_square.get(name)
            if acc is None:
                acc = np.zeros_like(g)
            acc = self.decay * acc + (1.0 - self.decay) * g * g
            self.mean_square[name] = acc
            update = self.learning_rate * g / np.sqrt(acc + self.epsilon)
            if self.momentum:
                update = self.momentum * self.moment.get(name, 0.0) + update
                self.moment[name] = update
            params[name] -= update
