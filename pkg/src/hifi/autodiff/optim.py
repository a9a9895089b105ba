from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError


@dataclass
class SgdState:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    lr_decay_every: int = 10_000
    lr_decay_factor: float = 0.1
    iteration: int = 0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ArgumentError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_decay_every < 1:
            raise ArgumentError(f"lr_decay_every must be >= 1, got {self.lr_decay_every}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ArgumentError(f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}")


def sgd_step(state, params, grads):
    """Momentum SGD: v <- mu*v + g; w <- w - lr*v, then step-decay the learning rate.

    ``params`` and ``grads`` map names to arrays; params are updated in place.
    Names with no gradient are skipped.
    """
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            continue
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        v *= state.momentum
        v += g
        w -= state.learning_rate * v
    state.iteration += 1
    if state.iteration % state.lr_decay_every == 0:
        state.learning_rate *= state.lr_decay_factor
    return params
