"""Shared domain types: roles, outcomes, rewards, trajectories, seeded RNG.

Conventions used throughout the package:

* Exactly two roles, ``0`` and ``1``. The active role at turn ``t`` is
  ``t % 2``, so role 0 always moves first.
* Terminal rewards for a cleanly finished episode are zero-sum:
  ``(+1, -1)``, ``(-1, +1)`` or ``(0, 0)``.
* An illegal action ends the episode immediately. The offender receives
  the format penalty (-1.5), the opponent receives 0, and the episode is
  labeled Loss for the offender and Win for the opponent. This is the one
  sanctioned departure from zero-sum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

ROLES = (0, 1)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class Outcome(enum.IntEnum):
    """Per-role episode result. Integer values index count arrays."""

    WIN = 0
    DRAW = 1
    LOSS = 2


@dataclass(frozen=True)
class RewardSpec:
    """Terminal reward values. Defaults: +1 win, -1 loss, 0 draw, -1.5 illegal."""

    win: float = 1.0
    loss: float = -1.0
    draw: float = 0.0
    format_penalty: float = -1.5

    def __post_init__(self) -> None:
        if self.win + self.loss != 0.0 or self.draw != 0.0:
            raise ValueError("win/loss must cancel and draw must be 0")
        if not self.format_penalty < self.loss:
            raise ValueError("format_penalty must be strictly below the loss reward")


class Turn(NamedTuple):
    """One move: who acted, what they saw, what they did, what was legal."""

    index: int
    role: int
    obs: int
    action: int
    legal: tuple[int, ...]


@dataclass(frozen=True)
class Trajectory:
    """A finished self-play episode.

    ``rewards`` and ``outcomes`` are indexed by role. ``invalid_role`` is set
    when the episode ended because that role played an illegal action.
    """

    turns: tuple[Turn, ...]
    rewards: tuple[float, float]
    outcomes: tuple[Outcome, Outcome]
    invalid_role: Optional[int] = None

    @property
    def length(self) -> int:
        return len(self.turns)

    def validate(self) -> None:
        """Check role alternation and reward consistency; raises on violation."""
        for i, turn in enumerate(self.turns):
            if turn.index != i or turn.role != i % 2:
                raise ValueError(f"turn {i} breaks the alternation contract")
        if self.invalid_role is None:
            if self.rewards[0] + self.rewards[1] != 0.0:
                raise ValueError("valid episode is not zero-sum")
            if self.outcomes != classify_outcome(self.rewards):
                raise ValueError("outcome labels inconsistent with rewards")


def classify_outcome(
    rewards: tuple[float, float], invalid_role: Optional[int] = None
) -> tuple[Outcome, Outcome]:
    """Label each role's result from terminal rewards.

    Positive reward is a Win, negative a Loss, both-zero a Draw. An invalid
    action forces (Loss for the offender, Win for the opponent) regardless of
    the opponent's reward, which is 0 under the invalid-action rule.

    Rejects reward pairs that cannot come from a terminated zero-sum episode
    (both strictly positive or both strictly negative).
    """
    if invalid_role is not None:
        if invalid_role not in ROLES:
            raise ValueError(f"invalid_role must be 0 or 1, got {invalid_role}")
        labels = [Outcome.WIN, Outcome.WIN]
        labels[invalid_role] = Outcome.LOSS
        return (labels[0], labels[1])
    r0, r1 = rewards
    if r0 > 0 and r1 > 0:
        raise ValueError(f"non-terminal reward pair {rewards}: both positive")
    if r0 < 0 and r1 < 0:
        raise ValueError(f"non-zero-sum reward pair {rewards}: both negative")

    def label(r: float) -> Outcome:
        if r > 0:
            return Outcome.WIN
        if r < 0:
            return Outcome.LOSS
        return Outcome.DRAW

    return (label(r0), label(r1))


def hash64(parent_seed: int, index: int) -> int:
    """Derive a child seed from (parent_seed, index).

    SplitMix64 finalizer applied to ``parent + GOLDEN * (index + 1)``. Fixed
    integer arithmetic mod 2**64, so child seeds are identical on every
    platform. Used for worker/episode seed derivation.
    """
    x = (parent_seed + _GOLDEN * (index + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


class SeededRng:
    """Deterministic random stream backed by the counter-based Philox generator.

    Same seed and same call sequence give the same outputs on every platform;
    no system entropy is ever mixed in. Instances are single-owner: concurrent
    consumers must each get their own child via :meth:`spawn`.
    """

    __slots__ = ("seed", "_gen")

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(key=seed))

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return float(self._gen.random())

    def normal(self, loc: float = 0.0, scale: float = 1.0) -> float:
        return float(self._gen.normal(loc, scale))

    def integers(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        return int(self._gen.integers(low, high))

    def choice_index(self, probs) -> int:
        """Inverse-CDF draw over a probability vector, in index order."""
        u = self.uniform()
        acc = 0.0
        last = len(probs) - 1
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                return i
        return last  # guards cumulative rounding below 1.0

    def spawn(self, index: int) -> "SeededRng":
        """Independent child stream number ``index`` (seed = hash64(seed, index))."""
        return SeededRng(hash64(self.seed, index))

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator, for bulk vectorized draws (oracle use)."""
        return self._gen


def make_rng(seed: int) -> SeededRng:
    """Create the root deterministic stream for a run."""
    return SeededRng(seed)
