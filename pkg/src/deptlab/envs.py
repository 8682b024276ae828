"""Small two-player zero-sum games with finite observation/action tables.

Four environments share one protocol (`reset`, `observe`, `legal_actions`,
`step`). States are immutable; `step` returns a successor instead of mutating,
so concurrent episodes never share state.

* **SplitPot** -- alternating-offer bargaining over an integer pot. The active
  player proposes a split (own share k, opponent N-k), or accepts/rejects the
  opponent's standing offer. Acceptance ends the game: the larger share wins,
  equal shares draw. The turn limit gives a draw, so the all-reject profile is
  a guaranteed-draw attractor.
* **TrapWord** -- each player is assigned a distinct secret token; saying the
  opponent's secret loses. Observations expose the player's own secret plus
  the last two emitted tokens, which is enough to set and avoid baits.
* **MatrixGame** -- a simultaneous-move payoff matrix realized as two blind
  sequential moves (both players observe only the constant initial
  observation). Default payoffs are matching pennies, a mixed-equilibrium
  control where outcome entropy should stay high.
* **RiggedBandit** -- both players pick one action; a Win/Draw/Loss outcome is
  sampled from a probability table indexed by the action pair. The whole
  trajectory space is enumerable, which the oracle module exploits for exact
  expectations.

Observation encodings are fixed and documented on each class (lexicographic
over the listed state components), so snapshots remain interpretable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import ROLES, RewardSpec, SeededRng

GAME_NAMES = ("SplitPot", "TrapWord", "MatrixGame", "RiggedBandit")

# role-0 reward by outcome index (win, draw, loss)
_BANDIT_REWARDS = (1.0, 0.0, -1.0)

_DEFAULT_MAX_TURNS = {"SplitPot": 8, "TrapWord": 10, "MatrixGame": 2, "RiggedBandit": 2}

# Matching pennies: role 0 wins when the moves match.
_DEFAULT_PAYOFF = ((1.0, -1.0), (-1.0, 1.0))

# Default outcome table, (a0, a1) -> (p_win, p_draw, p_loss) for role 0.
_DEFAULT_OUTCOME_TABLE = (
    ((0.6, 0.2, 0.2), (0.3, 0.4, 0.3)),
    ((0.2, 0.5, 0.3), (0.5, 0.1, 0.4)),
)


@dataclass(frozen=True)
class GameSpec:
    """Parameters selecting and configuring one environment."""

    name: str = "SplitPot"
    pot_size: int = 4
    vocab_size: int = 6
    max_turns: Optional[int] = None
    payoff_matrix: Optional[Sequence[Sequence[float]]] = None
    outcome_table: Optional[Sequence] = None
    reward_spec: RewardSpec = RewardSpec()

    def resolved_max_turns(self) -> int:
        if self.max_turns is not None:
            return self.max_turns
        return _DEFAULT_MAX_TURNS[self.name]

    def validate(self) -> None:
        if self.name not in GAME_NAMES:
            raise ValueError(f"unknown game {self.name!r}; expected one of {GAME_NAMES}")
        if self.name == "SplitPot" and self.pot_size < 1:
            raise ValueError(f"pot_size must be >= 1, got {self.pot_size}")
        if self.name == "TrapWord" and self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_turns is not None and self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.name == "MatrixGame":
            m = np.asarray(self.payoff_matrix if self.payoff_matrix is not None else _DEFAULT_PAYOFF, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
                raise ValueError("payoff_matrix must be square, at least 2x2")
            if not np.isin(m, (-1.0, 0.0, 1.0)).all():
                raise ValueError("payoff entries must be -1, 0, or +1")
        if self.name == "RiggedBandit":
            t = np.asarray(self.outcome_table if self.outcome_table is not None else _DEFAULT_OUTCOME_TABLE, dtype=float)
            if t.ndim != 3 or t.shape[2] != 3 or t.shape[0] < 2 or t.shape[1] < 2:
                raise ValueError("outcome_table must have shape (A0, A1, 3) with A0,A1 >= 2")
            if (t < 0).any():
                raise ValueError("outcome probabilities must be non-negative")
            rows = t.sum(axis=2)
            if np.abs(rows - 1.0).max() > 1e-12:
                raise ValueError("outcome_table rows must sum to 1 within 1e-12")


class Env:
    """Common interface; subclasses define the concrete state machines."""

    name: str
    observation_count: int
    action_count: int

    def __init__(self, spec: GameSpec):
        spec.validate()
        self.spec = spec
        self.max_turns = spec.resolved_max_turns()
        self.rewards = spec.reward_spec

    def reset(self, rng: SeededRng):
        """Fresh initial state plus each role's initial observation."""
        state = self._initial_state(rng)
        return state, (self.observe(state, 0), self.observe(state, 1))

    def observe(self, state, role: int) -> int:
        raise NotImplementedError

    def legal_actions(self, state, role: int) -> tuple[int, ...]:
        self._check_active(state, role)
        return self._legal(state, role)

    def step(self, state, role: int, action: int, rng: SeededRng):
        """Apply one action. Returns (next_state, done, rewards_or_None).

        An illegal action by the active role terminates the episode under the
        invalid-action rule: offender gets the format penalty, opponent 0.
        """
        if state.terminal:
            raise ValueError("cannot step a terminal state")
        self._check_active(state, role)
        if action not in self._legal(state, role):
            penalty = [0.0, 0.0]
            penalty[role] = self.rewards.format_penalty
            final = self._terminal_state(state, invalid_role=role)
            return final, True, (penalty[0], penalty[1])
        return self._step(state, role, action, rng)

    # -- helpers ------------------------------------------------------------

    def _check_active(self, state, role: int) -> None:
        if role not in ROLES:
            raise ValueError(f"role must be 0 or 1, got {role}")
        if role != state.turn % 2:
            raise ValueError(f"role {role} is not active at turn {state.turn}")

    def _win_loss(self, winner: int) -> tuple[float, float]:
        r = [self.rewards.loss, self.rewards.loss]
        r[winner] = self.rewards.win
        return (r[0], r[1])

    def _draw(self) -> tuple[float, float]:
        return (self.rewards.draw, self.rewards.draw)

    def _initial_state(self, rng: SeededRng):
        raise NotImplementedError

    def _legal(self, state, role: int) -> tuple[int, ...]:
        raise NotImplementedError

    def _step(self, state, role: int, action: int, rng: SeededRng):
        raise NotImplementedError

    def _terminal_state(self, state, invalid_role=None):
        return replace(state, terminal=True, invalid_role=invalid_role)


# ---------------------------------------------------------------------------
# SplitPot
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPotState:
    turn: int
    proposer: Optional[int]  # role that made the standing proposal
    share: Optional[int]  # proposer's own share in that proposal
    terminal: bool = False
    invalid_role: Optional[int] = None


class SplitPot(Env):
    """Alternating-offer split of an integer pot of ``pot_size`` units.

    Actions: ``0..N`` propose own share k (opponent gets N-k), ``N+1`` accept
    the standing proposal, ``N+2`` reject it. Accept/reject are legal only
    when a proposal is on the table; proposing over a live offer replaces it.
    Acceptance pays the proposer k and the accepter N-k; the larger share
    wins, equal shares draw. Hitting the turn limit is a draw.

    Observation encoding (count N+2): 0 when no proposal is standing, else
    ``1 + m`` where m is the share the standing proposal offers to the
    observer. A proposal on the table at your turn is always the opponent's.
    """

    name = "SplitPot"

    def __init__(self, spec: GameSpec):
        super().__init__(spec)
        self.pot = spec.pot_size
        self.observation_count = self.pot + 2
        self.action_count = self.pot + 3
        self._accept = self.pot + 1
        self._reject = self.pot + 2

    def _initial_state(self, rng: SeededRng) -> SplitPotState:
        return SplitPotState(turn=0, proposer=None, share=None)

    def observe(self, state: SplitPotState, role: int) -> int:
        if state.proposer is None or state.proposer == role:
            return 0
        return 1 + (self.pot - state.share)

    def _legal(self, state: SplitPotState, role: int) -> tuple[int, ...]:
        proposals = tuple(range(self.pot + 1))
        if state.proposer is not None and state.proposer != role:
            return proposals + (self._accept, self._reject)
        return proposals

    def _step(self, state: SplitPotState, role: int, action: int, rng: SeededRng):
        if action == self._accept:
            k = state.share
            shares = [0, 0]
            shares[state.proposer] = k
            shares[role] = self.pot - k
            done_state = self._terminal_state(state)
            if shares[0] > shares[1]:
                return done_state, True, self._win_loss(0)
            if shares[1] > shares[0]:
                return done_state, True, self._win_loss(1)
            return done_state, True, self._draw()
        if action == self._reject:
            nxt = SplitPotState(turn=state.turn + 1, proposer=None, share=None)
        else:
            nxt = SplitPotState(turn=state.turn + 1, proposer=role, share=action)
        if nxt.turn >= self.max_turns:
            return self._terminal_state(nxt), True, self._draw()
        return nxt, False, None


# ---------------------------------------------------------------------------
# TrapWord
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrapWordState:
    turn: int
    secrets: tuple[int, int]
    last1: Optional[int]  # most recent emitted token
    last2: Optional[int]
    terminal: bool = False
    invalid_role: Optional[int] = None


class TrapWord(Env):
    """Say-the-trap-word game over a vocabulary of ``vocab_size`` tokens.

    Each role holds a distinct secret; emitting the *opponent's* secret ends
    the game as a loss for the emitter (emitting your own is harmless). The
    turn limit gives a draw.

    Observation encoding (count V*(V+1)^2), lexicographic over
    (own_secret, last1, last2) where absent history codes as 0 and token t
    codes as t+1:  ``(own*(V+1) + code(last1))*(V+1) + code(last2)``.
    """

    name = "TrapWord"

    def __init__(self, spec: GameSpec):
        super().__init__(spec)
        self.vocab = spec.vocab_size
        self.observation_count = self.vocab * (self.vocab + 1) ** 2
        self.action_count = self.vocab

    def _initial_state(self, rng: SeededRng) -> TrapWordState:
        s0 = rng.integers(0, self.vocab)
        s1 = rng.integers(0, self.vocab - 1)
        if s1 >= s0:  # skip s0 so the secrets are distinct
            s1 += 1
        return TrapWordState(turn=0, secrets=(s0, s1), last1=None, last2=None)

    def observe(self, state: TrapWordState, role: int) -> int:
        code1 = 0 if state.last1 is None else state.last1 + 1
        code2 = 0 if state.last2 is None else state.last2 + 1
        v1 = self.vocab + 1
        return (state.secrets[role] * v1 + code1) * v1 + code2

    def _legal(self, state: TrapWordState, role: int) -> tuple[int, ...]:
        return tuple(range(self.vocab))

    def _step(self, state: TrapWordState, role: int, action: int, rng: SeededRng):
        opponent = 1 - role
        if action == state.secrets[opponent]:
            return self._terminal_state(state), True, self._win_loss(opponent)
        nxt = TrapWordState(
            turn=state.turn + 1,
            secrets=state.secrets,
            last1=action,
            last2=state.last1,
        )
        if nxt.turn >= self.max_turns:
            return self._terminal_state(nxt), True, self._draw()
        return nxt, False, None


# ---------------------------------------------------------------------------
# MatrixGame
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoMoveState:
    turn: int
    first_action: Optional[int] = None
    terminal: bool = False
    invalid_role: Optional[int] = None


class MatrixGame(Env):
    """Simultaneous-move payoff matrix played as two blind sequential moves.

    Both roles observe only the constant initial observation (id 0), so the
    second mover cannot condition on the first move. Entry ``payoff[a0][a1]``
    is role 0's reward in {-1, 0, +1}; role 1 receives its negation.
    """

    name = "MatrixGame"

    def __init__(self, spec: GameSpec):
        super().__init__(spec)
        payoff = spec.payoff_matrix if spec.payoff_matrix is not None else _DEFAULT_PAYOFF
        self.payoff = np.asarray(payoff, dtype=float)
        self.observation_count = 1
        self.action_count = self.payoff.shape[0]
        self.max_turns = 2

    def _initial_state(self, rng: SeededRng) -> TwoMoveState:
        return TwoMoveState(turn=0)

    def observe(self, state: TwoMoveState, role: int) -> int:
        return 0

    def _legal(self, state: TwoMoveState, role: int) -> tuple[int, ...]:
        return tuple(range(self.action_count))

    def _step(self, state: TwoMoveState, role: int, action: int, rng: SeededRng):
        if state.turn == 0:
            return TwoMoveState(turn=1, first_action=action), False, None
        r0 = float(self.payoff[state.first_action, action])
        done_state = self._terminal_state(state)
        if r0 > 0:
            return done_state, True, self._win_loss(0)
        if r0 < 0:
            return done_state, True, self._win_loss(1)
        return done_state, True, self._draw()


# ---------------------------------------------------------------------------
# RiggedBandit
# ---------------------------------------------------------------------------


class RiggedBandit(Env):
    """One blind pick per player; outcome sampled from a per-pair table.

    ``outcome_table[a0][a1]`` is ``(p_win, p_draw, p_loss)`` from role 0's
    perspective. The joint trajectory space is finite (A0*A1 action pairs by
    3 outcomes), so exact expectations are computable by enumeration.
    Outcome sampling uses an inverse-CDF draw in (win, draw, loss) order.
    """

    name = "RiggedBandit"

    def __init__(self, spec: GameSpec):
        super().__init__(spec)
        table = spec.outcome_table if spec.outcome_table is not None else _DEFAULT_OUTCOME_TABLE
        self.table = np.asarray(table, dtype=float)
        self.action_counts = (self.table.shape[0], self.table.shape[1])
        self.observation_count = 1
        self.action_count = max(self.action_counts)
        self.max_turns = 2

    def _initial_state(self, rng: SeededRng) -> TwoMoveState:
        return TwoMoveState(turn=0)

    def observe(self, state: TwoMoveState, role: int) -> int:
        return 0

    def _legal(self, state: TwoMoveState, role: int) -> tuple[int, ...]:
        return tuple(range(self.action_counts[state.turn % 2]))

    def _step(self, state: TwoMoveState, role: int, action: int, rng: SeededRng):
        if state.turn == 0:
            return TwoMoveState(turn=1, first_action=action), False, None
        probs = self.table[state.first_action, action]
        o = rng.choice_index(probs)
        r0 = _BANDIT_REWARDS[o]
        done_state = self._terminal_state(state)
        if r0 > 0:
            return done_state, True, self._win_loss(0)
        if r0 < 0:
            return done_state, True, self._win_loss(1)
        return done_state, True, self._draw()


_ENV_CLASSES = {
    "SplitPot": SplitPot,
    "TrapWord": TrapWord,
    "MatrixGame": MatrixGame,
    "RiggedBandit": RiggedBandit,
}


def make_env(spec: GameSpec) -> Env:
    """Instantiate the environment selected by ``spec.name``."""
    spec.validate()
    return _ENV_CLASSES[spec.name](spec)
