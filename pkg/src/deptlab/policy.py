"""Tabular role-conditioned softmax policy with exact log-probability gradients.

Parameters are a single dense tensor ``theta[obs, role, action]``; action
probabilities are the softmax of the active row restricted to the legal set.
Everything downstream (sampling, score function, snapshots) works off that
one tensor, so every theoretical quantity is exactly computable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SeededRng


@dataclass
class PolicyParams:
    """Logit table of shape (observation_count, 2, action_count)."""

    theta: np.ndarray

    @property
    def observation_count(self) -> int:
        return self.theta.shape[0]

    @property
    def action_count(self) -> int:
        return self.theta.shape[2]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.theta.copy())


@dataclass(frozen=True)
class PolicySnapshot:
    """Frozen copy of the parameters plus the training step it was taken at."""

    theta: np.ndarray
    step: int
    seed: int = 0


def init_params(observation_count: int, action_count: int) -> PolicyParams:
    """Zero logits: uniform over every legal set."""
    if observation_count < 1 or action_count < 1:
        raise ValueError("observation and action counts must be positive")
    return PolicyParams(np.zeros((observation_count, 2, action_count)))


def action_probs(
    params: PolicyParams, obs: int, role: int, legal: tuple[int, ...]
) -> np.ndarray:
    """Softmax over the legal actions of row (obs, role).

    Returns probabilities aligned with ``legal`` (caller's order). Illegal
    actions get no mass. Uses max-subtraction, so adding a constant to a row
    leaves the result unchanged.
    """
    if len(legal) == 0:
        raise ValueError("legal action set is empty")
    logits = params.theta[obs, role, list(legal)]
    z = np.exp(logits - logits.max())
    return z / z.sum()


def sample_action(
    params: PolicyParams, obs: int, role: int, legal: tuple[int, ...], rng: SeededRng
) -> int:
    """Draw one legal action by inverse CDF over the fixed action ordering."""
    probs = action_probs(params, obs, role, legal)
    return legal[rng.choice_index(probs)]


def log_prob_grad(
    params: PolicyParams, obs: int, role: int, action: int, legal: tuple[int, ...]
) -> np.ndarray:
    """Gradient of log pi(action | obs, role) over the (obs, role) row.

    Equals one_hot(action) - probs on the legal slots and 0 elsewhere; the
    row therefore sums to 0 and its norm is below sqrt(2).
    """
    if action not in legal:
        raise ValueError(f"action {action} is not legal here")
    probs = action_probs(params, obs, role, legal)
    row = np.zeros(params.action_count)
    row[list(legal)] = -probs
    row[action] += 1.0
    return row


def snapshot(params: PolicyParams, step: int, seed: int = 0) -> PolicySnapshot:
    """Deep immutable copy tagged with the training step."""
    theta = params.theta.copy()
    theta.flags.writeable = False
    return PolicySnapshot(theta=theta, step=step, seed=seed)


def save_snapshot(snap: PolicySnapshot, path: Path | str) -> None:
    """Text dump: header (dims, step, seed) then theta row-major, one value per line.

    Values are written in shortest round-trip decimal form, so a load
    reproduces the tensor bit-for-bit.
    """
    theta = snap.theta
    lines = [
        "deptlab-snapshot v1",
        f"dims {theta.shape[0]} {theta.shape[1]} {theta.shape[2]}",
        f"step {snap.step}",
        f"seed {snap.seed}",
    ]
    lines.extend(repr(float(v)) for v in theta.ravel(order="C"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path: Path | str) -> PolicySnapshot:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "deptlab-snapshot v1":
        raise ValueError(f"{path}: not a snapshot file")
    dims = tuple(int(x) for x in lines[1].split()[1:])
    step = int(lines[2].split()[1])
    seed = int(lines[3].split()[1])
    values = np.array([float(x) for x in lines[4:4 + dims[0] * dims[1] * dims[2]]])
    theta = values.reshape(dims)
    theta.flags.writeable = False
    return PolicySnapshot(theta=theta, step=step, seed=seed)
