"""Advantage estimators: dual-timescale reshaping plus all comparators.

The ``dept`` estimator keeps two per-role EMA baselines with different decay
rates. Their divergence measures how fast the expected return is still
moving; combined with the batch outcome entropy it yields an intervention
coefficient ``lambda`` in [0, 1]. When lambda rises, the baseline for each
trajectory is pulled from the stable slow EMA toward an asymmetric target:
the historical fast-baseline maximum for trajectories with the batch's
dominant outcome, the minimum for rare ones. That reshaping injects a
contrastive push-pull signal exactly when natural reward variance has
collapsed.

Comparators: ``rae`` (single per-role EMA baseline), ``grpo`` (per-role
group normalization), ``vanilla`` (raw returns), and the ablations
``no_sigma``, ``no_entropy_gate``, ``no_asym``, ``fast_only``, ``slow_only``.

Per-trajectory processing is update-then-compute: EMAs and bounds absorb the
trajectory's reward first, then sigma/lambda and the fused baseline are read
from the updated state.
``rae`` instead computes each advantage against the baseline *before* its
update, which is the conventional EMA-baseline estimator. The
``per_batch_mean`` mode updates the EMAs once per batch with the mean role
reward, giving every trajectory in the batch identical lambda and bounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ROLES, Outcome, Trajectory

ESTIMATORS = (
    "dept",
    "rae",
    "grpo",
    "vanilla",
    "fast_only",
    "slow_only",
    "no_sigma",
    "no_entropy_gate",
    "no_asym",
)

_DUAL_FAMILY = ("dept", "no_sigma", "no_entropy_gate", "no_asym")

_LOG3 = math.log(3.0)
_GROUP_EPS = 1e-8


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------


@dataclass
class DualBaselineState:
    """Per-role fast/slow EMA baselines plus historical fast-baseline bounds.

    Baselines start at 0. Bounds are seeded from the first fast-baseline
    value (no infinities), tracked per role by default or shared across roles
    with ``bounds_scope='global'``.
    """

    alpha_fast: float = 0.5
    alpha_slow: float = 0.95
    bounds_scope: str = "per_role"
    b_fast: np.ndarray = field(default_factory=lambda: np.zeros(2))
    b_slow: np.ndarray = field(default_factory=lambda: np.zeros(2))
    v_max: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    v_min: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    initialized: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=bool))

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha_fast < 1.0 and 0.0 < self.alpha_slow < 1.0):
            raise ValueError("decay rates must lie in (0, 1)")
        if not self.alpha_fast < self.alpha_slow:
            raise ValueError(
                f"alpha_fast ({self.alpha_fast}) must be below alpha_slow ({self.alpha_slow})"
            )
        if self.bounds_scope not in ("per_role", "global"):
            raise ValueError(f"unknown bounds_scope {self.bounds_scope!r}")

    def bounds(self, role: int) -> tuple[float, float]:
        if not self.initialized[role]:
            raise ValueError(f"value bounds for role {role} are uninitialized")
        return float(self.v_max[role]), float(self.v_min[role])


@dataclass
class EmaBaselineState:
    """Single per-role EMA baseline (the comparator estimators)."""

    alpha: float = 0.95
    b: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class BatchStats:
    """Outcome bookkeeping for one batch.

    ``counts[role]`` are (win, draw, loss) tallies of that role's labels;
    ``h_match`` is the normalized entropy of the pooled label distribution
    over both roles, which is the value that gates intervention. Per-role
    entropies are kept alongside for diagnostics.
    """

    counts: np.ndarray  # shape (2, 3)
    o_dom: tuple[Outcome, Outcome]
    h_match: float
    h_role: tuple[float, float]


@dataclass(frozen=True)
class InterventionSignal:
    """End-of-batch stagnation and intervention coefficients, per role."""

    sigma: tuple[float, float]
    lam: tuple[float, float]


@dataclass(frozen=True)
class AdvantageRecord:
    """Per-trajectory result: raw rewards, fused baselines, advantages.

    ``advantages[p] == rewards[p] - baselines[p]`` holds exactly for every
    estimator (normalizing estimators report the implied baseline).
    """

    trajectory: Trajectory
    rewards: tuple[float, float]
    baselines: tuple[float, float]
    advantages: tuple[float, float]


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def update_ema(b: float, alpha: float, reward: float) -> float:
    """One EMA step: alpha * b + (1 - alpha) * reward."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not (math.isfinite(b) and math.isfinite(reward)):
        raise ValueError("EMA inputs must be finite")
    return alpha * b + (1.0 - alpha) * reward


def match_entropy(counts: Sequence[int]) -> float:
    """Normalized Shannon entropy of a (win, draw, loss) count vector.

    Always normalized by log 3; zero counts contribute nothing. Clamped to
    [0, 1] so uniform counts give exactly 1.0.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("match entropy of an empty batch is undefined")
    if counts[0] == counts[1] == counts[2] and counts[0] > 0:
        return 1.0  # exactly uniform: the maximum, bit-exact
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log(p)
    return min(max(h / _LOG3, 0.0), 1.0)


def stagnation(b_fast: float, b_slow: float) -> float:
    """sigma = 1 - tanh(|b_fast - b_slow|); 1 means fully stationary."""
    if not (math.isfinite(b_fast) and math.isfinite(b_slow)):
        raise ValueError("baselines must be finite")
    return 1.0 - math.tanh(abs(b_fast - b_slow))


def intervention(sigma: float, h_match: float) -> float:
    """lambda = sigma * sqrt(1 - h_match); zero exactly when h_match is 1."""
    if not 0.0 <= h_match <= 1.0:
        raise ValueError(f"h_match {h_match} outside [0, 1]; upstream bug")
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"sigma {sigma} outside (0, 1]")
    return sigma * math.sqrt(1.0 - h_match)


def dominant_outcome(counts: Sequence[int]) -> Outcome:
    """Most frequent outcome; ties resolve Win > Draw > Loss."""
    counts = np.asarray(counts)
    if counts.sum() < 1:
        raise ValueError("empty batch has no dominant outcome")
    return Outcome(int(np.argmax(counts)))  # argmax keeps the first max


def update_bounds(state: DualBaselineState, role: int) -> DualBaselineState:
    """Fold the freshly updated fast baseline into the historical bounds.

    The very first update seeds both bounds to the fast baseline itself.
    With global scope one shared pair is maintained (mirrored to both roles).
    """
    nb = float(state.b_fast[role])
    roles = ROLES if state.bounds_scope == "global" else (role,)
    if state.bounds_scope == "global" and state.initialized.any():
        hi = max(np.nanmax(state.v_max), nb)
        lo = min(np.nanmin(state.v_min), nb)
    elif state.initialized[role]:
        hi = max(float(state.v_max[role]), nb)
        lo = min(float(state.v_min[role]), nb)
    else:
        hi = lo = nb
    for r in roles:
        state.v_max[r] = hi
        state.v_min[r] = lo
        state.initialized[r] = True
    return state


def asymmetric_value(outcome: Outcome, o_dom: Outcome, v_max: float, v_min: float) -> float:
    """Bound selected by dominance: v_max for the dominant outcome, else v_min."""
    if not (math.isfinite(v_max) and math.isfinite(v_min)):
        raise ValueError("value bounds are uninitialized")
    return v_max if outcome == o_dom else v_min


def fused_baseline(lam: float, b_slow: float, v_asym: float) -> float:
    """(1 - lambda) * b_slow + lambda * v_asym.

    Returns ``b_slow`` itself when lambda is exactly 0, so the no-intervention
    endpoint is bit-exact.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    if lam == 0.0:
        return b_slow
    return (1.0 - lam) * b_slow + lam * v_asym


def batch_stats(batch: Sequence[Trajectory]) -> BatchStats:
    """Count outcome labels per role and compute the entropy diagnostics."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    counts = np.zeros((2, 3), dtype=int)
    for traj in batch:
        for p in ROLES:
            counts[p, int(traj.outcomes[p])] += 1
    pooled = counts.sum(axis=0)
    return BatchStats(
        counts=counts,
        o_dom=(dominant_outcome(counts[0]), dominant_outcome(counts[1])),
        h_match=match_entropy(pooled),
        h_role=(match_entropy(counts[0]), match_entropy(counts[1])),
    )


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _lambda_rule(mode: str, sigma: float, h: float) -> float:
    if mode == "no_sigma":
        return math.sqrt(1.0 - h)
    if mode == "no_entropy_gate":
        return sigma
    return intervention(sigma, h)


def _dual_pipeline(
    batch: Sequence[Trajectory],
    state: DualBaselineState,
    mode: str,
    baseline_update: str,
) -> tuple[list[AdvantageRecord], DualBaselineState, BatchStats, InterventionSignal]:
    stats = batch_stats(batch)
    h = stats.h_match
    records = []

    if baseline_update == "per_batch_mean":
        # One EMA step per role using the batch-mean reward; every trajectory
        # then shares identical lambda, slow baseline and bounds.
        for p in ROLES:
            mean_r = float(np.mean([t.rewards[p] for t in batch]))
            state.b_fast[p] = update_ema(float(state.b_fast[p]), state.alpha_fast, mean_r)
            state.b_slow[p] = update_ema(float(state.b_slow[p]), state.alpha_slow, mean_r)
            update_bounds(state, p)
        sig = [stagnation(float(state.b_fast[p]), float(state.b_slow[p])) for p in ROLES]
        lam = [_lambda_rule(mode, sig[p], h) for p in ROLES]
        for traj in batch:
            baselines, advantages = [], []
            for p in ROLES:
                r = traj.rewards[p]
                if mode == "no_asym":
                    b = float(state.b_slow[p])
                else:
                    v = asymmetric_value(
                        traj.outcomes[p], stats.o_dom[p], state.v_max[p], state.v_min[p]
                    )
                    b = fused_baseline(lam[p], float(state.b_slow[p]), v)
                baselines.append(b)
                advantages.append(r - b)
            records.append(
                AdvantageRecord(traj, traj.rewards, tuple(baselines), tuple(advantages))
            )
    elif baseline_update == "per_trajectory":
        for traj in batch:
            baselines, advantages = [], []
            for p in ROLES:
                r = traj.rewards[p]
                state.b_fast[p] = update_ema(float(state.b_fast[p]), state.alpha_fast, r)
                state.b_slow[p] = update_ema(float(state.b_slow[p]), state.alpha_slow, r)
                update_bounds(state, p)
                sig_p = stagnation(float(state.b_fast[p]), float(state.b_slow[p]))
                lam_p = _lambda_rule(mode, sig_p, h)
                if mode == "no_asym":
                    b = float(state.b_slow[p])
                else:
                    v = asymmetric_value(
                        traj.outcomes[p], stats.o_dom[p], state.v_max[p], state.v_min[p]
                    )
                    b = fused_baseline(lam_p, float(state.b_slow[p]), v)
                baselines.append(b)
                advantages.append(r - b)
            records.append(
                AdvantageRecord(traj, traj.rewards, tuple(baselines), tuple(advantages))
            )
        sig = [stagnation(float(state.b_fast[p]), float(state.b_slow[p])) for p in ROLES]
        lam = [_lambda_rule(mode, sig[p], h) for p in ROLES]
    else:
        raise ValueError(f"unknown baseline_update {baseline_update!r}")

    signal = InterventionSignal(sigma=(sig[0], sig[1]), lam=(lam[0], lam[1]))
    return records, state, stats, signal


def dept_advantages(
    batch: Sequence[Trajectory],
    state: DualBaselineState,
    baseline_update: str = "per_trajectory",
) -> tuple[list[AdvantageRecord], DualBaselineState, BatchStats, InterventionSignal]:
    """Full dual-timescale estimator with asymmetric reshaping."""
    return _dual_pipeline(batch, state, "dept", baseline_update)


def ablated_advantages(
    batch: Sequence[Trajectory],
    state,
    mode: str,
    baseline_update: str = "per_trajectory",
):
    """Ablation variants sharing the dual pipeline or reducing to single EMAs.

    ``no_sigma`` drops the stagnation factor (lambda = sqrt(1 - H));
    ``no_entropy_gate`` drops the entropy gate (lambda = sigma); ``no_asym``
    always uses the slow baseline; ``fast_only``/``slow_only`` are the single
    EMA estimator at the respective decay rate.
    """
    if mode in ("no_sigma", "no_entropy_gate", "no_asym"):
        return _dual_pipeline(batch, state, mode, baseline_update)
    if mode in ("fast_only", "slow_only"):
        records, state = rae_advantages(batch, state)
        return records, state, batch_stats(batch), None
    raise ValueError(f"unknown ablation mode {mode!r}")


def rae_advantages(
    batch: Sequence[Trajectory], state: EmaBaselineState
) -> tuple[list[AdvantageRecord], EmaBaselineState]:
    """Role-conditioned single-EMA baseline: A_p = R_p - b_p.

    Each advantage uses the baseline as it stands, then the baseline absorbs
    that trajectory's reward.
    """
    records = []
    for traj in batch:
        baselines = (float(state.b[0]), float(state.b[1]))
        advantages = (traj.rewards[0] - baselines[0], traj.rewards[1] - baselines[1])
        for p in ROLES:
            state.b[p] = update_ema(float(state.b[p]), state.alpha, traj.rewards[p])
        records.append(AdvantageRecord(traj, traj.rewards, baselines, advantages))
    return records, state


def group_advantages(batch: Sequence[Trajectory]) -> list[AdvantageRecord]:
    """Per-role group normalization: A_p = (R_p - mean_p) / (std_p + 1e-8).

    Statistics are over the role's rewards within this batch (population
    std). A singleton group cannot be normalized: advantages are 0 and a
    warning is emitted.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    rewards = np.array([[t.rewards[0], t.rewards[1]] for t in batch])
    if len(batch) < 2:
        warnings.warn("singleton role group: group advantages set to 0")
        adv = np.zeros_like(rewards)
    else:
        mean = rewards.mean(axis=0)
        std = rewards.std(axis=0)
        adv = (rewards - mean) / (std + _GROUP_EPS)
    records = []
    for traj, r, a in zip(batch, rewards, adv):
        advantages = (float(a[0]), float(a[1]))
        baselines = (float(r[0]) - advantages[0], float(r[1]) - advantages[1])
        records.append(AdvantageRecord(traj, traj.rewards, baselines, advantages))
    return records


def vanilla_advantages(batch: Sequence[Trajectory]) -> list[AdvantageRecord]:
    """No baseline at all: A_p = R_p."""
    return [
        AdvantageRecord(t, t.rewards, (0.0, 0.0), (t.rewards[0], t.rewards[1]))
        for t in batch
    ]


def make_estimator_state(
    estimator: str,
    alpha_fast: float = 0.5,
    alpha_slow: float = 0.95,
    bounds_scope: str = "per_role",
):
    """Fresh state object for the named estimator (None if stateless)."""
    if estimator in _DUAL_FAMILY:
        return DualBaselineState(
            alpha_fast=alpha_fast, alpha_slow=alpha_slow, bounds_scope=bounds_scope
        )
    if estimator in ("rae", "slow_only"):
        return EmaBaselineState(alpha=alpha_slow)
    if estimator == "fast_only":
        return EmaBaselineState(alpha=alpha_fast)
    if estimator in ("grpo", "vanilla"):
        return None
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def estimate(
    estimator: str,
    batch: Sequence[Trajectory],
    state,
    baseline_update: str = "per_trajectory",
) -> tuple[list[AdvantageRecord], BatchStats, Optional[InterventionSignal], object]:
    """Dispatch one batch through the named estimator.

    Returns (records, stats, signal, state); ``signal`` is None for
    estimators without the dual-baseline perception machinery.
    """
    if estimator in _DUAL_FAMILY:
        if estimator == "dept":
            records, state, stats, signal = dept_advantages(batch, state, baseline_update)
        else:
            records, state, stats, signal = ablated_advantages(
                batch, state, estimator, baseline_update
            )
        return records, stats, signal, state
    stats = batch_stats(batch)
    if estimator in ("rae", "fast_only", "slow_only"):
        records, state = rae_advantages(batch, state)
        return records, stats, None, state
    if estimator == "grpo":
        return group_advantages(batch), stats, None, None
    if estimator == "vanilla":
        return vanilla_advantages(batch), stats, None, None
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
