"""Self-play rollout collection, policy-gradient updates, and evaluation.

The training loop is: collect a batch of self-play episodes (one shared
parameter tensor plays both roles), run the configured advantage estimator,
accumulate the policy gradient, clip by global norm, and step the optimizer.
One metrics row is emitted per step; snapshots are taken at step 0 and at
every evaluation step so later checkpoints can be scored against the frozen
starting policy.

All randomness flows from the run seed through fixed hash-derived child
streams (one per episode), so a rerun of the same configuration reproduces
the metrics byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .advantage import (
    ESTIMATORS,
    AdvantageRecord,
    DualBaselineState,
    EmaBaselineState,
    estimate,
    make_estimator_state,
)
from .core import SeededRng, Trajectory, Turn, classify_outcome, hash64
from .envs import Env, GameSpec, make_env
from .policy import (
    PolicyParams,
    PolicySnapshot,
    action_probs,
    init_params,
    save_snapshot,
    snapshot,
)
from . import telemetry

log = logging.getLogger(__name__)

_ADAM_BETAS = (0.9, 0.95)
_ADAM_EPS = 1e-8

# rng stream tags, mixed with the run seed via hash64
_TRAIN_STREAM = 0
_EVAL_STREAM = 1


@dataclass
class TrainConfig:
    """Run parameters. Defaults follow the experiment scale this package targets
    (400 steps of batch 128) with a step size suited to tabular logits."""

    steps: int = 400
    batch_size: int = 128
    learning_rate: float = 0.05
    clip_norm: float = 1.0
    ppo_clip: Optional[float] = None
    optimizer: str = "adaptive_moments"
    eval_every: int = 50
    eval_episodes: int = 256
    seed: int = 42
    estimator: str = "dept"
    alpha_fast: float = 0.5
    alpha_slow: float = 0.95
    baseline_update: str = "per_trajectory"
    bounds_scope: str = "per_role"
    gamma: float = 1.0
    masked: bool = True

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.optimizer not in ("sgd", "adaptive_moments"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not self.alpha_fast < self.alpha_slow:
            raise ValueError("alpha_fast must be below alpha_slow")
        if not (0.0 < self.alpha_fast < 1.0 and 0.0 < self.alpha_slow < 1.0):
            raise ValueError("decay rates must lie in (0, 1)")
        if self.baseline_update not in ("per_trajectory", "per_batch_mean"):
            raise ValueError(f"unknown baseline_update {self.baseline_update!r}")
        if self.bounds_scope not in ("per_role", "global"):
            raise ValueError(f"unknown bounds_scope {self.bounds_scope!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.eval_episodes < 2 or self.eval_episodes % 2:
            raise ValueError("eval_episodes must be even and >= 2")
        if self.ppo_clip is not None and self.ppo_clip <= 0:
            raise ValueError("ppo_clip must be positive when set")


@dataclass
class OptimizerState:
    """Adam moment accumulators; unused (None moments) in sgd mode."""

    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EvalReport:
    """Symmetric evaluation summary from the evaluated policy's perspective."""

    win_rate: float
    draw_rate: float
    loss_rate: float
    episodes: int
    first_player: tuple[float, float, float]
    second_player: tuple[float, float, float]


# ---------------------------------------------------------------------------
# Acting and episode collection
# ---------------------------------------------------------------------------


class TabularActor:
    """Plays with a fixed logit tensor, masked to the legal set.

    Probabilities are memoized per (obs, role, legal) since the tensor is
    constant for the actor's lifetime.
    """

    def __init__(self, theta: np.ndarray, masked: bool = True):
        self.params = PolicyParams(theta)
        self.masked = masked
        self._memo: dict = {}

    def probs(self, obs: int, role: int, legal: tuple[int, ...]) -> np.ndarray:
        key = (obs, role, legal)
        out = self._memo.get(key)
        if out is None:
            out = action_probs(self.params, obs, role, legal)
            self._memo[key] = out
        return out

    def act(self, env: Env, state, role: int, obs: int, legal: tuple[int, ...], rng: SeededRng):
        if not self.masked:
            legal = tuple(range(self.params.action_count))
        p = self.probs(obs, role, legal)
        return legal[rng.choice_index(p)], legal


class ScriptedActor:
    """Wraps a rule ``(env, state, role, legal, rng) -> action``."""

    def __init__(self, rule: Callable):
        self.rule = rule

    def act(self, env: Env, state, role: int, obs: int, legal: tuple[int, ...], rng: SeededRng):
        return self.rule(env, state, role, legal, rng), legal


def _fair_dealer(env, state, role, legal, rng):
    # Propose an even split; accept anything at least as good as half.
    fair = env.pot - env.pot // 2
    accept = env.pot + 1
    if accept in legal and (env.pot - state.share) * 2 >= env.pot:
        return accept
    return fair


def _always_reject(env, state, role, legal, rng):
    reject = env.pot + 2
    if reject in legal:
        return reject
    return env.pot  # greedy keep-it-all proposal; never acceptable to a rival


def _avoid_own_secret(env, state, role, legal, rng):
    options = [a for a in legal if a != state.secrets[role]]
    return options[rng.integers(0, len(options))]


def _uniform(env, state, role, legal, rng):
    return legal[rng.integers(0, len(legal))]


_SCRIPTED_RULES = {
    "fair_dealer": _fair_dealer,
    "always_reject": _always_reject,
    "avoid_secret": _avoid_own_secret,
    "uniform": _uniform,
}

_DEFAULT_HEURISTIC = {"SplitPot": "fair_dealer", "TrapWord": "avoid_secret"}


def scripted_opponent(name: str, env: Env) -> ScriptedActor:
    """Named scripted opponent; ``heuristic`` picks the per-game default."""
    if name == "heuristic":
        name = _DEFAULT_HEURISTIC.get(env.name, "uniform")
    if name not in _SCRIPTED_RULES:
        raise ValueError(f"unknown opponent {name!r}; expected one of "
                         f"{('heuristic',) + tuple(_SCRIPTED_RULES)}")
    return ScriptedActor(_SCRIPTED_RULES[name])


def play_episode(env: Env, actors, rng: SeededRng) -> Trajectory:
    """One full episode; ``actors[role]`` chooses each move."""
    state, _ = env.reset(rng)
    turns = []
    t = 0
    while True:
        role = t % 2
        obs = env.observe(state, role)
        legal = env.legal_actions(state, role)
        action, legal_used = actors[role].act(env, state, role, obs, legal, rng)
        turns.append(Turn(t, role, obs, action, legal_used))
        state, done, rewards = env.step(state, role, action, rng)
        if done:
            invalid = state.invalid_role
            return Trajectory(tuple(turns), rewards, classify_outcome(rewards, invalid), invalid)
        t += 1


def collect_batch(
    params: PolicyParams,
    env: Env,
    batch_size: int,
    rng: SeededRng,
    masked: bool = True,
) -> list[Trajectory]:
    """``batch_size`` self-play episodes, both roles from the same params.

    Episode k plays on the independent child stream ``rng.spawn(k)``, so
    batches are reproducible and episodes could run concurrently.
    """
    actor = TabularActor(params.theta, masked=masked)
    actors = (actor, actor)
    return [play_episode(env, actors, rng.spawn(k)) for k in range(batch_size)]


# ---------------------------------------------------------------------------
# Gradients and updates
# ---------------------------------------------------------------------------


def policy_gradient(
    batch: Sequence[Trajectory],
    records: Sequence[AdvantageRecord],
    params: PolicyParams,
    gamma: float = 1.0,
) -> np.ndarray:
    """Batch-averaged score-function gradient of the expected return.

    Every turn of role p contributes A_p(tau) * grad log pi(a | o, p); with
    gamma below 1 each turn is further weighted gamma^(T-1-t) (the final
    turn undiscounted).
    """
    if len(batch) != len(records):
        raise ValueError("one advantage record per trajectory is required")
    grad = np.zeros_like(params.theta)
    memo: dict = {}
    for traj, rec in zip(batch, records):
        horizon = traj.length
        for t, role, obs, action, legal in traj.turns:
            w = rec.advantages[role]
            if w == 0.0:
                continue
            if gamma != 1.0:
                w *= gamma ** (horizon - 1 - t)
            key = (obs, role, legal)
            cached = memo.get(key)
            if cached is None:
                cached = (list(legal), action_probs(params, obs, role, legal))
                memo[key] = cached
            idx, probs = cached
            row = grad[obs, role]
            row[idx] -= w * probs
            row[action] += w
    grad /= len(batch)
    return grad


def policy_gradient_ppo(
    batch: Sequence[Trajectory],
    records: Sequence[AdvantageRecord],
    params: PolicyParams,
    behavior: PolicyParams,
    clip: float,
    gamma: float = 1.0,
) -> np.ndarray:
    """Clipped-ratio surrogate gradient against the behavior policy.

    Turns whose importance ratio falls outside [1-clip, 1+clip] on the wrong
    side of the advantage sign contribute nothing. With a single inner epoch
    the ratios are 1 and this reduces exactly to :func:`policy_gradient`.
    """
    if len(batch) != len(records):
        raise ValueError("one advantage record per trajectory is required")
    grad = np.zeros_like(params.theta)
    memo: dict = {}
    for traj, rec in zip(batch, records):
        horizon = traj.length
        for t, role, obs, action, legal in traj.turns:
            adv = rec.advantages[role]
            if adv == 0.0:
                continue
            key = (obs, role, legal)
            cached = memo.get(key)
            if cached is None:
                cached = (
                    list(legal),
                    action_probs(params, obs, role, legal),
                    action_probs(behavior, obs, role, legal),
                )
                memo[key] = cached
            idx, probs_new, probs_old = cached
            pos = legal.index(action)
            ratio = probs_new[pos] / probs_old[pos]
            if (adv >= 0 and ratio > 1.0 + clip) or (adv < 0 and ratio < 1.0 - clip):
                continue
            w = adv * ratio
            if gamma != 1.0:
                w *= gamma ** (horizon - 1 - t)
            row = grad[obs, role]
            row[idx] -= w * probs_new
            row[action] += w
    grad /= len(batch)
    return grad


def clip_by_global_norm(grad: np.ndarray, clip_norm: float) -> tuple[np.ndarray, float, float]:
    """Scale so the global norm is at most ``clip_norm``.

    Returns (clipped gradient, norm before, norm after).
    """
    raw = float(np.linalg.norm(grad))
    if raw > clip_norm:
        return grad * (clip_norm / raw), raw, clip_norm
    return grad, raw, raw


def init_optimizer(config: TrainConfig, params: PolicyParams) -> OptimizerState:
    if config.optimizer == "adaptive_moments":
        return OptimizerState(m=np.zeros_like(params.theta), v=np.zeros_like(params.theta))
    return OptimizerState()


def apply_update(
    params: PolicyParams,
    grad: np.ndarray,
    opt_state: OptimizerState,
    config: TrainConfig,
) -> tuple[PolicyParams, OptimizerState]:
    """Descent step on a loss gradient: clip by global norm, then update.

    Non-finite gradient entries abort the step (the event is logged and the
    error propagates so the run can stop with its metrics intact).
    """
    if not np.isfinite(grad).all():
        log.error("non-finite gradient entries; aborting update step")
        raise ValueError("non-finite gradient")
    g, _, _ = clip_by_global_norm(grad, config.clip_norm)
    if config.optimizer == "sgd":
        params.theta -= config.learning_rate * g
        opt_state.step += 1
        return params, opt_state
    b1, b2 = _ADAM_BETAS
    opt_state.step += 1
    opt_state.m = b1 * opt_state.m + (1 - b1) * g
    opt_state.v = b2 * opt_state.v + (1 - b2) * g * g
    mhat = opt_state.m / (1 - b1 ** opt_state.step)
    vhat = opt_state.v / (1 - b2 ** opt_state.step)
    params.theta -= config.learning_rate * mhat / (np.sqrt(vhat) + _ADAM_EPS)
    return params, opt_state


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    params: PolicyParams,
    opponent,
    env: Env,
    episodes: int,
    rng: SeededRng,
) -> EvalReport:
    """Score ``params`` against a frozen opponent, half the episodes per seat.

    ``opponent`` is a PolicySnapshot or an actor object with an ``act``
    method. Both sides act masked to the legal set; win rate counts episodes
    the evaluated side finished with the winning label. Nothing is trained or
    mutated.
    """
    if episodes < 2 or episodes % 2:
        raise ValueError("episodes must be even and >= 2")
    me = TabularActor(params.theta.copy(), masked=True)
    if isinstance(opponent, PolicySnapshot):
        opp = TabularActor(opponent.theta, masked=True)
    elif isinstance(opponent, PolicyParams):
        opp = TabularActor(opponent.theta.copy(), masked=True)
    else:
        opp = opponent
    half = episodes // 2
    tallies = np.zeros((2, 3), dtype=int)  # [seat][win, draw, loss]
    for i in range(episodes):
        seat = 0 if i < half else 1
        actors = (me, opp) if seat == 0 else (opp, me)
        traj = play_episode(env, actors, rng.spawn(i))
        tallies[seat, int(traj.outcomes[seat])] += 1
    total = tallies.sum(axis=0) / episodes
    return EvalReport(
        win_rate=float(total[0]),
        draw_rate=float(total[1]),
        loss_rate=float(total[2]),
        episodes=episodes,
        first_player=tuple(tallies[0] / half),
        second_player=tuple(tallies[1] / half),
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    """Everything a finished run leaves behind."""

    config: TrainConfig
    spec: GameSpec
    params: PolicyParams
    rows: list[dict]
    snapshot_start: PolicySnapshot
    snapshot_final: PolicySnapshot
    eval_history: list[tuple[int, EvalReport]]
    run_dir: Optional[Path] = None
    metrics_path: Optional[Path] = None
    manifest_path: Optional[Path] = None
    records_hook_data: Optional[list] = None


def run_dir_name(spec: GameSpec, config: TrainConfig) -> str:
    return f"{spec.name}_{config.estimator}_{config.seed}"


def _mean_reward(batch: Sequence[Trajectory]) -> float:
    return float(np.mean([r for t in batch for r in t.rewards]))


def train(
    config: TrainConfig,
    spec: GameSpec,
    out_dir: Optional[Path | str] = None,
    records_hook: Optional[Callable] = None,
) -> RunResult:
    """Run the full training loop.

    When ``out_dir`` is given, a run directory ``{env}_{estimator}_{seed}``
    is created there holding ``metrics.csv``, ``manifest.txt`` and a
    ``snapshots/`` folder. ``records_hook(step, batch, records, stats,
    signal, state)`` is called once per step when provided (used by audits).
    """
    config.validate()
    env = make_env(spec)
    params = init_params(env.observation_count, env.action_count)
    opt_state = init_optimizer(config, params)
    est_state = make_estimator_state(
        config.estimator, config.alpha_fast, config.alpha_slow, config.bounds_scope
    )

    train_base = hash64(config.seed, _TRAIN_STREAM)
    eval_base = hash64(config.seed, _EVAL_STREAM)

    run_dir = metrics_path = manifest_path = None
    writer = None
    snap_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / run_dir_name(spec, config)
        run_dir.mkdir(parents=True, exist_ok=True)
        snap_dir = run_dir / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        metrics_path = run_dir / "metrics.csv"
        manifest_path = run_dir / "manifest.txt"
        telemetry.write_manifest_start(manifest_path, config, spec)
        writer = telemetry.MetricsWriter(metrics_path)

    snap0 = snapshot(params, 0, seed=config.seed)
    if snap_dir is not None:
        save_snapshot(snap0, snap_dir / "step_00000.txt")
    opponent0 = snap0

    rows: list[dict] = []
    eval_history: list[tuple[int, EvalReport]] = []
    hook_data: list = [] if records_hook is not None else None

    try:
        for step in range(1, config.steps + 1):
            batch_rng = SeededRng(hash64(train_base, step))
            batch = collect_batch(params, env, config.batch_size, batch_rng, config.masked)
            records, stats, signal, est_state = estimate(
                config.estimator, batch, est_state, config.baseline_update
            )
            if records_hook is not None:
                hook_data.append(records_hook(step, batch, records, stats, signal, est_state))

            if config.ppo_clip is not None:
                behavior = params.copy()
                ascent = policy_gradient_ppo(
                    batch, records, params, behavior, config.ppo_clip, config.gamma
                )
            else:
                ascent = policy_gradient(batch, records, params, config.gamma)
            loss_grad = -ascent
            raw_norm = float(np.linalg.norm(loss_grad))
            clipped_norm = min(raw_norm, config.clip_norm)
            params, opt_state = apply_update(params, loss_grad, opt_state, config)

            eval_win = None
            if step % config.eval_every == 0 or step == config.steps:
                report = evaluate(
                    params, opponent0, env, config.eval_episodes,
                    SeededRng(hash64(eval_base, step)),
                )
                eval_history.append((step, report))
                eval_win = report.win_rate
                if snap_dir is not None:
                    save_snapshot(
                        snapshot(params, step, seed=config.seed),
                        snap_dir / f"step_{step:05d}.txt",
                    )

            role0_rates = stats.counts[0] / len(batch)
            row = {
                "step": step,
                "reward_mean": _mean_reward(batch),
                "game_len_mean": float(np.mean([t.length for t in batch])),
                "h_match": stats.h_match,
                "sigma_0": signal.sigma[0] if signal else None,
                "sigma_1": signal.sigma[1] if signal else None,
                "lambda_0": signal.lam[0] if signal else None,
                "lambda_1": signal.lam[1] if signal else None,
                "b_fast_0": None,
                "b_fast_1": None,
                "b_slow_0": None,
                "b_slow_1": None,
                "v_max_0": None,
                "v_min_0": None,
                "v_max_1": None,
                "v_min_1": None,
                "grad_norm_raw": raw_norm,
                "grad_norm_clipped": clipped_norm,
                "win_rate": float(role0_rates[0]),
                "draw_rate": float(role0_rates[1]),
                "loss_rate": float(role0_rates[2]),
                "eval_win_rate": eval_win,
            }
            _fill_baseline_columns(row, config.estimator, est_state)
            rows.append(row)
            if writer is not None:
                writer.append(row)
    finally:
        if writer is not None:
            writer.close()

    snap_final = snapshot(params, config.steps, seed=config.seed)
    if manifest_path is not None:
        final_ckpt = snap_dir / f"step_{config.steps:05d}.txt"
        if not final_ckpt.exists():
            save_snapshot(snap_final, final_ckpt)
        best_step = max(eval_history, key=lambda item: item[1].win_rate)[0]
        telemetry.write_manifest_end(
            manifest_path,
            final_ckpt,
            best_eval_step=best_step,
            best_eval_checkpoint=snap_dir / f"step_{best_step:05d}.txt",
        )

    return RunResult(
        config=config,
        spec=spec,
        params=params,
        rows=rows,
        snapshot_start=snap0,
        snapshot_final=snap_final,
        eval_history=eval_history,
        run_dir=run_dir,
        metrics_path=metrics_path,
        manifest_path=manifest_path,
        records_hook_data=hook_data,
    )


def _fill_baseline_columns(row: dict, estimator: str, est_state) -> None:
    if isinstance(est_state, DualBaselineState):
        for p in (0, 1):
            row[f"b_fast_{p}"] = float(est_state.b_fast[p])
            row[f"b_slow_{p}"] = float(est_state.b_slow[p])
            if est_state.initialized[p]:
                row[f"v_max_{p}"] = float(est_state.v_max[p])
                row[f"v_min_{p}"] = float(est_state.v_min[p])
    elif isinstance(est_state, EmaBaselineState):
        slot = "b_fast" if estimator == "fast_only" else "b_slow"
        for p in (0, 1):
            row[f"{slot}_{p}"] = float(est_state.b[p])
