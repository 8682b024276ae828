"""Brute-force and closed-form verifiers for the estimator theory.

Everything here is an independent route to a quantity the trainer also
produces: exact expected gradients by trajectory enumeration, EMA divergence
against its drift-rate prediction, reward variance against outcome entropy,
the variance bound on the policy-gradient norm, and the push-pull gradient
restoration on a synthetic collapsed batch. The verification suite used by
the ``verify`` subcommand lives at the bottom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .advantage import fused_baseline, match_entropy
from .core import SeededRng
from .envs import Env, GameSpec, MatrixGame, RiggedBandit, make_env
from .policy import PolicyParams, action_probs

_OUTCOME_REWARDS = np.array([1.0, 0.0, -1.0])  # role-0 reward by (win, draw, loss)


# ---------------------------------------------------------------------------
# Exact enumeration on the finite-trajectory environments
# ---------------------------------------------------------------------------


def _enumerable(spec: GameSpec) -> Env:
    env = make_env(spec)
    if not isinstance(env, (MatrixGame, RiggedBandit)):
        raise ValueError(f"{spec.name} is not enumerable")
    return env


def _joint_outcomes(env: Env):
    """Yield (a0, a1, p_outcome, r0) over the whole trajectory space."""
    if isinstance(env, MatrixGame):
        n = env.action_count
        for a0 in range(n):
            for a1 in range(n):
                yield a0, a1, 1.0, float(env.payoff[a0, a1])
    else:
        a0s, a1s = env.action_counts
        for a0 in range(a0s):
            for a1 in range(a1s):
                for o in range(3):
                    p = float(env.table[a0, a1, o])
                    if p > 0:
                        yield a0, a1, p, float(_OUTCOME_REWARDS[o])


def _role_policies(env: Env, params: PolicyParams):
    legal0 = env.legal_actions(env._initial_state(None), 0)
    # role 1 acts at turn 1; legality there never depends on role 0's move
    if isinstance(env, RiggedBandit):
        legal1 = tuple(range(env.action_counts[1]))
    else:
        legal1 = tuple(range(env.action_count))
    pi0 = action_probs(params, 0, 0, legal0)
    pi1 = action_probs(params, 0, 1, legal1)
    return legal0, legal1, pi0, pi1


def exact_mean_return(spec: GameSpec, params: PolicyParams) -> tuple[float, float]:
    """Exact expected terminal reward per role."""
    env = _enumerable(spec)
    _, _, pi0, pi1 = _role_policies(env, params)
    mu0 = 0.0
    for a0, a1, p, r0 in _joint_outcomes(env):
        mu0 += pi0[a0] * pi1[a1] * p * r0
    return mu0, -mu0


def exact_reward_variance(spec: GameSpec, params: PolicyParams) -> float:
    """Exact variance of the terminal reward (equal for both roles)."""
    env = _enumerable(spec)
    _, _, pi0, pi1 = _role_policies(env, params)
    mu, _ = exact_mean_return(spec, params)
    nu = 0.0
    for a0, a1, p, r0 in _joint_outcomes(env):
        nu += pi0[a0] * pi1[a1] * p * (r0 - mu) ** 2
    return nu


def exact_expected_gradient(
    spec: GameSpec,
    params: PolicyParams,
    baselines: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """Exact policy-gradient expectation with fixed per-role baselines.

    Enumerates every (a0, a1, outcome) triple weighted by policy and outcome
    probabilities; the per-role advantage is the role reward minus that
    role's baseline.
    """
    env = _enumerable(spec)
    legal0, legal1, pi0, pi1 = _role_policies(env, params)
    grad = np.zeros_like(params.theta)
    for a0, a1, p, r0 in _joint_outcomes(env):
        w = pi0[a0] * pi1[a1] * p
        adv0 = r0 - baselines[0]
        adv1 = -r0 - baselines[1]
        grad[0, 0, list(legal0)] -= w * adv0 * pi0
        grad[0, 0, a0] += w * adv0
        grad[0, 1, list(legal1)] -= w * adv1 * pi1
        grad[0, 1, a1] += w * adv1
    return grad


def mc_expected_gradient(
    spec: GameSpec,
    params: PolicyParams,
    baselines: tuple[float, float],
    episodes: int,
    rng: SeededRng,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo counterpart of :func:`exact_expected_gradient`.

    Vectorized sampler (inverse CDF throughout). Returns the estimate and the
    per-component standard error, both shaped like theta.
    """
    env = _enumerable(spec)
    legal0, legal1, pi0, pi1 = _role_policies(env, params)
    gen = rng.generator
    a0 = np.searchsorted(np.cumsum(pi0), gen.random(episodes), side="right")
    a1 = np.searchsorted(np.cumsum(pi1), gen.random(episodes), side="right")
    a0 = np.minimum(a0, len(pi0) - 1)
    a1 = np.minimum(a1, len(pi1) - 1)
    if isinstance(env, MatrixGame):
        r0 = env.payoff[a0, a1]
    else:
        cum = np.cumsum(env.table, axis=2)
        u = gen.random(episodes)
        pair_cum = cum[a0, a1]  # (episodes, 3)
        o = (u[:, None] >= pair_cum).sum(axis=1)
        r0 = _OUTCOME_REWARDS[np.minimum(o, 2)]
    adv0 = r0 - baselines[0]
    adv1 = -r0 - baselines[1]

    grad = np.zeros_like(params.theta)
    se = np.zeros_like(params.theta)
    for role, actions, adv, pi, legal in (
        (0, a0, adv0, pi0, legal0),
        (1, a1, adv1, pi1, legal1),
    ):
        onehot = np.zeros((episodes, len(legal)))
        onehot[np.arange(episodes), actions] = 1.0
        contrib = adv[:, None] * (onehot - pi[None, :])
        grad[0, role, list(legal)] = contrib.mean(axis=0)
        se[0, role, list(legal)] = contrib.std(axis=0, ddof=1) / math.sqrt(episodes)
    return grad, se


# ---------------------------------------------------------------------------
# EMA divergence as a drift-rate estimate
# ---------------------------------------------------------------------------


def velocity_divergence_check(
    alpha_fast: float,
    alpha_slow: float,
    drift_rate: float,
    noise_sd: float,
    steps: int,
    rng: Optional[SeededRng] = None,
    burn_in: Optional[int] = None,
) -> tuple[float, float]:
    """Measured vs predicted fast/slow divergence on a linearly drifting reward.

    Feeds ``R_t = drift_rate * t + noise`` through both EMAs and averages
    ``|b_fast - b_slow|`` after burn-in (default 20 slow time constants).
    The prediction is ``(T_slow - T_fast) * |drift_rate|`` with
    ``T_k = alpha_k / (1 - alpha_k)``.
    """
    if burn_in is None:
        burn_in = math.ceil(20.0 / (1.0 - alpha_slow))
    if rng is None:
        rng = SeededRng(0)
    total = burn_in + steps
    noise = rng.generator.normal(0.0, noise_sd, size=total) if noise_sd > 0 else np.zeros(total)
    b_fast = b_slow = 0.0
    acc = 0.0
    for t in range(total):
        r = drift_rate * t + noise[t]
        b_fast = alpha_fast * b_fast + (1.0 - alpha_fast) * r
        b_slow = alpha_slow * b_slow + (1.0 - alpha_slow) * r
        if t >= burn_in:
            acc += abs(b_fast - b_slow)
    t_fast = alpha_fast / (1.0 - alpha_fast)
    t_slow = alpha_slow / (1.0 - alpha_slow)
    return acc / steps, (t_slow - t_fast) * abs(drift_rate)


# ---------------------------------------------------------------------------
# Entropy versus reward variance
# ---------------------------------------------------------------------------


def entropy_variance_check(
    outcome_dist: Sequence[float], rewards: Sequence[float] = (1.0, 0.0, -1.0)
) -> tuple[float, float]:
    """(normalized entropy, exact reward variance) of an outcome distribution."""
    p = np.asarray(outcome_dist, dtype=float)
    if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("outcome_dist must be a probability vector")
    r = np.asarray(rewards, dtype=float)
    mu = float(p @ r)
    nu = float(p @ (r - mu) ** 2)
    return match_entropy(p), nu


# ---------------------------------------------------------------------------
# Variance bound on the gradient norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientBoundResult:
    grad_norm: float
    bound: float
    g_max: float
    variance: float

    @property
    def holds(self) -> bool:
        return self.grad_norm <= self.bound + 1e-12


def gradient_bound_check(spec: GameSpec, params: PolicyParams) -> GradientBoundResult:
    """Exact gradient norm against G_max * sqrt(variance).

    The gradient uses the exact mean return as baseline; G_max is the largest
    score norm over every reachable (obs, role, action).
    """
    env = _enumerable(spec)
    legal0, legal1, pi0, pi1 = _role_policies(env, params)
    mu = exact_mean_return(spec, params)
    grad = exact_expected_gradient(spec, params, baselines=mu)
    nu = exact_reward_variance(spec, params)
    g_max = 0.0
    for pi in (pi0, pi1):
        for a in range(len(pi)):
            score = -pi.copy()
            score[a] += 1.0
            g_max = max(g_max, float(np.linalg.norm(score)))
    return GradientBoundResult(
        grad_norm=float(np.linalg.norm(grad)),
        bound=g_max * math.sqrt(nu),
        g_max=g_max,
        variance=nu,
    )


def dominance_table(p_dom: float) -> list:
    """One-parameter outcome-table family for the vanishing-gradient demo.

    At ``p_dom = 0.5`` the win probability depends strongly on role 0's
    action (0.9 if it plays 0, else 0.1; no draws); as ``p_dom`` rises the
    table blends linearly toward certain-win, and under a uniform policy the
    marginal win probability equals ``p_dom`` itself.
    """
    if not 0.5 <= p_dom <= 1.0:
        raise ValueError("p_dom must lie in [0.5, 1]")
    w = (p_dom - 0.5) / 0.5
    table = []
    for a0 in range(2):
        row = []
        for a1 in range(2):
            p_win_rich = 0.9 if a0 == 0 else 0.1
            p_win = (1 - w) * p_win_rich + w * 1.0
            row.append([p_win, 0.0, 1.0 - p_win])
        table.append(row)
    return table


# ---------------------------------------------------------------------------
# Push-pull gradient restoration on a collapsed batch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PushPullResult:
    rae_norm: float
    dept_norm: float
    min_score_norm: float


def push_pull_check(
    v_max: float,
    v_min: float,
    lam: float,
    m_dominant: int,
    n_rare: int,
    action_count: int = 2,
) -> PushPullResult:
    """Gradient norms of both estimators on a synthetic collapsed batch.

    The batch holds ``m_dominant`` trajectories labeled with the dominant
    outcome (Draw) and ``n_rare`` labeled rare (Win/Loss), all carrying the
    converged reward 0 for both roles, with baselines already at 0. The
    single-EMA advantages are then identically zero, while the reshaped
    baseline pulls dominant trajectories to ``v_max`` and rare ones to
    ``v_min``. Dominant trajectories play action 0 for both roles, rare ones
    action 1, on a fixed uniform policy.
    """
    if n_rare < 1 or m_dominant < n_rare:
        raise ValueError("need m_dominant >= n_rare >= 1")
    b = m_dominant + n_rare
    pi = np.full(action_count, 1.0 / action_count)

    def score(action: int) -> np.ndarray:
        s = -pi.copy()
        s[action] += 1.0
        return s

    min_score = min(float(np.linalg.norm(score(0))), float(np.linalg.norm(score(1))))
    adv_dom = 0.0 - fused_baseline(lam, 0.0, v_max)
    adv_rare = 0.0 - fused_baseline(lam, 0.0, v_min)

    rae_grad = np.zeros((1, 2, action_count))
    dept_grad = np.zeros((1, 2, action_count))
    for role in (0, 1):
        # single-EMA advantage is 0 - 0 for every trajectory
        dept_grad[0, role] = (
            m_dominant * adv_dom * score(0) + n_rare * adv_rare * score(1)
        ) / b
    return PushPullResult(
        rae_norm=float(np.linalg.norm(rae_grad)),
        dept_norm=float(np.linalg.norm(dept_grad)),
        min_score_norm=min_score,
    )


# ---------------------------------------------------------------------------
# Verification suite (the `verify` subcommand)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_spec_and_params(gen: np.random.Generator) -> tuple[GameSpec, PolicyParams]:
    raw = gen.random((2, 2, 3)) + 0.05
    table = raw / raw.sum(axis=2, keepdims=True)
    spec = GameSpec(name="RiggedBandit", outcome_table=table.tolist())
    params = PolicyParams(gen.normal(0.0, 1.0, size=(1, 2, 2)))
    return spec, params


def check_velocity(seed: int = 7) -> list[CheckResult]:
    out = []
    for c in (0.005, 0.01, 0.02):
        measured, predicted = velocity_divergence_check(
            0.5, 0.95, c, noise_sd=0.1, steps=10_000, rng=SeededRng(seed)
        )
        rel = abs(measured - predicted) / predicted
        out.append(
            CheckResult(
                f"velocity_divergence c={c}",
                rel <= 0.2,
                f"measured={measured:.5f} predicted={predicted:.5f} rel_err={rel:.3f}",
            )
        )
    measured, _ = velocity_divergence_check(0.5, 0.95, 0.0, 0.0, steps=2000)
    out.append(CheckResult("velocity_stationary", measured < 1e-9, f"measured={measured:.2e}"))
    return out


def check_entropy_variance() -> list[CheckResult]:
    h0, v0 = entropy_variance_check((1.0, 0.0, 0.0))
    h1, v1 = entropy_variance_check((1 / 3, 1 / 3, 1 / 3))
    # variance peaks at p_win = 4/9 on this path; sweep the collapsing side
    sweep = [entropy_variance_check((p, (1 - p) / 2, (1 - p) / 2))[1]
             for p in np.linspace(0.45, 0.999, 25)]
    monotone = all(a >= b - 1e-12 for a, b in zip(sweep, sweep[1:]))
    return [
        CheckResult("entropy_degenerate", h0 == 0.0 and v0 == 0.0, f"H={h0} var={v0}"),
        CheckResult(
            "entropy_uniform",
            abs(h1 - 1.0) < 1e-12 and abs(v1 - 2 / 3) < 1e-12,
            f"H={h1} var={v1}",
        ),
        CheckResult(
            "variance_vanishes_with_entropy",
            monotone and sweep[-1] < 0.01,
            f"var(p_win=0.999)={sweep[-1]:.4f}",
        ),
    ]


def check_gradient_bound(cases: int = 100, seed: int = 11) -> list[CheckResult]:
    gen = np.random.Generator(np.random.Philox(key=seed))
    held = 0
    for _ in range(cases):
        spec, params = _random_spec_and_params(gen)
        if gradient_bound_check(spec, params).holds:
            held += 1
    uniform = PolicyParams(np.zeros((1, 2, 2)))
    norm_mid = gradient_bound_check(
        GameSpec(name="RiggedBandit", outcome_table=dominance_table(0.5)), uniform
    ).grad_norm
    res_hi = gradient_bound_check(
        GameSpec(name="RiggedBandit", outcome_table=dominance_table(0.999)), uniform
    )
    return [
        CheckResult(f"gradient_bound_{cases}_cases", held == cases, f"held={held}/{cases}"),
        CheckResult(
            "vanishing_gradient_demo",
            res_hi.holds and res_hi.grad_norm < 0.1 * norm_mid,
            f"norm(p=0.999)={res_hi.grad_norm:.5f} norm(p=0.5)={norm_mid:.5f}",
        ),
    ]


def check_push_pull() -> list[CheckResult]:
    out = []
    base = push_pull_check(0.5, -0.5, 1.0, 127, 1)
    out.append(
        CheckResult(
            "push_pull_restoration",
            base.rae_norm <= 1e-6 and base.dept_norm > base.rae_norm,
            f"rae={base.rae_norm:.2e} dept={base.dept_norm:.4f}",
        )
    )
    sweep = [push_pull_check(dv / 2, -dv / 2, 1.0, 127, 1).dept_norm
             for dv in (0.25, 0.5, 1.0, 2.0, 4.0)]
    monotone = all(b > a for a, b in zip(sweep, sweep[1:]))
    out.append(CheckResult("push_pull_scaling", monotone,
                           "norms=" + ",".join(f"{v:.3f}" for v in sweep)))
    collapsed = push_pull_check(0.0, 0.0, 1.0, 127, 1)
    out.append(
        CheckResult(
            "push_pull_collapsed_bounds",
            collapsed.dept_norm == collapsed.rae_norm,
            f"dept={collapsed.dept_norm} rae={collapsed.rae_norm}",
        )
    )
    doubled = push_pull_check(1.0, -1.0, 1.0, 127, 1).dept_norm
    single = push_pull_check(0.5, -0.5, 1.0, 127, 1).dept_norm
    out.append(
        CheckResult(
            "push_pull_variance_quadratic",
            doubled >= 2.0 * single - 1e-12,
            f"norm(2dv)={doubled:.4f} norm(dv)={single:.4f}",
        )
    )
    return out


def check_sampler_agreement(
    policies: int = 20, episodes: int = 100_000, seed: int = 17
) -> list[CheckResult]:
    gen = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    ok = True
    for i in range(policies):
        spec, params = _random_spec_and_params(gen)
        exact = exact_expected_gradient(spec, params)
        mc, se = mc_expected_gradient(spec, params, (0.0, 0.0), episodes, SeededRng(seed + i))
        z = np.abs(mc - exact) / (3.0 * se + 1e-9)
        worst = max(worst, float(z.max()))
        if float(z.max()) > 1.0:
            ok = False
    return [
        CheckResult(
            f"oracle_sampler_agreement_{policies}x{episodes}",
            ok,
            f"worst |err|/3se={worst:.3f}",
        )
    ]


def check_exact_gradient_sanity() -> list[CheckResult]:
    pennies = GameSpec(name="MatrixGame", payoff_matrix=((1, -1), (-1, 1)))
    uniform = PolicyParams(np.zeros((1, 2, 2)))
    g_sym = exact_expected_gradient(pennies, uniform, baselines=(0.0, 0.0))
    det = GameSpec(
        name="RiggedBandit",
        outcome_table=(((1, 0, 0), (1, 0, 0)), ((1, 0, 0), (1, 0, 0))),
    )
    mu = exact_mean_return(det, uniform)
    g_det = exact_expected_gradient(det, uniform, baselines=mu)
    return [
        CheckResult("exact_gradient_symmetry", float(np.abs(g_sym).max()) < 1e-15,
                    f"max|g|={np.abs(g_sym).max():.2e}"),
        CheckResult("exact_gradient_zero_advantage", float(np.abs(g_det).max()) < 1e-15,
                    f"max|g|={np.abs(g_det).max():.2e}"),
    ]


def run_verification_suite(quick: bool = False) -> list[CheckResult]:
    """All oracle checks; ``quick`` shrinks the randomized audits."""
    results = []
    results += check_velocity()
    results += check_entropy_variance()
    results += check_gradient_bound(cases=20 if quick else 100)
    results += check_push_pull()
    results += check_sampler_agreement(
        policies=5 if quick else 20, episodes=20_000 if quick else 100_000
    )
    results += check_exact_gradient_sanity()
    return results
