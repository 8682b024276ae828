"""End-to-end acceptance suite.

One test per criterion, each printing a pass line with its headline numbers.
The trend criteria share one session-scoped grid of full-scale SplitPot runs
(400 steps, batch 128, seeds 42/100/200) built by the ``splitpot_grid``
fixture. Run with ``pytest tests/test_acceptance.py -v -s`` to watch progress.
"""

import math
import time

import numpy as np
import pytest

from deptlab.advantage import (
    fused_baseline,
    intervention,
    match_entropy,
    stagnation,
    update_ema,
)
from deptlab.core import SeededRng
from deptlab.envs import GameSpec
from deptlab.oracle import (
    check_sampler_agreement,
    dominance_table,
    gradient_bound_check,
    push_pull_check,
    velocity_divergence_check,
)
from deptlab.policy import PolicyParams
from deptlab.trainer import TrainConfig, train

from conftest import GRID_SEEDS

LOG3 = math.log(3.0)


def tail_mean(rows, column, n=100):
    return float(np.mean([r[column] for r in rows[-n:]]))


def final_eval(rows):
    return rows[-1]["eval_win_rate"]


def test_a1_formula_unit_suite():
    t0 = time.perf_counter()
    # match entropy
    assert match_entropy((5, 5, 5)) == pytest.approx(1.0, abs=1e-9)
    assert match_entropy((9, 0, 0)) == pytest.approx(0.0, abs=1e-9)
    assert match_entropy((1, 1, 0)) == pytest.approx(math.log(2) / LOG3, abs=1e-9)
    # stagnation
    assert stagnation(0.0, 0.0) == pytest.approx(1.0, abs=1e-9)
    assert stagnation(0.5, 0.0) == pytest.approx(1.0 - math.tanh(0.5), abs=1e-9)
    assert stagnation(0.5, 0.0) == pytest.approx(0.537883, abs=1e-6)
    assert stagnation(5.0, 0.0) == pytest.approx(1.0 - math.tanh(5.0), abs=1e-9)
    # intervention
    assert intervention(1.0, 0.0) == pytest.approx(1.0, abs=1e-9)
    assert intervention(0.7, 1.0) == 0.0
    assert intervention(0.5, 0.75) == pytest.approx(0.25, abs=1e-9)
    # EMA update
    assert update_ema(0.0, 0.5, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert update_ema(0.5, 0.95, 0.5) == pytest.approx(0.5, abs=1e-9)
    assert update_ema(1.0, 0.5, -1.0) == pytest.approx(0.0, abs=1e-9)
    # asymmetric value selection
    from deptlab.advantage import asymmetric_value
    from deptlab.core import Outcome

    assert asymmetric_value(Outcome.WIN, Outcome.WIN, 0.8, -0.6) == pytest.approx(0.8, abs=1e-9)
    assert asymmetric_value(Outcome.DRAW, Outcome.WIN, 0.8, -0.6) == pytest.approx(-0.6, abs=1e-9)
    # baseline fusion
    assert fused_baseline(0.0, 0.2, 0.8) == pytest.approx(0.2, abs=1e-9)
    assert fused_baseline(1.0, 0.2, 0.8) == pytest.approx(0.8, abs=1e-9)
    assert fused_baseline(0.5, 0.2, 0.8) == pytest.approx(0.5, abs=1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"\n[A1] PASS: formula unit suite exact to 1e-9 ({elapsed:.3f}s)")


def test_a2_velocity_divergence():
    t0 = time.perf_counter()
    details = []
    for c in (0.005, 0.01, 0.02):
        measured, predicted = velocity_divergence_check(
            0.5, 0.95, c, noise_sd=0.1, steps=10_000, rng=SeededRng(7)
        )
        rel = abs(measured - predicted) / predicted
        assert rel <= 0.20, f"c={c}: measured {measured:.4f} vs {predicted:.4f}"
        details.append(f"c={c}: {measured:.4f}/{predicted:.4f}")
    _, predicted = velocity_divergence_check(0.5, 0.95, 0.01, 0.0, steps=10)
    assert predicted == pytest.approx(0.18, abs=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"[A2] PASS: velocity divergence within 20% ({'; '.join(details)}) ({elapsed:.2f}s)")


def test_a3_gradient_bound():
    t0 = time.perf_counter()
    gen = np.random.Generator(np.random.Philox(key=11))
    held = 0
    for _ in range(100):
        raw = gen.random((2, 2, 3)) + 0.05
        spec = GameSpec(
            name="RiggedBandit", outcome_table=(raw / raw.sum(2, keepdims=True)).tolist()
        )
        params = PolicyParams(gen.normal(0, 1, size=(1, 2, 2)))
        held += gradient_bound_check(spec, params).holds
    assert held == 100
    uniform = PolicyParams(np.zeros((1, 2, 2)))
    mid = gradient_bound_check(
        GameSpec(name="RiggedBandit", outcome_table=dominance_table(0.5)), uniform
    ).grad_norm
    hi = gradient_bound_check(
        GameSpec(name="RiggedBandit", outcome_table=dominance_table(0.999)), uniform
    ).grad_norm
    assert hi < 0.1 * mid
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(
        f"[A3] PASS: bound held 100/100; norm(p_dom=0.999)={hi:.5f} < 10% of "
        f"norm(p_dom=0.5)={mid:.5f} ({elapsed:.2f}s)"
    )


def test_a4_push_pull_restoration():
    t0 = time.perf_counter()
    base = push_pull_check(0.5, -0.5, 1.0, 127, 1)
    assert base.rae_norm <= 1e-6
    assert base.dept_norm > 0.0
    sweep = [
        push_pull_check(dv / 2, -dv / 2, 1.0, 127, 1).dept_norm
        for dv in (0.25, 0.5, 1.0, 2.0, 4.0)
    ]
    assert all(b > a for a, b in zip(sweep, sweep[1:]))
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(
        f"[A4] PASS: rae_norm={base.rae_norm:.1e} <= 1e-6, dept_norm={base.dept_norm:.4f}, "
        f"monotone sweep {['%.3f' % v for v in sweep]} ({elapsed:.2f}s)"
    )


def test_a5_impasse_escape_trend(splitpot_grid):
    votes = {"h_match": 0, "eval": 0, "grad": 0}
    details = []
    for seed in GRID_SEEDS:
        dept = splitpot_grid[("dept", seed)][0].rows
        rae = splitpot_grid[("rae", seed)][0].rows
        h_d, h_r = tail_mean(dept, "h_match"), tail_mean(rae, "h_match")
        e_d, e_r = final_eval(dept), final_eval(rae)
        g_d, g_r = tail_mean(dept, "grad_norm_clipped"), tail_mean(rae, "grad_norm_clipped")
        votes["h_match"] += h_d > h_r
        votes["eval"] += e_d > e_r
        votes["grad"] += g_d > g_r
        details.append(
            f"seed {seed}: H {h_d:.3f}/{h_r:.3f} eval {e_d:.3f}/{e_r:.3f} grad {g_d:.4f}/{g_r:.4f}"
        )
    elapsed = sum(splitpot_grid[(est, s)][1] for est in ("dept", "rae") for s in GRID_SEEDS)
    assert votes["h_match"] >= 2, details
    assert votes["eval"] >= 2, details
    assert votes["grad"] >= 2, details
    for seed in GRID_SEEDS:
        # the trained policy must dominate its own frozen starting point
        _, report = splitpot_grid[("dept", seed)][0].eval_history[-1]
        assert report.win_rate > report.loss_rate
    assert elapsed < 600.0
    print(
        f"[A5] PASS: dept/rae orderings H={votes['h_match']}/3 eval={votes['eval']}/3 "
        f"grad={votes['grad']}/3 ({elapsed:.0f}s of runs); " + "; ".join(details)
    )


def test_a6_ablation_ordering(splitpot_grid):
    ablations = ("no_sigma", "no_entropy_gate", "no_asym", "fast_only", "slow_only")
    means = {}
    for est in ("dept",) + ablations:
        means[est] = float(np.mean([final_eval(splitpot_grid[(est, s)][0].rows)
                                    for s in GRID_SEEDS]))
    shortfalls = {k: v for k, v in means.items() if k != "dept" and means["dept"] < v}
    total_elapsed = sum(t for _, t in splitpot_grid.values())
    assert not shortfalls, f"dept mean {means['dept']:.4f} below: {shortfalls}"
    assert total_elapsed < 1800.0
    ordering = " ".join(f"{k}={v:.4f}" for k, v in means.items())
    print(f"[A6] PASS: {ordering} (grid total {total_elapsed:.0f}s)")


def test_a7_lambda_gating_invariants(splitpot_grid):
    # (1) every logged step of every grid run
    rows_checked = 0
    for (est, seed), (result, _) in splitpot_grid.items():
        for row in result.rows:
            lam = (row["lambda_0"], row["lambda_1"])
            if lam[0] is None:
                continue
            for p, lam_p in enumerate(lam):
                assert 0.0 <= lam_p <= 1.0
                if row["h_match"] == 1.0 and est != "no_entropy_gate":
                    assert lam_p == 0.0
                v_max, v_min = row[f"v_max_{p}"], row[f"v_min_{p}"]
                b_slow = row[f"b_slow_{p}"]
                contrast = ((1 - lam_p) * b_slow + lam_p * v_max) - (
                    (1 - lam_p) * b_slow + lam_p * v_min
                )
                assert contrast >= -1e-12
                assert abs(contrast - lam_p * (v_max - v_min)) <= 1e-9
            rows_checked += 1

    # (2) record-level audit on a dedicated unmasked run with batch-shared
    # lambda: same-reward pairs with different dominance labels must differ by
    # exactly lambda * (v_max - v_min)
    audits = []

    def hook(step, batch, records, stats, signal, state):
        return (
            records,
            stats.o_dom,
            signal.lam,
            (float(state.v_max[0]), float(state.v_max[1])),
            (float(state.v_min[0]), float(state.v_min[1])),
        )

    config = TrainConfig(
        steps=40,
        batch_size=128,
        eval_every=40,
        eval_episodes=64,
        seed=42,
        estimator="dept",
        baseline_update="per_batch_mean",
        masked=False,
    )
    result = train(config, GameSpec(name="SplitPot"), records_hook=hook)
    pairs_checked = 0
    for records, o_dom, lam, v_max, v_min in result.records_hook_data:
        for p in (0, 1):
            dominant = {}
            rare = {}
            for rec in records:
                outcome = rec.trajectory.outcomes[p]
                bucket = dominant if outcome == o_dom[p] else rare
                bucket.setdefault(rec.rewards[p], rec)
            for reward, rare_rec in rare.items():
                dom_rec = dominant.get(reward)
                if dom_rec is None:
                    continue
                gap = rare_rec.advantages[p] - dom_rec.advantages[p]
                expected = lam[p] * (v_max[p] - v_min[p])
                assert abs(gap - expected) <= 1e-9
                assert gap >= -1e-12
                pairs_checked += 1
    assert pairs_checked > 0, "audit found no same-reward dominant/rare pairs"
    print(
        f"[A7] PASS: lambda in [0,1] on {rows_checked} logged steps; "
        f"contrastive identity exact on {pairs_checked} same-reward pairs"
    )


A8_CONFIGS = [
    dict(estimator="dept"),
    dict(estimator="rae"),
    dict(estimator="grpo", optimizer="sgd"),
    dict(estimator="dept", baseline_update="per_batch_mean", masked=False),
]


def test_a8_byte_identical_reruns(tmp_path):
    spec = GameSpec(name="SplitPot")
    for i, overrides in enumerate(A8_CONFIGS):
        config = TrainConfig(
            steps=25, batch_size=64, eval_every=10, eval_episodes=64, seed=42, **overrides
        )
        a = train(config, spec, out_dir=tmp_path / f"{i}_a")
        b = train(config, spec, out_dir=tmp_path / f"{i}_b")
        assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes(), overrides
    print(f"[A8] PASS: {len(A8_CONFIGS)} configs reproduce metrics.csv byte-identically")


def test_a9_oracle_sampler_agreement():
    t0 = time.perf_counter()
    results = check_sampler_agreement(policies=20, episodes=100_000, seed=17)
    assert all(r.passed for r in results), [r.detail for r in results]
    elapsed = time.perf_counter() - t0
    print(f"[A9] PASS: {results[0].name}: {results[0].detail} ({elapsed:.1f}s)")
