import math

import pytest
from hypothesis import given, strategies as st

from deptlab.advantage import (
    DualBaselineState,
    EmaBaselineState,
    ablated_advantages,
    asymmetric_value,
    batch_stats,
    dept_advantages,
    dominant_outcome,
    estimate,
    fused_baseline,
    group_advantages,
    intervention,
    make_estimator_state,
    match_entropy,
    rae_advantages,
    stagnation,
    update_bounds,
    update_ema,
    vanilla_advantages,
)
from deptlab.core import Outcome, Trajectory, Turn

LOG3 = math.log(3.0)


def traj(r0, r1, o0, o1, actions=(0, 0)):
    """Synthetic two-turn trajectory with chosen rewards and labels."""
    turns = (Turn(0, 0, 0, actions[0], (0, 1)), Turn(1, 1, 0, actions[1], (0, 1)))
    return Trajectory(turns=turns, rewards=(r0, r1), outcomes=(Outcome(o0), Outcome(o1)))


def draw():
    return traj(0.0, 0.0, Outcome.DRAW, Outcome.DRAW)


def win0():
    return traj(1.0, -1.0, Outcome.WIN, Outcome.LOSS)


class TestUpdateEma:
    def test_convex_combination(self):
        assert update_ema(0.0, 0.5, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_fixed_point(self):
        assert update_ema(0.5, 0.95, 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_midpoint(self):
        assert update_ema(1.0, 0.5, -1.0) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_alpha_and_nonfinite(self):
        with pytest.raises(ValueError):
            update_ema(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            update_ema(float("nan"), 0.5, 1.0)

    @given(
        st.lists(st.floats(-1.5, 1.0), min_size=1, max_size=60),
        st.floats(0.05, 0.95),
    )
    def test_containment(self, rewards, alpha):
        # reward stream in [-1.5, 1], start at 0: baseline never escapes the hull
        b = 0.0
        lo, hi = min(rewards + [0.0]), max(rewards + [0.0])
        for r in rewards:
            b = update_ema(b, alpha, r)
            assert lo - 1e-12 <= b <= hi + 1e-12


class TestMatchEntropy:
    def test_uniform_is_exactly_one(self):
        assert match_entropy((7, 7, 7)) == 1.0

    def test_degenerate_is_zero(self):
        assert match_entropy((12, 0, 0)) == 0.0

    def test_two_class_value(self):
        assert match_entropy((1, 1, 0)) == pytest.approx(math.log(2) / LOG3, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            match_entropy((0, 0, 0))

    @given(st.lists(st.integers(0, 1000), min_size=3, max_size=3))
    def test_range(self, counts):
        if sum(counts) == 0:
            return
        assert 0.0 <= match_entropy(counts) <= 1.0


class TestStagnation:
    def test_zero_gap(self):
        assert stagnation(0.3, 0.3) == 1.0

    def test_half_gap(self):
        assert stagnation(0.5, 0.0) == pytest.approx(0.5378828427399902, abs=1e-9)

    def test_large_gap(self):
        assert stagnation(5.0, 0.0) == pytest.approx(9.0796e-05, rel=1e-3)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            stagnation(float("inf"), 0.0)


class TestIntervention:
    def test_full(self):
        assert intervention(1.0, 0.0) == 1.0

    def test_healthy_exploration_is_bitwise_zero(self):
        for sigma in (1.0, 0.123, 0.999):
            lam = intervention(sigma, 1.0)
            assert lam == 0.0

    def test_quarter(self):
        assert intervention(0.5, 0.75) == pytest.approx(0.25, abs=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            intervention(0.5, 1.2)
        with pytest.raises(ValueError):
            intervention(0.0, 0.5)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_entropy(self, sigma, h):
        if h < 1.0:
            assert intervention(sigma, h) >= intervention(sigma, min(1.0, h + 0.1))

    @given(st.floats(0.0, 2.4), st.floats(0.01, 0.1), st.floats(0.0, 0.99))
    def test_strictly_decreasing_in_baseline_gap(self, gap, delta, h):
        # wider fast/slow divergence lowers sigma and, at fixed entropy, lambda
        near = stagnation(gap, 0.0)
        far = stagnation(gap + delta, 0.0)
        assert far < near
        assert intervention(far, h) < intervention(near, h)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 0.9), st.floats(0.01, 0.1))
    def test_strictly_decreasing_in_entropy(self, sigma, h, delta):
        assert intervention(sigma, h + delta) < intervention(sigma, h)


class TestBounds:
    def test_first_update_seeds_both(self):
        state = DualBaselineState()
        state.b_fast[0] = 0.5
        update_bounds(state, 0)
        assert state.v_max[0] == 0.5 and state.v_min[0] == 0.5

    def test_running_max(self):
        state = DualBaselineState()
        state.b_fast[0] = 0.5
        update_bounds(state, 0)
        state.b_fast[0] = 0.7
        update_bounds(state, 0)
        assert state.v_max[0] == 0.7 and state.v_min[0] == 0.5

    def test_global_scope_shares_bounds(self):
        state = DualBaselineState(bounds_scope="global")
        state.b_fast[0] = 0.4
        update_bounds(state, 0)
        state.b_fast[1] = -0.3
        update_bounds(state, 1)
        assert state.v_max[1] == 0.4 and state.v_min[0] == -0.3

    @given(st.lists(st.floats(-1.5, 1.0), min_size=1, max_size=50))
    def test_monotone_and_sandwich(self, rewards):
        state = DualBaselineState()
        prev_max, prev_min = -math.inf, math.inf
        for r in rewards:
            state.b_fast[0] = update_ema(float(state.b_fast[0]), 0.5, r)
            update_bounds(state, 0)
            assert state.v_max[0] >= max(prev_max, state.b_fast[0]) - 1e-12
            assert state.v_min[0] <= min(prev_min, state.b_fast[0]) + 1e-12
            prev_max, prev_min = state.v_max[0], state.v_min[0]

    def test_uninitialized_bounds_raise(self):
        state = DualBaselineState()
        with pytest.raises(ValueError):
            state.bounds(0)
        with pytest.raises(ValueError):
            asymmetric_value(Outcome.WIN, Outcome.WIN, float("nan"), float("nan"))


class TestAsymmetricValue:
    def test_dominant_gets_upper(self):
        assert asymmetric_value(Outcome.WIN, Outcome.WIN, 0.8, -0.6) == 0.8

    def test_rare_gets_lower(self):
        assert asymmetric_value(Outcome.DRAW, Outcome.WIN, 0.8, -0.6) == -0.6

    def test_all_dominant_batch(self):
        vals = [asymmetric_value(Outcome.DRAW, Outcome.DRAW, 0.5, -0.5) for _ in range(4)]
        assert vals == [0.5] * 4


class TestFusedBaseline:
    def test_zero_lambda_is_bitwise_slow(self):
        b_slow = 0.1 + 0.2  # a value with representation noise
        assert fused_baseline(0.0, b_slow, 123.456) == b_slow

    def test_one_lambda_is_asym(self):
        assert fused_baseline(1.0, 0.2, 0.8) == 0.8

    def test_midpoint(self):
        assert fused_baseline(0.5, 0.2, 0.8) == pytest.approx(0.5, abs=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            fused_baseline(1.5, 0.0, 0.0)


class TestDominantOutcome:
    def test_plain_majority(self):
        assert dominant_outcome((10, 2, 0)) == Outcome.WIN

    def test_tie_break_order(self):
        assert dominant_outcome((5, 5, 2)) == Outcome.WIN
        assert dominant_outcome((0, 3, 3)) == Outcome.DRAW

    def test_draw_majority(self):
        assert dominant_outcome((0, 12, 0)) == Outcome.DRAW

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dominant_outcome((0, 0, 0))


class TestBatchStats:
    def test_counts_and_dominant(self):
        stats = batch_stats([draw(), draw(), win0()])
        assert stats.counts[0].tolist() == [1, 2, 0]
        assert stats.counts[1].tolist() == [0, 2, 1]
        assert stats.o_dom == (Outcome.DRAW, Outcome.DRAW)

    def test_pooled_entropy_counts_both_roles(self):
        stats = batch_stats([win0()])
        # pooled counts (1 win, 0 draw, 1 loss): two-class entropy
        assert stats.h_match == pytest.approx(math.log(2) / LOG3, abs=1e-12)
        assert stats.h_role[0] == 0.0 and stats.h_role[1] == 0.0


class TestDeptAdvantages:
    def converged_state(self, v_max=0.5, v_min=-0.5):
        state = DualBaselineState()
        state.v_max[:] = v_max
        state.v_min[:] = v_min
        state.initialized[:] = True
        return state

    def test_all_draw_impasse_gets_upper_bound_baseline(self):
        # converged all-draw batch: H=0, sigma=1, lambda=1; every trajectory is
        # dominant so its baseline is v_max and its advantage -v_max, exactly
        batch = [draw() for _ in range(4)]
        records, state, stats, signal = dept_advantages(batch, self.converged_state())
        assert stats.h_match == 0.0
        assert signal.sigma == (1.0, 1.0) and signal.lam == (1.0, 1.0)
        for rec in records:
            assert rec.baselines == (0.5, 0.5)
            assert rec.advantages == (-0.5, -0.5)

    def test_rare_trajectory_amplified_per_batch_mean(self):
        # shared per-batch lambda: rare label gets v_min, so the same-reward
        # contrast is exactly lambda * (v_max - v_min)
        rare = traj(0.0, 0.0, Outcome.WIN, Outcome.LOSS)  # opponent-fault style labels
        batch = [draw() for _ in range(127)] + [rare]
        records, state, stats, signal = dept_advantages(
            batch, self.converged_state(), baseline_update="per_batch_mean"
        )
        lam = signal.lam[0]
        gap = records[-1].advantages[0] - records[0].advantages[0]
        assert gap == pytest.approx(lam * 1.0, abs=1e-12)
        assert gap > 0

    def test_advantage_identity(self):
        batch = [draw(), win0(), draw()]
        records, *_ = dept_advantages(batch, DualBaselineState())
        for rec in records:
            for p in (0, 1):
                assert rec.advantages[p] == rec.rewards[p] - rec.baselines[p]

    def test_lambda_zero_path_keeps_slow_baseline_bitwise(self):
        # equal counts give H=1 exactly, so lambda is 0 and the fused baseline
        # must be the slow EMA itself
        batch = [
            traj(1.0, -1.0, Outcome.WIN, Outcome.LOSS),
            traj(0.0, 0.0, Outcome.DRAW, Outcome.DRAW),
            traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN),
        ]
        state = DualBaselineState()
        shadow = EmaBaselineState(alpha=0.95)
        records, state, stats, signal = dept_advantages(batch, state)
        assert stats.h_match == 1.0
        assert signal.lam == (0.0, 0.0)
        for rec, t in zip(records, batch):
            for p in (0, 1):
                shadow.b[p] = update_ema(float(shadow.b[p]), 0.95, t.rewards[p])
                assert rec.baselines[p] == float(shadow.b[p])

    def test_reduction_to_slow_ema_stream(self):
        # with lambda pinned at 0 throughout (H=1 batches), the advantages are
        # exactly R minus the post-update slow EMA, i.e. the single-baseline
        # estimator evaluated after its own update
        state = DualBaselineState()
        b = 0.0
        for _ in range(3):
            batch = [
                traj(1.0, -1.0, Outcome.WIN, Outcome.LOSS),
                traj(0.0, 0.0, Outcome.DRAW, Outcome.DRAW),
                traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN),
            ]
            records, state, _, signal = dept_advantages(batch, state)
            assert signal.lam == (0.0, 0.0)
            for rec, t in zip(records, batch):
                b = update_ema(b, 0.95, t.rewards[0])
                assert rec.advantages[0] == t.rewards[0] - b

    def test_per_batch_mean_updates_once(self):
        batch = [win0(), win0()]
        state = DualBaselineState()
        dept_advantages(batch, state, baseline_update="per_batch_mean")
        assert float(state.b_fast[0]) == pytest.approx(0.5, abs=1e-12)  # one EMA step on mean 1.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            dept_advantages([draw()], DualBaselineState(), baseline_update="sometimes")


class TestRaeAdvantages:
    def test_first_trajectory_full_reward(self):
        records, _ = rae_advantages([win0()], EmaBaselineState(alpha=0.95))
        assert records[0].advantages[0] == 1.0

    def test_converged_all_draw_vanishes(self):
        state = EmaBaselineState(alpha=0.95)
        records = None
        for _ in range(50):
            records, state = rae_advantages([draw() for _ in range(4)], state)
        assert abs(records[-1].advantages[0]) < 1e-12

    def test_loss_after_win_streak(self):
        state = EmaBaselineState(alpha=0.95)
        state.b[0] = 0.9
        records, _ = rae_advantages([traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN)], state)
        assert records[0].advantages[0] == pytest.approx(-1.9, abs=1e-12)

    def test_baseline_updated_after_each_trajectory(self):
        state = EmaBaselineState(alpha=0.5)
        records, state = rae_advantages([win0(), win0()], state)
        assert records[0].advantages[0] == 1.0
        assert records[1].advantages[0] == pytest.approx(0.5, abs=1e-12)
        assert float(state.b[0]) == pytest.approx(0.75, abs=1e-12)


class TestGroupAdvantages:
    def test_all_equal_rewards_zero(self):
        records = group_advantages([draw() for _ in range(6)])
        assert all(rec.advantages == (0.0, 0.0) for rec in records)

    def test_plus_minus_one_normalization(self):
        records = group_advantages([win0(), traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN)])
        assert records[0].advantages[0] == pytest.approx(1.0, rel=1e-6)
        assert records[1].advantages[0] == pytest.approx(-1.0, rel=1e-6)

    def test_mean_zero(self):
        batch = [win0(), draw(), draw(), traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN)]
        records = group_advantages(batch)
        for p in (0, 1):
            assert abs(sum(rec.advantages[p] for rec in records)) < 1e-9

    def test_singleton_warns_and_zeroes(self):
        with pytest.warns(UserWarning):
            records = group_advantages([win0()])
        assert records[0].advantages == (0.0, 0.0)

    def test_advantage_identity_holds(self):
        records = group_advantages([win0(), draw()])
        for rec in records:
            for p in (0, 1):
                assert rec.advantages[p] == rec.rewards[p] - rec.baselines[p]


class TestAblations:
    def h0_batch(self):
        return [draw() for _ in range(8)]

    def test_no_entropy_gate_ignores_diversity(self):
        # equal counts (H=1) would zero the gated coefficient; without the
        # gate it equals sigma, which is 1 for converged baselines
        batch = [
            traj(1.0, -1.0, Outcome.WIN, Outcome.LOSS),
            traj(0.0, 0.0, Outcome.DRAW, Outcome.DRAW),
            traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN),
        ]
        state = DualBaselineState()
        _, _, stats, signal = ablated_advantages(
            batch, state, "no_entropy_gate", baseline_update="per_batch_mean"
        )
        assert stats.h_match == 1.0
        sig = stagnation(float(state.b_fast[0]), float(state.b_slow[0]))
        assert signal.lam[0] == sig

    def test_no_sigma_ignores_drift(self):
        # with a large baseline gap, the full coefficient would shrink; the
        # ablation keeps lambda = sqrt(1 - H) regardless
        batch = self.h0_batch()
        state = DualBaselineState()
        state.b_fast[:] = 0.9  # pretend rapid drift happened
        state.initialized[:] = True
        state.v_max[:] = 0.9
        state.v_min[:] = 0.0
        _, _, stats, signal = ablated_advantages(
            batch, state, "no_sigma", baseline_update="per_batch_mean"
        )
        assert signal.lam[0] == pytest.approx(math.sqrt(1.0 - stats.h_match), abs=1e-12)

    def test_no_asym_always_uses_slow_baseline(self):
        batch = self.h0_batch()
        state = DualBaselineState()
        state.v_max[:] = 5.0
        state.v_min[:] = -5.0
        state.initialized[:] = True
        records, state, _, _ = ablated_advantages(batch, state, "no_asym")
        for rec in records:
            assert abs(rec.baselines[0]) < 1e-12  # slow EMA of zeros stays 0

    def test_fast_only_reduces_to_single_ema(self):
        batch = [win0(), draw(), traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN), win0()]
        rec_a, *_ = ablated_advantages(batch, EmaBaselineState(alpha=0.5), "fast_only")
        rec_b, _ = rae_advantages(batch, EmaBaselineState(alpha=0.5))
        for a, b in zip(rec_a, rec_b):
            assert a.advantages == b.advantages

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            ablated_advantages(self.h0_batch(), DualBaselineState(), "no_everything")


class TestEstimatorDispatch:
    def test_all_estimators_produce_records(self):
        batch = [win0(), draw(), traj(-1.0, 1.0, Outcome.LOSS, Outcome.WIN)]
        for name in ("dept", "rae", "grpo", "vanilla", "fast_only", "slow_only",
                     "no_sigma", "no_entropy_gate", "no_asym"):
            state = make_estimator_state(name)
            records, stats, signal, state = estimate(name, batch, state)
            assert len(records) == len(batch)
            for rec in records:
                for p in (0, 1):
                    assert rec.advantages[p] == rec.rewards[p] - rec.baselines[p]

    def test_vanilla_is_raw_reward(self):
        records = vanilla_advantages([win0()])
        assert records[0].advantages == (1.0, -1.0)

    def test_unknown_estimator_rejected(self):
        with pytest.raises(ValueError):
            make_estimator_state("ppo")
        with pytest.raises(ValueError):
            estimate("ppo", [draw()], None)

    def test_alpha_ordering_enforced(self):
        with pytest.raises(ValueError):
            DualBaselineState(alpha_fast=0.95, alpha_slow=0.5)
