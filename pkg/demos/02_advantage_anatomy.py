"""Anatomy of the dual-scale estimator on a hand-built collapsed batch.

Builds the textbook impasse: baselines converged to the all-draw reward,
historical value bounds spread from earlier training, one rare outcome in a
batch of draws. Prints every intermediate quantity (entropy, stagnation,
intervention coefficient, asymmetric targets) and contrasts the reshaped
advantages with what the single-EMA estimator produces: zeros.
"""

from deptlab.advantage import (
    DualBaselineState,
    EmaBaselineState,
    dept_advantages,
    rae_advantages,
)
from deptlab.core import Outcome, Trajectory, Turn


def synthetic(r0, r1, o0, o1):
    turns = (Turn(0, 0, 0, 0, (0, 1)), Turn(1, 1, 0, 1, (0, 1)))
    return Trajectory(turns=turns, rewards=(r0, r1), outcomes=(o0, o1))


def main():
    # 31 self-play draws plus one rare episode where player 1 blundered into
    # an illegal move: player 0 still carries reward 0 but is labeled a winner
    batch = [synthetic(0.0, 0.0, Outcome.DRAW, Outcome.DRAW) for _ in range(31)]
    batch.append(synthetic(0.0, -1.5, Outcome.WIN, Outcome.LOSS))

    state = DualBaselineState()
    state.v_max[:] = 0.6   # historical highs from the early exploration phase
    state.v_min[:] = -0.4
    state.initialized[:] = True

    records, state, stats, signal = dept_advantages(
        batch, state, baseline_update="per_batch_mean"
    )

    print("batch composition: 31 draws + 1 rare win-by-opponent-fault")
    print(f"outcome counts per role : {stats.counts.tolist()}")
    print(f"pooled match entropy    : {stats.h_match:.4f}")
    print(f"dominant outcome        : {[o.name for o in stats.o_dom]}")
    print(f"stagnation sigma        : {signal.sigma[0]:.4f} (baselines converged)")
    print(f"intervention lambda     : {signal.lam[0]:.4f}")
    print(f"value bounds role 0     : [{state.v_min[0]:.2f}, {state.v_max[0]:.2f}]")
    print()
    print("reshaped advantages (role 0):")
    print(f"  dominant draw  : {records[0].advantages[0]:+.4f}  "
          f"(baseline pulled to v_max -> pushes the stagnant strategy down)")
    print(f"  rare outcome   : {records[-1].advantages[0]:+.4f}  "
          f"(baseline pulled to v_min -> amplifies the rare direction)")
    gap = records[-1].advantages[0] - records[0].advantages[0]
    print(f"  contrast       : {gap:.4f} = lambda * (v_max - v_min) "
          f"= {signal.lam[0]:.4f} * {state.v_max[0] - state.v_min[0]:.2f}")
    print()

    rae_records, _ = rae_advantages(batch, EmaBaselineState(alpha=0.95))
    print("single-EMA advantages on the same batch (role 0):")
    print(f"  dominant draw  : {rae_records[0].advantages[0]:+.4f}")
    print(f"  rare outcome   : {rae_records[-1].advantages[0]:+.4f}")
    print("  every advantage is zero: the gradient signal has vanished")


if __name__ == "__main__":
    main()
