"""Impasse escape, live: dual-scale vs single-EMA training on SplitPot.

A shortened run (150 steps) is enough to watch the single-EMA run sink into
the all-draw attractor (entropy and gradient norm collapse) while the
dual-scale run detects the collapse (lambda rises) and keeps the outcome
distribution and gradient signal alive. Full-scale comparisons live in the
acceptance suite.
"""

from deptlab.envs import GameSpec
from deptlab.trainer import TrainConfig, train

STEPS = 150


def run(estimator):
    config = TrainConfig(
        steps=STEPS, batch_size=128, eval_every=50, eval_episodes=512,
        seed=42, estimator=estimator,
    )
    return train(config, GameSpec(name="SplitPot")).rows


def main():
    runs = {est: run(est) for est in ("dept", "rae")}
    print(f"{'step':>5} | {'entropy':^15} | {'grad norm':^17} | {'draw rate':^15} | lambda")
    print(f"{'':>5} | {'dept':>7}{'rae':>8} | {'dept':>8}{'rae':>9} | {'dept':>7}{'rae':>8} | dept")
    for step in range(25, STEPS + 1, 25):
        d, r = runs["dept"][step - 1], runs["rae"][step - 1]
        print(
            f"{step:5d} | {d['h_match']:7.3f}{r['h_match']:8.3f} "
            f"| {d['grad_norm_clipped']:8.4f}{r['grad_norm_clipped']:9.4f} "
            f"| {d['draw_rate']:7.3f}{r['draw_rate']:8.3f} "
            f"| {d['lambda_0']:.3f}"
        )
    print()
    for est in ("dept", "rae"):
        evals = [(i + 1, row["eval_win_rate"]) for i, row in enumerate(runs[est])
                 if row["eval_win_rate"] is not None]
        track = "  ".join(f"step {s}: {v:.3f}" for s, v in evals)
        print(f"win rate vs the frozen starting policy ({est:4s}): {track}")


if __name__ == "__main__":
    main()
