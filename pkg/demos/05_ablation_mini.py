"""Mini ablation grid: which pieces of the estimator carry the weight?

Shortened runs (120 steps, one seed) across the full estimator and its five
ablations, reporting tail entropy and the final evaluation against the frozen
starting policy. The full-scale three-seed grid runs in the acceptance suite.
"""

import numpy as np

from deptlab.envs import GameSpec
from deptlab.trainer import TrainConfig, train

MODES = ("dept", "no_sigma", "no_entropy_gate", "no_asym", "fast_only", "slow_only")

NOTES = {
    "dept": "full estimator",
    "no_sigma": "lambda = sqrt(1-H): intervenes even while still drifting",
    "no_entropy_gate": "lambda = sigma: intervenes even when outcomes are diverse",
    "no_asym": "no value targets: reduces to the slow-EMA baseline",
    "fast_only": "single EMA at the fast decay rate",
    "slow_only": "single EMA at the slow decay rate",
}


def main():
    print(f"{'estimator':<16} {'tail entropy':>12} {'final eval':>11}   note")
    for mode in MODES:
        config = TrainConfig(
            steps=120, batch_size=128, eval_every=40, eval_episodes=1024,
            seed=42, estimator=mode,
        )
        rows = train(config, GameSpec(name="SplitPot")).rows
        h_tail = float(np.mean([r["h_match"] for r in rows[-30:]]))
        final = rows[-1]["eval_win_rate"]
        print(f"{mode:<16} {h_tail:>12.3f} {final:>11.3f}   {NOTES[mode]}")


if __name__ == "__main__":
    main()
