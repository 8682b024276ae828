import sys
import time

import pytest

from deptlab.envs import GameSpec
from deptlab.trainer import TrainConfig, train

GRID_SEEDS = (42, 100, 200)
GRID_ESTIMATORS = (
    "dept",
    "rae",
    "no_sigma",
    "no_entropy_gate",
    "no_asym",
    "fast_only",
    "slow_only",
)


@pytest.fixture(scope="session")
def splitpot_grid(tmp_path_factory):
    """Full-scale SplitPot runs shared by the end-to-end acceptance tests.

    400 steps, batch 128, seeds 42/100/200, for the full estimator plus every
    comparator the trend tests need. Evaluation uses 4096 episodes per point
    for precision. Returns {(estimator, seed): (RunResult, wall_seconds)}.
    """
    out = tmp_path_factory.mktemp("grid_runs")
    spec = GameSpec(name="SplitPot")
    runs = {}
    for estimator in GRID_ESTIMATORS:
        for seed in GRID_SEEDS:
            config = TrainConfig(
                steps=400,
                batch_size=128,
                eval_every=50,
                eval_episodes=4096,
                seed=seed,
                estimator=estimator,
            )
            t0 = time.perf_counter()
            result = train(config, spec, out_dir=out)
            elapsed = time.perf_counter() - t0
            runs[(estimator, seed)] = (result, elapsed)
            print(f"[grid] {estimator} seed={seed}: {elapsed:.1f}s", file=sys.stderr)
    return runs
