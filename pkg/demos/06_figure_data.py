"""Export plot-ready curves from a small multi-seed comparison.

Trains two estimators on two seeds each (short runs), then exports the
entropy and gradient-norm curves as long-format CSVs with per-(estimator,
step) mean and sd rows, ready for any plotting tool.
"""

import tempfile
from pathlib import Path

from deptlab.envs import GameSpec
from deptlab.telemetry import export_figure_data
from deptlab.trainer import TrainConfig, train


def main():
    out = Path(tempfile.mkdtemp(prefix="deptlab_demo_"))
    metrics = []
    for estimator in ("dept", "rae"):
        for seed in (42, 100):
            config = TrainConfig(
                steps=60, batch_size=64, eval_every=30, eval_episodes=256,
                seed=seed, estimator=estimator,
            )
            result = train(config, GameSpec(name="SplitPot"), out_dir=out)
            metrics.append(result.metrics_path)
            print(f"trained {result.run_dir.name}")

    for figure in ("entropy_curve", "gradnorm_curve", "winrate_curve"):
        path = out / f"{figure}.csv"
        rows = export_figure_data(metrics, figure, out_path=path)
        aggregates = sum(r["run_id"] in ("mean", "sd") for r in rows)
        print(f"{figure}: {len(rows)} rows ({aggregates} aggregate) -> {path}")

    sample = (out / "entropy_curve.csv").read_text().splitlines()
    print("\nfirst lines of entropy_curve.csv:")
    for line in sample[:5]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
