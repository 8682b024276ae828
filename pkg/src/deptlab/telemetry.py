"""Metrics persistence, run manifests, figure-data exports, significance tests.

One CSV per run with a fixed header, one row per training step. Numbers are
written in shortest round-trip decimal form and absent values as empty cells
(never zeros), so parsing a file reproduces the emitted rows exactly.

Column notes: ``h_match`` is the normalized entropy of the pooled batch
outcome labels; ``sigma_*``/``lambda_*`` and the baseline/bound columns are
end-of-batch estimator state (blank for estimators without them);
``win/draw/loss_rate`` are role 0's outcome rates in the training batch;
``grad_norm_raw``/``grad_norm_clipped`` bracket the global-norm clip;
``eval_win_rate`` is filled only on evaluation steps (vs the step-0
snapshot).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from . import __version__

COLUMNS = (
    "step",
    "reward_mean",
    "game_len_mean",
    "h_match",
    "sigma_0",
    "sigma_1",
    "lambda_0",
    "lambda_1",
    "b_fast_0",
    "b_fast_1",
    "b_slow_0",
    "b_slow_1",
    "v_max_0",
    "v_min_0",
    "v_max_1",
    "v_min_1",
    "grad_norm_raw",
    "grad_norm_clipped",
    "win_rate",
    "draw_rate",
    "loss_rate",
    "eval_win_rate",
)

FIGURES = ("entropy_curve", "gradnorm_curve", "winrate_curve", "intervention_curve")

_FIGURE_COLUMNS = {
    "entropy_curve": "h_match",
    "gradnorm_curve": "grad_norm_clipped",
    "winrate_curve": "eval_win_rate",
}


def format_value(v) -> str:
    """Shortest exact decimal for floats; empty string for absent values."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def parse_value(s: str):
    if s == "":
        return None
    return float(s)


class MetricsWriter:
    """Append-only writer for one run's metrics stream.

    The header goes out at open; every appended row is flushed to disk before
    returning, so a crashed run leaves all completed steps behind.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._fh = open(self.path, "w")
        self._fh.write(",".join(COLUMNS) + "\n")
        self._flush()

    def append(self, row: dict) -> None:
        missing = [c for c in COLUMNS if c not in row]
        if missing:
            raise ValueError(f"metrics row is missing columns: {missing}")
        if self._fh is None:
            raise ValueError("writer is closed")
        cells = []
        for c in COLUMNS:
            v = row[c]
            if v is not None and not math.isfinite(float(v)):
                raise ValueError(f"non-finite value for column {c}")
            cells.append(str(int(v)) if c == "step" else format_value(v))
        self._fh.write(",".join(cells) + "\n")
        self._flush()

    def _flush(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path: Path | str) -> list[dict]:
    """Parse a metrics CSV back into row dicts (None for blank cells)."""
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != COLUMNS:
        raise ValueError(f"{path}: unexpected metrics header")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {c: parse_value(s) for c, s in zip(COLUMNS, cells)}
        row["step"] = int(cells[0])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------


def flatten_run_config(config, spec) -> dict:
    """Echo a run's effective configuration as flat CLI-schema keys."""
    payoff = spec.payoff_matrix
    table = spec.outcome_table
    return {
        "env.name": spec.name,
        "env.pot_size": spec.pot_size,
        "env.vocab_size": spec.vocab_size,
        "env.max_turns": spec.max_turns,
        "env.payoff_matrix": None if payoff is None else [list(r) for r in payoff],
        "env.outcome_table": None
        if table is None
        else [[list(c) for c in r] for r in table],
        "steps": config.steps,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "clip_norm": config.clip_norm,
        "ppo_clip": config.ppo_clip,
        "optimizer": config.optimizer,
        "eval_every": config.eval_every,
        "eval_episodes": config.eval_episodes,
        "seed": config.seed,
        "advantage.estimator": config.estimator,
        "alpha_fast": config.alpha_fast,
        "alpha_slow": config.alpha_slow,
        "baseline_update": config.baseline_update,
        "bounds_scope": config.bounds_scope,
        "discount.gamma": config.gamma,
        "policy.masked": config.masked,
    }


def write_manifest_start(path: Path | str, config, spec) -> None:
    """Write the manifest before the first step: version, seed, config echo."""
    lines = ["# deptlab run manifest"]
    lines.append(f"version = {json.dumps(__version__)}")
    lines.append(f"start_time = {json.dumps(_now())}")
    for key, value in flatten_run_config(config, spec).items():
        lines.append(f"{key} = {json.dumps(value)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest_end(
    path: Path | str,
    final_checkpoint: Path | str,
    best_eval_step: Optional[int] = None,
    best_eval_checkpoint: Optional[Path | str] = None,
) -> None:
    """Finalize the manifest after the last step.

    Both the final-step checkpoint and the best-evaluation checkpoint are
    recorded, so downstream comparisons never have to pick one by judgment.
    """
    with open(path, "a") as fh:
        fh.write(f"end_time = {json.dumps(_now())}\n")
        fh.write(f"final_checkpoint = {json.dumps(str(final_checkpoint))}\n")
        if best_eval_step is not None:
            fh.write(f"best_eval_step = {json.dumps(best_eval_step)}\n")
            fh.write(f"best_eval_checkpoint = {json.dumps(str(best_eval_checkpoint))}\n")


def parse_manifest(path: Path | str) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, raw = line.partition(" = ")
        out[key] = json.loads(raw)
    return out


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S")


# ---------------------------------------------------------------------------
# Figure-data exports
# ---------------------------------------------------------------------------


def _intervention_value(row: dict) -> Optional[float]:
    if row["lambda_0"] is None or row["lambda_1"] is None:
        return None
    return 0.5 * (row["lambda_0"] + row["lambda_1"])


def _run_identity(metrics_path: Path) -> tuple[str, str]:
    """(run_id, estimator) from the manifest next to the metrics file."""
    run_id = metrics_path.parent.name or metrics_path.stem
    manifest = metrics_path.parent / "manifest.txt"
    if manifest.exists():
        return run_id, str(parse_manifest(manifest).get("advantage.estimator", "unknown"))
    parts = run_id.split("_")
    return run_id, parts[1] if len(parts) >= 3 else "unknown"


def export_figure_data(
    runs: Sequence[Path | str],
    figure: str,
    out_path: Optional[Path | str] = None,
) -> list[dict]:
    """Long-format (step, run_id, estimator, value) table for one diagnostic.

    Curves: ``entropy_curve`` (h_match), ``gradnorm_curve`` (post-clip
    gradient norm), ``winrate_curve`` (eval win rate, eval steps only) and
    ``intervention_curve`` (mean of the two per-role lambdas). Aggregate rows
    with run_id ``mean`` and ``sd`` (across runs sharing an estimator) are
    appended whenever at least two runs cover a step.
    """
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; expected one of {FIGURES}")
    if len(runs) == 0:
        raise ValueError("no runs given")
    out: list[dict] = []
    grouped: dict[tuple[str, int], list[float]] = {}
    for path in runs:
        path = Path(path)
        rows = read_metrics(path)
        run_id, estimator = _run_identity(path)
        for row in rows:
            if figure == "intervention_curve":
                value = _intervention_value(row)
            else:
                value = row[_FIGURE_COLUMNS[figure]]
            if value is None:
                continue
            out.append(
                {"step": row["step"], "run_id": run_id, "estimator": estimator, "value": value}
            )
            grouped.setdefault((estimator, row["step"]), []).append(value)
    for (estimator, step), values in sorted(grouped.items()):
        out.append({"step": step, "run_id": "mean", "estimator": estimator,
                    "value": float(np.mean(values))})
        if len(values) >= 2:
            out.append({"step": step, "run_id": "sd", "estimator": estimator,
                        "value": float(np.std(values, ddof=1))})
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write("step,run_id,estimator,value\n")
            for row in out:
                fh.write(
                    f"{row['step']},{row['run_id']},{row['estimator']},"
                    f"{format_value(row['value'])}\n"
                )
    return out


# ---------------------------------------------------------------------------
# Significance testing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignificanceReport:
    mean_a: float
    mean_b: float
    p_value: float
    zero_variance: bool


def final_metric(rows: Sequence[dict], metric: str) -> float:
    """Last non-blank value of a column (the final-evaluation number)."""
    for row in reversed(rows):
        if row.get(metric) is not None:
            return float(row[metric])
    raise ValueError(f"metric {metric!r} never recorded")


def significance_report(
    runs_a: dict[int, Sequence[dict]],
    runs_b: dict[int, Sequence[dict]],
    metric: str = "eval_win_rate",
) -> SignificanceReport:
    """Two-sided paired t-test on a final metric, runs paired by seed.

    Needs at least three seeds per side and identical seed sets. When the
    paired differences have zero variance the t statistic is undefined; the
    report then flags it and uses p = 1 for zero mean difference, p ~ 0
    otherwise.
    """
    if set(runs_a) != set(runs_b):
        raise ValueError(f"unpaired seeds: {sorted(runs_a)} vs {sorted(runs_b)}")
    if len(runs_a) < 3:
        raise ValueError("need at least 3 paired runs")
    seeds = sorted(runs_a)
    a = np.array([final_metric(runs_a[s], metric) for s in seeds])
    b = np.array([final_metric(runs_b[s], metric) for s in seeds])
    diffs = a - b
    if np.allclose(diffs.std(ddof=1), 0.0, atol=1e-15):
        p = 1.0 if abs(float(diffs.mean())) < 1e-15 else 0.0
        return SignificanceReport(float(a.mean()), float(b.mean()), p, True)
    tstat, p = sps.ttest_rel(a, b)
    return SignificanceReport(float(a.mean()), float(b.mean()), float(p), False)
